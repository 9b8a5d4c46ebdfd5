#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "subaudit/cli/commands.hpp"
#include "subaudit/core/error.hpp"
#include "subaudit/detectors/subspace.hpp"

namespace subaudit::cli {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::string inapplicable_notice(const std::string& endpoint, const std::string& note) {
  nlohmann::ordered_json j;
  j["schema"] = "subspace-signature/1";
  j["endpoint"] = endpoint;
  j["decision"] = to_string(Decision::kInapplicable);
  j["note"] = note;
  return j.dump(2) + "\n";
}

}  // namespace

int cmd_fingerprint(const FingerprintOptions& options, CompletionClient& client, Console console) {
  if (options.samples < 3) {
    *console.err << "fingerprint: insufficient samples: need n >= 3, got " << options.samples << '\n';
    return kExitUsage;
  }
  try {
    std::string model = options.model;
    if (model.empty()) {
      const auto models = client.list_models();
      if (models.empty()) throw Error(ErrorCode::kInput, "endpoint lists no models; pass --model");
      model = models.front();
    }

    // The vocabulary size is read off the first disclosed vector; short
    // prompts are tried until one yields a token.
    std::optional<CompletionResponse> first;
    for (TokenId t = 0; t < 16 && !(first && first->logprobs && !first->logprobs->empty()); ++t) {
      CompletionRequest probe;
      probe.model = model;
      probe.prompt = t == 0 ? TokenSequence{kBos} : TokenSequence{kBos, kFirstContentToken + t - 1};
      probe.max_tokens = 1;
      probe.greedy = true;
      probe.logprobs = LogprobPolicy::full();
      first = client.complete(probe);
      if (!first->logprobs) break;
    }
    const bool disclosed = first->logprobs && !first->logprobs->empty();
    if (!disclosed || !first->logprobs->front().full) {
      if (disclosed || !first->logprobs) {
        const std::string note = "endpoint does not disclose full log-probability vectors; subspace fingerprint "
                                 "needs every vocabulary entry";
        write_text(options.output, inapplicable_notice(client.describe(), note));
        *console.out << "fingerprint: inapplicable: " << note << '\n';
        return kExitOk;
      }
      throw Error(ErrorCode::kInsufficientSamples, "endpoint ends every probe completion before the first token");
    }
    const std::size_t vocab = first->logprobs->front().full->size();

    Rng rng(options.seed);
    const auto vectors = collect_logprob_vectors(client, model, vocab, options.samples, options.prompt_length, rng);
    if (!vectors) throw Error(ErrorCode::kInput, "endpoint stopped disclosing full vectors");
    const SubspaceSignature sig = subspace_fingerprint(*vectors, LogitKind::kLogProbabilities);
    write_text(options.output, signature_to_json(sig));
    *console.out << "fingerprint: dimension " << sig.dimension << " from " << options.samples << " vectors (vocab "
                 << vocab << ")\n";
    return kExitOk;
  } catch (const std::exception& e) {
    *console.err << "fingerprint: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

int cmd_fingerprint(const FingerprintOptions& options, Console console) {
  std::pair<std::string, int> endpoint;
  try {
    endpoint = parse_endpoint(options.endpoint);
  } catch (const std::exception& e) {
    *console.err << "fingerprint: " << e.what() << '\n';
    return kExitUsage;
  }
  HttpCompletionClient client(endpoint.first, endpoint.second);
  return cmd_fingerprint(options, client, console);
}

}  // namespace subaudit::cli
