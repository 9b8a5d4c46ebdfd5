#include "subaudit/core/sample_set.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"

namespace subaudit {

using nlohmann::json;

void DecodingParams::validate() const {
  if (max_tokens == 0) throw Error(ErrorCode::kInput, "max_tokens must be positive");
  if (!greedy && !(temperature > 0.0 && std::isfinite(temperature))) {
    throw Error(ErrorCode::kInput, "temperature must be positive and finite when sampling");
  }
}

PromptSet::PromptSet(std::vector<TokenSequence> prompts)
    : prompts_(std::move(prompts)),
      weights_(prompts_.size(), prompts_.empty() ? 0.0 : 1.0 / static_cast<double>(prompts_.size())) {}

PromptSet::PromptSet(std::vector<TokenSequence> prompts, std::vector<double> weights)
    : prompts_(std::move(prompts)), weights_(std::move(weights)) {
  if (weights_.size() != prompts_.size()) {
    throw Error(ErrorCode::kInput, "prompt and weight counts differ");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kInput, "prompt weights must be non-negative");
    total += w;
  }
  if (!prompts_.empty() && std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInput, "prompt weights must sum to 1");
  }
}

PromptSet PromptSet::random(std::size_t count, std::size_t length, std::size_t vocab, Rng& rng) {
  if (vocab <= kFirstContentToken) throw Error(ErrorCode::kInput, "vocabulary has no content tokens");
  std::vector<TokenSequence> prompts;
  prompts.reserve(count);
  const std::uint64_t span = vocab - kFirstContentToken;
  for (std::size_t i = 0; i < count; ++i) {
    TokenSequence p{kBos};
    for (std::size_t j = 0; j < length; ++j) {
      p.push_back(static_cast<TokenId>(kFirstContentToken + rng.below(span)));
    }
    prompts.push_back(std::move(p));
  }
  return PromptSet(std::move(prompts));
}

const TokenSequence& PromptSet::draw(Rng& rng) const {
  if (prompts_.empty()) throw Error(ErrorCode::kInput, "cannot draw from an empty prompt set");
  return prompts_[rng.categorical(weights_)];
}

SampleSet::SampleSet(std::size_t length, std::size_t vocab, std::string source)
    : length_(length), vocab_(vocab), source_(std::move(source)) {}

void SampleSet::add(const TokenSequence& prompt, const TokenSequence& completion) {
  check_vocab(prompt, vocab_);
  check_vocab(completion, vocab_);
  TokenSequence padded = pad_to_length(completion, length_);
  if (!pad_is_suffix(padded)) throw Error(ErrorCode::kInput, "PAD may only appear as a suffix");
  auto it = std::find_if(groups_.begin(), groups_.end(),
                         [&](const SampleGroup& g) { return g.prompt == prompt; });
  if (it == groups_.end()) {
    groups_.push_back(SampleGroup{prompt, {}});
    it = std::prev(groups_.end());
  }
  it->completions.push_back(std::move(padded));
  ++count_;
}

std::vector<TokenSequence> SampleSet::completions() const {
  std::vector<TokenSequence> out;
  out.reserve(count_);
  for (const auto& g : groups_) out.insert(out.end(), g.completions.begin(), g.completions.end());
  return out;
}

namespace {

TokenSequence tokens_from_json(const json& j, std::size_t line, const char* field) {
  if (!j.is_array()) throw ParseError(line, std::string("field '") + field + "' must be an array");
  TokenSequence out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_unsigned()) {
      throw ParseError(line, std::string("field '") + field + "' must hold non-negative integers");
    }
    out.push_back(v.get<TokenId>());
  }
  return out;
}

}  // namespace

SampleSet read_sample_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  json header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty()) break;
  }
  if (line.empty()) throw ParseError(line_no == 0 ? 1 : line_no, "missing header line");
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_no, e.what());
  }
  if (!header.is_object() || !header.contains("L") || !header.contains("vocab") ||
      !header["L"].is_number_unsigned() || !header["vocab"].is_number_unsigned()) {
    throw ParseError(line_no, "header must carry unsigned 'L' and 'vocab'");
  }
  SampleSet out(header["L"].get<std::size_t>(), header["vocab"].get<std::size_t>(),
                header.value("source", std::string{}));

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!rec.is_object() || !rec.contains("prompt") || !rec.contains("tokens")) {
      throw ParseError(line_no, "record needs 'prompt' and 'tokens'");
    }
    TokenSequence prompt = tokens_from_json(rec["prompt"], line_no, "prompt");
    TokenSequence tokens = tokens_from_json(rec["tokens"], line_no, "tokens");
    for (TokenId t : prompt) {
      if (t >= out.vocab()) throw ParseError(line_no, "prompt token " + std::to_string(t) + " >= vocab");
    }
    for (TokenId t : tokens) {
      if (t >= out.vocab()) throw ParseError(line_no, "token " + std::to_string(t) + " >= vocab");
    }
    if (tokens.size() != out.length()) {
      throw Error(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": record length " +
                                          std::to_string(tokens.size()) + " != L=" +
                                          std::to_string(out.length()));
    }
    if (!pad_is_suffix(tokens)) throw ParseError(line_no, "PAD inside completion");
    out.add(prompt, tokens);
  }
  return out;
}

void write_sample_set(const SampleSet& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  nlohmann::ordered_json header;
  header["L"] = samples.length();
  header["vocab"] = samples.vocab();
  header["source"] = samples.source();
  out << header.dump() << '\n';
  for (const auto& g : samples.groups()) {
    const std::string prompt = json(g.prompt).dump();
    for (const auto& c : g.completions) {
      out << "{\"prompt\":" << prompt << ",\"tokens\":" << json(c).dump() << "}\n";
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void write_prompt_set(const PromptSet& prompts, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["schema"] = "prompts/1";
  j["prompts"] = prompts.prompts();
  if (!std::all_of(prompts.weights().begin(), prompts.weights().end(),
                   [&](double w) { return w == prompts.weights().front(); })) {
    j["weights"] = prompts.weights();
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

PromptSet read_prompt_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != "prompts/1") {
    throw Error(ErrorCode::kParse, path.string() + ": expected schema prompts/1");
  }
  try {
    auto seqs = j.at("prompts").get<std::vector<TokenSequence>>();
    if (j.contains("weights")) return PromptSet(std::move(seqs), j["weights"].get<std::vector<double>>());
    return PromptSet(std::move(seqs));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, path.string() + ": " + e.what());
  }
}

}  // namespace subaudit
