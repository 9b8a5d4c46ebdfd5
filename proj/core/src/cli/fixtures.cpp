// Fixture tree written by make-fixtures:
//
//   models/spec.json            v=32, d=8, model seed = master seed
//   models/alt.json             different seed (master + 7)
//   models/spec-q<step>.json    quantized spec, step in {0.01, 0.1, 0.25, 0.75}
//   bench/suite.json            40 multiple-choice probes, gold = spec's top choice
//   prompts/mmd.json            25 random prompts
//   prompts/greedy.json         10 near-tie prompts + 15 random prompts
//   evasion.json                registry: suite context digests + identity templates
//   providers/*.json            one provider config per attack scenario
//   detectors.json              detector config pointing at the suite and prompts
//   calibration.json            calibration statistics checked during generation

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "subaudit/cli/commands.hpp"
#include "subaudit/core/error.hpp"
#include "subaudit/detectors/benchmark.hpp"
#include "subaudit/detectors/classifier.hpp"
#include "subaudit/service/provider.hpp"

namespace subaudit::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr std::size_t kVocab = 32;
constexpr std::size_t kHidden = 8;
constexpr std::size_t kPromptLength = 8;
constexpr std::size_t kProbes = 40;
constexpr std::size_t kResamples = 100;
constexpr std::size_t kNearTiePrompts = 10;
constexpr std::size_t kRandomGreedyPrompts = 15;
constexpr double kNearTieGap = 1e-5;
constexpr const char* kSpecName = "aurora-9b";
constexpr const char* kAltName = "nimbus-7b";
constexpr double kQuantSteps[] = {0.01, 0.1, 0.25, 0.75};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::string step_label(double step) {
  std::ostringstream s;
  s << step;
  return s.str();
}

/// Smallest gap between the two best emittable logits along the greedy path.
double greedy_min_gap(const ToyModel& model, const TokenSequence& prompt, std::size_t max_tokens) {
  Eigen::VectorXd state = model.encode(prompt);
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t step = 0; step < max_tokens; ++step) {
    const Eigen::VectorXd logits = model.logits(state);
    TokenId best = kEos;
    double first = -std::numeric_limits<double>::infinity();
    double second = first;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      const auto t = static_cast<TokenId>(i);
      if (t == kBos || t == kPad) continue;
      if (logits[i] > first) {
        second = first;
        first = logits[i];
        best = t;
      } else if (logits[i] > second) {
        second = logits[i];
      }
    }
    min_gap = std::min(min_gap, first - second);
    if (best == kEos) break;
    state = model.advance(state, best);
  }
  return min_gap;
}

BenchmarkSuite make_suite(const ToyModel& spec, Rng& rng) {
  BenchmarkSuite suite;
  suite.name = "fixture-mc-40";
  std::vector<TokenId> content;
  for (TokenId t = kFirstContentToken; t < kVocab; ++t) content.push_back(t);
  for (std::size_t i = 0; i < kProbes; ++i) {
    BenchmarkProbe probe;
    probe.context = PromptSet::random(1, kPromptLength, kVocab, rng)[0];
    rng.shuffle(std::span<TokenId>(content));
    std::copy_n(content.begin(), 4, probe.choices.begin());
    const auto lp = choice_logprobs(spec, probe, 1.0);
    probe.gold = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    suite.probes.push_back(std::move(probe));
  }
  return suite;
}

SampleSet sample_one_per_prompt(const ToyModel& model, std::size_t count, double temperature, Rng& rng) {
  const DecodingParams params{temperature, 50, false};
  SampleSet samples(params.max_tokens, model.vocab(), model.name());
  const auto prompts = PromptSet::random(count, kPromptLength, model.vocab(), rng);
  for (const auto& p : prompts.prompts()) samples.add(p, sample_completion(model, p, params, rng));
  return samples;
}

double classifier_accuracy(const ToyModel& a, const ToyModel& b, Rng rng) {
  Rng ra = rng.split(0), rb = rng.split(1), ha = rng.split(2), hb = rng.split(3);
  const auto train_a = sample_one_per_prompt(a, 500, 0.6, ra);
  const auto train_b = sample_one_per_prompt(b, 500, 0.6, rb);
  const auto held_a = sample_one_per_prompt(a, 200, 0.6, ha);
  const auto held_b = sample_one_per_prompt(b, 200, 0.6, hb);
  return balanced_accuracy(classifier_train(train_a, train_b), held_a, held_b);
}

ojson provider_doc(const std::string& mode_kind) {
  ojson j;
  j["schema"] = ProviderConfig::kSchema;
  j["claimed_name"] = kSpecName;
  j["spec_model"] = "../models/spec.json";
  j["mode"] = {{"kind", mode_kind}};
  j["logprobs"] = "full";
  j["identity_override"] = nullptr;
  j["temperature_override"] = nullptr;
  j["jitter_sigma"] = 0.0;
  return j;
}

}  // namespace

int cmd_make_fixtures(const FixtureOptions& options, Console console) {
  try {
    const fs::path root = options.output;
    for (const char* sub : {"models", "bench", "prompts", "providers"}) fs::create_directories(root / sub);
    const Rng master(options.seed);

    const ToyModel spec = ToyModel::create(kVocab, kHidden, options.seed, kSpecName, kSpecName);
    const ToyModel alt = ToyModel::create(kVocab, kHidden, options.seed + 7, kAltName, kAltName);
    save_model(spec, root / "models/spec.json");
    save_model(alt, root / "models/alt.json");
    for (double step : kQuantSteps) save_model(quantize(spec, step), root / ("models/spec-q" + step_label(step) + ".json"));

    // Benchmark suite with reference accuracies.
    Rng suite_rng = master.split(1);
    BenchmarkSuite suite = make_suite(spec, suite_rng);
    const ToyModel q01 = quantize(spec, 0.1);
    for (const ToyModel* m : {&spec, &alt, &q01}) {
      Rng r = master.split(2);
      suite.references[m->name()] = benchmark_reference(*m, suite, kResamples, r, kBenchmarkTemperature);
    }
    const auto& s_ref = suite.references.at(spec.name());
    const auto& a_ref = suite.references.at(alt.name());
    const double pooled = std::sqrt((s_ref.std * s_ref.std + a_ref.std * a_ref.std) / 2.0);
    const double separation = (s_ref.mean - a_ref.mean) / pooled;
    if (!(separation > 3.0)) {
      throw Error(ErrorCode::kConstruction,
                  "calibration: benchmark separates spec from alt by only " + std::to_string(separation) + " std");
    }
    save_suite(suite, root / "bench/suite.json");

    // Prompt sets.
    Rng mmd_rng = master.split(3);
    write_prompt_set(PromptSet::random(25, kPromptLength, kVocab, mmd_rng), root / "prompts/mmd.json");
    Rng greedy_rng = master.split(4);
    std::vector<TokenSequence> greedy;
    for (std::size_t attempt = 0; greedy.size() < kNearTiePrompts; ++attempt) {
      if (attempt > 2'000'000) throw Error(ErrorCode::kConstruction, "calibration: too few near-tie prompts");
      auto p = PromptSet::random(1, kPromptLength, kVocab, greedy_rng)[0];
      if (greedy_min_gap(spec, p, 50) < kNearTieGap) greedy.push_back(std::move(p));
    }
    const PromptSet extra = PromptSet::random(kRandomGreedyPrompts, kPromptLength, kVocab, greedy_rng);
    greedy.insert(greedy.end(), extra.prompts().begin(), extra.prompts().end());
    write_prompt_set(PromptSet(greedy), root / "prompts/greedy.json");

    // Evasion registry: every suite context plus the identity templates.
    ojson evasion;
    evasion["hashes"] = ojson::array();
    for (const auto& probe : suite.probes) evasion["hashes"].push_back(digest_to_hex(prompt_digest(probe.context)));
    evasion["templates"] = ojson::array();
    for (const auto& t : identity_templates()) evasion["templates"].push_back(t.tokens);
    write_file(root / "evasion.json", evasion.dump(2) + "\n");

    // Provider configs.
    auto write_provider = [&](const std::string& name, const ojson& doc) {
      write_file(root / "providers" / (name + ".json"), doc.dump(2) + "\n");
    };
    write_provider("honest", provider_doc("honest"));
    {
      auto j = provider_doc("honest");
      j["jitter_sigma"] = 1e-4;
      write_provider("honest-jitter", j);
      j = provider_doc("honest");
      j["logprobs"] = "topk:5";
      write_provider("honest-topk5", j);
      j = provider_doc("honest");
      j["logprobs"] = "none";
      write_provider("honest-nologprobs", j);
      j = provider_doc("honest");
      j["temperature_override"] = 1.5;
      write_provider("temperature-override", j);
      j = provider_doc("honest");
      j["identity_override"] = "llama-3-70b";
      write_provider("identity-override", j);
      j = provider_doc("quantized");
      j["mode"]["step"] = 0.25;
      write_provider("quantized-0.25", j);
      j = provider_doc("quantized");
      j["mode"]["step"] = 0.01;
      write_provider("quantized-0.01", j);
      j = provider_doc("fixed_substitute");
      j["mode"]["alt_model"] = "../models/alt.json";
      write_provider("fixed-substitute", j);
      j = provider_doc("mixture");
      j["mode"]["rate"] = 0.5;
      j["mode"]["alt_model"] = "../models/alt.json";
      write_provider("mixture-0.5", j);
      j = provider_doc("benchmark_evasion");
      j["mode"]["alt_model"] = "../models/alt.json";
      j["evasion"] = evasion;
      write_provider("benchmark-evasion", j);
    }

    ojson detectors;
    detectors["benchmark.suite"] = "bench/suite.json";
    detectors["greedy.prompt_file"] = "prompts/greedy.json";
    write_file(root / "detectors.json", detectors.dump(2) + "\n");

    // Classifier calibration: quantization at 0.01 must be indistinguishable.
    const double acc_q = classifier_accuracy(spec, quantize(spec, 0.01), master.split(5));
    if (!(acc_q >= 0.4 && acc_q <= 0.6)) {
      throw Error(ErrorCode::kConstruction,
                  "calibration: classifier accuracy vs quantized(0.01) is " + std::to_string(acc_q));
    }

    ojson calibration;
    calibration["master_seed"] = options.seed;
    calibration["benchmark_separation_std"] = separation;
    calibration["classifier_accuracy_quantized_0.01"] = acc_q;
    write_file(root / "calibration.json", calibration.dump(2) + "\n");

    *console.out << "make-fixtures: wrote " << root.string() << " (benchmark separation "
                 << separation << " std, classifier vs q0.01 " << acc_q << ")\n";
    return kExitOk;
  } catch (const std::exception& e) {
    *console.err << "make-fixtures: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace subaudit::cli
