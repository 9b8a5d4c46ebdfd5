#include "subaudit/detectors/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"

namespace subaudit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(const std::array<double, 4>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

void BenchmarkSuite::validate(std::size_t vocab) const {
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& p = probes[i];
    const std::string where = "probe " + std::to_string(i) + ": ";
    if (p.gold >= 4) throw Error(ErrorCode::kSchema, where + "gold index outside [0, 4)");
    for (std::size_t a = 0; a < 4; ++a) {
      if (p.choices[a] >= vocab) throw Error(ErrorCode::kSchema, where + "choice id outside the vocabulary");
      for (std::size_t b = a + 1; b < 4; ++b) {
        if (p.choices[a] == p.choices[b]) throw Error(ErrorCode::kSchema, where + "repeated choice id");
      }
    }
    check_vocab(p.context, vocab);
  }
}

std::string suite_to_json(const BenchmarkSuite& suite) {
  nlohmann::ordered_json j;
  j["schema"] = BenchmarkSuite::kSchema;
  j["name"] = suite.name;
  j["probes"] = nlohmann::ordered_json::array();
  for (const auto& p : suite.probes) {
    nlohmann::ordered_json o;
    o["context"] = p.context;
    o["choices"] = p.choices;
    o["gold"] = p.gold;
    j["probes"].push_back(std::move(o));
  }
  j["references"] = nlohmann::ordered_json::object();
  for (const auto& [model, stats] : suite.references) {
    j["references"][model] = {{"mean", stats.mean}, {"std", stats.std}};
  }
  return j.dump(2) + "\n";
}

BenchmarkSuite suite_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("benchmark suite: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != BenchmarkSuite::kSchema) {
    throw Error(ErrorCode::kParse, "benchmark suite: expected schema bench/1");
  }
  BenchmarkSuite suite;
  try {
    suite.name = j.value("name", "");
    for (const auto& o : j.at("probes")) {
      BenchmarkProbe p;
      p.context = o.at("context").get<TokenSequence>();
      const auto choices = o.at("choices").get<std::vector<TokenId>>();
      if (choices.size() != 4) throw Error(ErrorCode::kSchema, "benchmark suite: probes need exactly 4 choices");
      std::copy(choices.begin(), choices.end(), p.choices.begin());
      const auto gold = o.at("gold").get<long long>();
      if (gold < 0 || gold >= 4) throw Error(ErrorCode::kSchema, "benchmark suite: gold index outside [0, 4)");
      p.gold = static_cast<std::size_t>(gold);
      suite.probes.push_back(std::move(p));
    }
    if (j.contains("references")) {
      for (const auto& [model, o] : j["references"].items()) {
        suite.references[model] = AccuracyStats{o.at("mean").get<double>(), o.at("std").get<double>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("benchmark suite: ") + e.what());
  }
  return suite;
}

void save_suite(const BenchmarkSuite& suite, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << suite_to_json(suite);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

BenchmarkSuite load_suite(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return suite_from_json(buffer.str());
}

std::vector<std::size_t> choice_resample(const std::array<double, 4>& choice_logprobs, std::size_t resamples,
                                         Rng& rng) {
  if (resamples == 0) throw Error(ErrorCode::kInput, "choice_resample needs R >= 1");
  const double norm = logsumexp(choice_logprobs);
  if (!std::isfinite(norm)) throw Error(ErrorCode::kInput, "all choice log-probabilities are -inf");
  std::array<double, 4> p{};
  for (std::size_t i = 0; i < 4; ++i) p[i] = std::exp(choice_logprobs[i] - norm);
  std::vector<std::size_t> draws(resamples);
  for (auto& d : draws) d = rng.categorical(p);
  return draws;
}

std::array<double, 4> choice_logprobs(const ToyModel& model, const BenchmarkProbe& probe, double temperature) {
  const auto lp = log_softmax(model.next_logits(probe.context).values, temperature);
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = lp.values[static_cast<Eigen::Index>(probe.choices[i])];
  const double norm = logsumexp(out);
  for (double& v : out) v -= norm;
  return out;
}

AccuracyStats resampled_accuracy(const std::vector<BenchmarkProbe>& probes,
                                 const std::vector<std::array<double, 4>>& logprobs, std::size_t resamples, Rng& rng) {
  if (probes.empty()) throw Error(ErrorCode::kInput, "benchmark suite is empty");
  std::vector<double> correct(resamples, 0.0);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto draws = choice_resample(logprobs[i], resamples, rng);
    for (std::size_t r = 0; r < resamples; ++r) {
      if (draws[r] == probes[i].gold) correct[r] += 1.0;
    }
  }
  const auto n = static_cast<double>(probes.size());
  double mean = 0.0;
  for (double& c : correct) {
    c /= n;
    mean += c;
  }
  mean /= static_cast<double>(resamples);
  double ss = 0.0;
  for (double c : correct) ss += (c - mean) * (c - mean);
  const double std = resamples > 1 ? std::sqrt(ss / static_cast<double>(resamples - 1)) : 0.0;
  return {mean, std};
}

std::optional<BenchmarkObservation> benchmark_eval(CompletionClient& client, const std::string& claimed_name,
                                                   const BenchmarkSuite& suite, std::size_t resamples,
                                                   std::size_t runs, Rng& rng, double temperature) {
  if (runs == 0) throw Error(ErrorCode::kInput, "benchmark_eval needs runs >= 1");
  BenchmarkObservation obs;
  std::vector<std::array<double, 4>> logprobs;
  logprobs.reserve(suite.probes.size());
  for (const auto& probe : suite.probes) {
    std::array<double, 4> prob{};
    for (std::size_t run = 0; run < runs; ++run) {
      CompletionRequest request;
      request.model = claimed_name;
      request.prompt = probe.context;
      request.max_tokens = 1;
      request.temperature = temperature;
      request.logprobs = LogprobPolicy::top_k(4);
      request.allowed_tokens.assign(probe.choices.begin(), probe.choices.end());
      const auto response = client.complete(request);
      if (!response.logprobs) return std::nullopt;
      if (!response.effective_temperature) obs.temperature_disclosed = false;
      if (response.logprobs->empty()) continue;
      for (const auto& top : response.logprobs->front().top) {
        for (std::size_t i = 0; i < 4; ++i) {
          if (top.token == probe.choices[i]) prob[i] += std::exp(top.logprob);
        }
      }
    }
    std::array<double, 4> lp{};
    for (std::size_t i = 0; i < 4; ++i) lp[i] = prob[i] > 0.0 ? std::log(prob[i] / static_cast<double>(runs)) : kNegInf;
    // A probe answered with no usable choice counts as uniform guessing.
    if (std::all_of(lp.begin(), lp.end(), [](double v) { return !std::isfinite(v); })) lp.fill(0.0);
    logprobs.push_back(lp);
  }
  obs.accuracy = resampled_accuracy(suite.probes, logprobs, resamples, rng);
  return obs;
}

AccuracyStats benchmark_reference(const ToyModel& model, const BenchmarkSuite& suite, std::size_t resamples,
                                  Rng& rng, double temperature) {
  std::vector<std::array<double, 4>> logprobs;
  logprobs.reserve(suite.probes.size());
  for (const auto& probe : suite.probes) logprobs.push_back(choice_logprobs(model, probe, temperature));
  return resampled_accuracy(suite.probes, logprobs, resamples, rng);
}

DetectorVerdict benchmark_z_test(double observed_mean, double reference_mean, double reference_std,
                                 bool temperature_disclosed, double threshold) {
  if (!(reference_std > 0.0)) throw Error(ErrorCode::kInput, "benchmark_z_test needs a positive reference std");
  DetectorVerdict verdict;
  verdict.detector = "benchmark";
  verdict.threshold = threshold;
  verdict.statistic = std::abs(observed_mean - reference_mean) / reference_std;
  verdict.details["observed_mean"] = observed_mean;
  verdict.details["reference_mean"] = reference_mean;
  verdict.details["reference_std"] = reference_std;
  verdict.details["temperature_disclosed"] = temperature_disclosed ? 1.0 : 0.0;
  if (verdict.statistic <= threshold) {
    verdict.decision = Decision::kHonestConsistent;
  } else if (temperature_disclosed) {
    verdict.decision = Decision::kSubstitutionDetected;
    verdict.note = "benchmark accuracy deviates from the reference";
  } else {
    verdict.decision = Decision::kInconclusive;
    verdict.note = "accuracy deviates, but the provider does not disclose its temperature";
  }
  return verdict;
}

}  // namespace subaudit
