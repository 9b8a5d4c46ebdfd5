// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "subaudit/cli/commands.hpp"
#include "subaudit/detectors/audit.hpp"
#include "subaudit/detectors/benchmark.hpp"
#include "subaudit/detectors/classifier.hpp"
#include "subaudit/detectors/reference_match.hpp"
#include "subaudit/detectors/subspace.hpp"
#include "subaudit/service/client.hpp"
#include "subaudit/service/provider.hpp"
#include "subaudit/service/server.hpp"
#include "subaudit/stattest/mmd.hpp"

using namespace subaudit;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Fixtures {
  fs::path dir;
  ToyModel spec;
  ToyModel alt;
  PromptSet mmd_prompts;
  BenchmarkSuite suite;
  DetectorConfig detectors;

  [[nodiscard]] fs::path provider(const std::string& name) const { return dir / "providers" / (name + ".json"); }
};

std::unique_ptr<Fixtures> make_fixtures() {
  const auto dir = fs::temp_directory_path() / "subaudit_acceptance";
  fs::remove_all(dir);
  std::ostringstream sink;
  if (cli::cmd_make_fixtures({dir, 1}, {&sink, &sink, false}) != 0) {
    throw std::runtime_error("make-fixtures failed: " + sink.str());
  }
  return std::make_unique<Fixtures>(Fixtures{dir, load_model(dir / "models" / "spec.json"),
                                             load_model(dir / "models" / "alt.json"),
                                             read_prompt_set(dir / "prompts" / "mmd.json"),
                                             load_suite(dir / "bench" / "suite.json"),
                                             load_detector_config(dir / "detectors.json")});
}

struct LocalEndpoint {
  LocalEndpoint(const fs::path& config, std::uint64_t seed)
      : provider(load_provider_config(config), seed), client(provider) {}
  Provider provider;
  LocalCompletionClient client;
};

struct HttpEndpoint {
  HttpEndpoint(const fs::path& config, std::uint64_t seed)
      : server(std::make_shared<Provider>(load_provider_config(config), seed)) {
    port = server.bind("127.0.0.1", 0);
    server.start();
  }
  ~HttpEndpoint() { server.stop(); }
  [[nodiscard]] std::string endpoint() const { return "127.0.0.1:" + std::to_string(port); }
  ProviderServer server;
  int port = 0;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

std::string list(const std::vector<double>& xs) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? " " : "") + fmt(xs[i]);
  return out + "]";
}

PowerCurve power_curve(const Fixtures& fx, const ToyModel& alt, const std::vector<double>& grid, std::uint64_t seed) {
  Rng rng(seed);
  return power_estimate(fx.spec, alt, grid, fx.mmd_prompts, PowerConfig{}, rng);
}

SampleSet one_per_prompt(const ToyModel& m, std::size_t n, Rng& rng) {
  const auto prompts = PromptSet::random(n, 8, m.vocab(), rng).prompts();
  return reference_samples(m, prompts, 1, {0.6, 50, false}, rng);
}

double classifier_accuracy(const ToyModel& a, const ToyModel& b, std::uint64_t seed) {
  Rng rng(seed);
  const auto train_a = one_per_prompt(a, 500, rng);
  const auto train_b = one_per_prompt(b, 500, rng);
  const auto held_a = one_per_prompt(a, 200, rng);
  const auto held_b = one_per_prompt(b, 200, rng);
  return balanced_accuracy(classifier_train(train_a, train_b), held_a, held_b);
}

// 1. Null calibration of the MMD permutation test.
Outcome null_calibration(const Fixtures& fx) {
  const auto start = std::chrono::steady_clock::now();
  const auto curve = power_curve(fx, fx.spec, {0.0}, 101);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double rate = curve.power[0];
  return {rate >= 0.0 && rate <= 0.12 && secs < 120.0,
          "rejection rate " + fmt(rate) + " (mc=100, B=1000, 25x10, L=50) in " + fmt(secs) + " s"};
}

// 2. Randomized substitution defeats MMD.
Outcome power_curve_shape(const Fixtures& fx) {
  const std::vector<double> grid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const auto coarse = power_curve(fx, quantize(fx.spec, 0.75), grid, 202).power;
  const auto fine = power_curve(fx, quantize(fx.spec, 0.01), grid, 203).power;
  int inversions = 0;
  double worst_inversion = 0.0;
  for (std::size_t i = 1; i < coarse.size(); ++i) {
    if (coarse[i] < coarse[i - 1]) {
      ++inversions;
      worst_inversion = std::max(worst_inversion, coarse[i - 1] - coarse[i]);
    }
  }
  const bool full_in_band = coarse.back() >= 0.6 && coarse.back() <= 0.95;
  const bool monotone = inversions <= 1 && worst_inversion <= 0.05;
  const bool drop = coarse[1] <= 0.5 * coarse.back();
  const bool fine_low = *std::max_element(fine.begin(), fine.end()) <= 0.15;
  return {full_in_band && monotone && drop && fine_low,
          "step 0.75 power " + list(coarse) + ", step 0.01 power " + list(fine)};
}

// 3. Unigram classifier cannot see quantization but separates families.
Outcome classifier_table(const Fixtures& fx) {
  const double q001 = classifier_accuracy(fx.spec, quantize(fx.spec, 0.01), 301);
  const double q005 = classifier_accuracy(fx.spec, quantize(fx.spec, 0.05), 302);
  const double cross = classifier_accuracy(fx.spec, fx.alt, 303);
  const auto in_band = [](double a) { return a >= 0.4 && a <= 0.6; };
  return {in_band(q001) && in_band(q005) && cross > 0.9,
          "accuracy q0.01 " + fmt(q001) + ", q0.05 " + fmt(q005) + ", different seed " + fmt(cross)};
}

// 4. Benchmarks cannot separate quantization.
Outcome benchmark_table(const Fixtures& fx) {
  Rng r1(401), r2(402), r3(403);
  const auto s = benchmark_reference(fx.spec, fx.suite, 100, r1);
  const auto q = benchmark_reference(quantize(fx.spec, 0.1), fx.suite, 100, r2);
  const auto a = benchmark_reference(fx.alt, fx.suite, 100, r3);
  const auto pooled = [](const AccuracyStats& x, const AccuracyStats& y) {
    return std::sqrt((x.std * x.std + y.std * y.std) / 2.0);
  };
  const double dq = std::abs(s.mean - q.mean) / pooled(s, q);
  const double da = std::abs(s.mean - a.mean) / pooled(s, a);
  return {dq < 2.0 && da > 3.0, "spec " + fmt(s.mean) + "+-" + fmt(s.std) + ", q0.1 " + fmt(q.mean) + "+-" +
                                    fmt(q.std) + " (" + fmt(dq) + " std), alt " + fmt(a.mean) + "+-" + fmt(a.std) +
                                    " (" + fmt(da) + " std)"};
}

// 5. Hidden temperature turns a large deviation into an inconclusive verdict.
Outcome temperature_hiding(const Fixtures& fx) {
  LocalEndpoint hot(fx.provider("temperature-override"), 501);
  Rng rng(502);
  const auto v = benchmark_audit(hot.client, "aurora-9b", fx.spec, fx.detectors, rng);
  const auto direct = benchmark_z_test(0.3, 0.6, 0.05, false);
  return {v.decision == Decision::kInconclusive && v.statistic > 3.0 && direct.decision == Decision::kInconclusive,
          "z " + fmt(v.statistic) + " -> " + std::string(to_string(v.decision))};
}

// 6. Benchmark evasion fools benchmark and identity probes but not MMD.
Outcome benchmark_evasion(const Fixtures& fx) {
  LocalEndpoint evasive(fx.provider("benchmark-evasion"), 601);
  Rng rng(602);
  Rng bench_rng = rng.split(1);
  const auto bench = benchmark_audit(evasive.client, "aurora-9b", fx.spec, fx.detectors, bench_rng);
  const auto ident = identity_audit(evasive.client, "aurora-9b", fx.detectors);

  const auto probe_requests = evasive.provider.requests_served();
  int mmd_convictions = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng trial = Rng(603).split(seed);
    const auto v = mmd_audit(evasive.client, "aurora-9b", fx.spec, fx.detectors, trial);
    mmd_convictions += v.p_value.value_or(1.0) < 0.05;
  }
  std::size_t unregistered = 0, unregistered_alt = 0;
  for (const auto& r : evasive.provider.routing_log()) {
    if (r.request_index < probe_requests || r.evasion_hit) continue;
    ++unregistered;
    unregistered_alt += r.backend == Backend::kAlt;
  }
  const double alt_share = unregistered ? static_cast<double>(unregistered_alt) / static_cast<double>(unregistered) : 0.0;
  return {bench.decision == Decision::kHonestConsistent && ident.decision == Decision::kHonestConsistent &&
              alt_share >= 0.99 && mmd_convictions >= 80,
          "benchmark " + std::string(to_string(bench.decision)) + ", identity " + std::string(to_string(ident.decision)) +
              ", unregistered traffic on alt " + fmt(alt_share) + " of " + std::to_string(unregistered) +
              ", MMD convictions " + std::to_string(mmd_convictions) + "/100"};
}

// 7. Logprob verification.
Outcome logprob_verification(const Fixtures& fx) {
  LocalEndpoint jitter(fx.provider("honest-jitter"), 701);
  Rng r(702);
  const auto honest = logprob_audit(jitter.client, "aurora-9b", fx.spec, fx.detectors, r);
  int convicted = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    LocalEndpoint quant(fx.provider("quantized-0.25"), 710 + seed);
    Rng rng = Rng(703).split(seed);
    convicted += logprob_audit(quant.client, "aurora-9b", fx.spec, fx.detectors, rng).decision ==
                 Decision::kSubstitutionDetected;
  }
  LocalEndpoint mute(fx.provider("honest-nologprobs"), 704);
  Rng r2(705);
  const auto none = logprob_audit(mute.client, "aurora-9b", fx.spec, fx.detectors, r2);
  const bool below = honest.statistic < fx.detectors.logprob_tau_mean &&
                     honest.details.at("max_abs_diff") < fx.detectors.logprob_tau_max &&
                     honest.decision == Decision::kHonestConsistent;
  return {below && convicted == 20 && none.decision == Decision::kInapplicable,
          "jitter mean " + fmt(honest.statistic) + " max " + fmt(honest.details.at("max_abs_diff")) +
              ", quantized 0.25 convicted " + std::to_string(convicted) + "/20, no logprobs -> " +
              std::string(to_string(none.decision))};
}

// 8. Hidden-dimension recovery and subspace comparison.
Outcome subspace_recovery(const Fixtures& fx) {
  std::size_t cases = 0, exact = 0, centered_ok = 0;
  for (std::size_t v : {8u, 16u, 32u, 64u}) {
    for (std::size_t d : {2u, 4u, 8u, 16u}) {
      if (d + 2 > v) continue;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = ToyModel::create(v, d, 800 + seed, "m", "m");
        Rng rng(seed);
        std::vector<Eigen::VectorXd> raw, lps;
        const auto prompts = PromptSet::random(4 * d, 8, v, rng);
        for (const auto& p : prompts.prompts()) {
          raw.push_back(m.next_logits(p).values);
          lps.push_back(log_softmax(raw.back(), 1.0).values);
        }
        ++cases;
        exact += subspace_fingerprint(raw, LogitKind::kRawLogits).dimension == d;
        const auto c = subspace_fingerprint(lps, LogitKind::kLogProbabilities).dimension;
        centered_ok += c == d || c == d + 1;
      }
    }
  }
  auto signature = [](const ToyModel& m) {
    Rng rng(899);
    std::vector<Eigen::VectorXd> raw;
    const auto prompts = PromptSet::random(32, 8, m.vocab(), rng);
    for (const auto& p : prompts.prompts()) raw.push_back(m.next_logits(p).values);
    return subspace_fingerprint(raw, LogitKind::kRawLogits);
  };
  const auto s = signature(fx.spec);
  const double alt_angle = subspace_compare(s, signature(fx.alt)).statistic;
  const double q_angle = subspace_compare(s, signature(quantize(fx.spec, 0.01))).statistic;
  return {exact == cases && centered_ok == cases && alt_angle > 0.5 && q_angle < 0.05,
          "raw exact " + std::to_string(exact) + "/" + std::to_string(cases) + ", centered in {d,d+1} " +
              std::to_string(centered_ok) + "/" + std::to_string(cases) + ", angle alt " + fmt(alt_angle) +
              " rad, q0.01 " + fmt(q_angle) + " rad"};
}

// 9. Kernel and MMD against a brute-force pairwise oracle.
Outcome kernel_oracles() {
  Rng rng(900);
  int mismatches = 0;
  double min_eig = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 1 + rng.below(8), v = 4 + rng.below(7);
    auto rows = [&](std::size_t n) {
      std::vector<TokenSequence> out(n);
      for (auto& r : out) {
        r.resize(rng.below(L + 1));
        for (auto& t : r) t = static_cast<TokenId>(3 + rng.below(v - 3));
        r = pad_to_length(r, L);
      }
      return out;
    };
    const auto p = rows(1 + rng.below(6)), q = rows(1 + rng.below(6));
    SampleSet sp(L, v, "p"), sq(L, v, "q");
    for (const auto& r : p) sp.add({kBos}, r);
    for (const auto& r : q) sq.add({kBos}, r);
    auto k = [](const TokenSequence& a, const TokenSequence& b) {
      std::int64_t c = 0;
      for (std::size_t i = 0; i < a.size(); ++i) c += a[i] == b[i];
      return c;
    };
    std::int64_t pp = 0, qq = 0, pq = 0;
    for (const auto& a : p)
      for (const auto& b : p) pp += k(a, b);
    for (const auto& a : q)
      for (const auto& b : q) qq += k(a, b);
    for (const auto& a : p)
      for (const auto& b : q) {
        pq += k(a, b);
        mismatches += hamming_kernel(a, b) != static_cast<double>(k(a, b));
      }
    const auto n = static_cast<std::int64_t>(p.size()), m = static_cast<std::int64_t>(q.size());
    mismatches += mmd_squared_scaled(sp, sq) != m * m * pp + n * n * qq - 2 * n * m * pq;

    std::vector<TokenSequence> pool = p;
    pool.insert(pool.end(), q.begin(), q.end());
    Eigen::MatrixXd gram(pool.size(), pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
      for (std::size_t j = 0; j < pool.size(); ++j)
        gram(static_cast<long>(i), static_cast<long>(j)) = hamming_kernel(pool[i], pool[j]);
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().minCoeff());
  }
  return {mismatches == 0 && min_eig >= -1e-9,
          std::to_string(mismatches) + " mismatches on 200 instances, min Gram eigenvalue " + fmt(min_eig)};
}

// 10. Classifier gradient check.
Outcome gradient_check() {
  Rng rng(1000);
  const long n = 50, v = 16;
  Eigen::MatrixXd x(n, v);
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < v; ++j) x(i, j) = rng.uniform();
    y(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  const double h = 1e-5, l2 = 1e-4;
  double worst = 0.0;
  for (int point = 0; point < 10; ++point) {
    Eigen::VectorXd w(v);
    for (long j = 0; j < v; ++j) w(j) = rng.normal();
    const double b = rng.normal();
    const auto g = logistic_loss(x, y, w, b, l2);
    Eigen::VectorXd numeric(v + 1), analytic(v + 1);
    for (long j = 0; j < v; ++j) {
      Eigen::VectorXd wp = w, wm = w;
      wp(j) += h;
      wm(j) -= h;
      numeric(j) = (logistic_loss(x, y, wp, b, l2).loss - logistic_loss(x, y, wm, b, l2).loss) / (2 * h);
    }
    numeric(v) = (logistic_loss(x, y, w, b + h, l2).loss - logistic_loss(x, y, w, b - h, l2).loss) / (2 * h);
    analytic << g.grad_weights, g.grad_bias;
    worst = std::max(worst, (analytic - numeric).norm() / std::max(analytic.norm(), numeric.norm()));
  }
  return {worst < 1e-4, "max relative error " + fmt(worst) + " over 10 points"};
}

// 11. Service determinism and schema indistinguishability.
Outcome service_schema(const Fixtures& fx) {
  HttpEndpoint honest(fx.provider("honest"), 1100);
  CompletionRequest req;
  req.model = "aurora-9b";
  req.prompt = fx.mmd_prompts.prompts().front();
  req.max_tokens = 20;
  req.greedy = true;
  req.id = "golden";
  req.logprobs = LogprobPolicy::none();
  const std::string body = request_to_json(req);
  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 64; ++i) {
    futures.push_back(std::async(std::launch::async, [&] {
      HttpCompletionClient client("127.0.0.1", honest.port);
      CompletionRequest copy = req;
      return response_to_json(client.complete(copy));
    }));
  }
  std::vector<std::string> bodies;
  for (auto& f : futures) bodies.push_back(f.get());
  const bool identical = std::all_of(bodies.begin(), bodies.end(), [&](const auto& b) { return b == bodies.front(); });

  auto shape = [](const std::string& text) {
    auto j = ojson::parse(text);
    j["tokens"] = ojson::array();
    j["text"] = "";
    j["finish_reason"] = "";
    return j.dump(1) + "\n";
  };
  Provider h(load_provider_config(fx.provider("honest")), 1101);
  Provider s(load_provider_config(fx.provider("fixed-substitute")), 1101);
  const auto hb = h.handle_completion_json(body).second;
  const auto sb = s.handle_completion_json(body).second;
  std::ifstream in(std::string(SUBAUDIT_TEST_DATA_DIR) + "/golden_response_shape.json");
  const std::string golden((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const bool schema = shape(hb) == golden && shape(sb) == golden && hb != sb;
  return {identical && schema, std::string("64 concurrent bodies ") + (identical ? "identical" : "differ") +
                                   ", honest/substitute shapes " + (schema ? "match golden" : "differ from golden")};
}

// 12. End-to-end verdict matrix over HTTP.
Outcome verdict_matrix(const Fixtures& fx) {
  std::ifstream in(std::string(SUBAUDIT_TEST_DATA_DIR) + "/verdict_matrix.json");
  const auto table = nlohmann::json::parse(in);
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> problems;
  std::ostringstream summary;
  std::uint64_t seed = 1200;
  for (const auto& scenario : table["scenarios"]) {
    const std::string name = scenario["provider"];
    HttpEndpoint server(fx.provider(name), ++seed);
    cli::AuditPlan plan;
    plan.endpoint = server.endpoint();
    plan.claimed_name = "aurora-9b";
    plan.reference_model = fx.dir / "models" / "spec.json";
    plan.detectors = table["detectors"].get<std::vector<std::string>>();
    plan.config = fx.detectors;
    plan.seed = seed;
    plan.output = fx.dir / ("report-" + name + ".json");
    std::ostringstream sink;
    const int code = cli::cmd_audit(plan, {&sink, &sink, false});
    if (code != scenario["exit_code"].get<int>()) problems.push_back(name + " exit " + std::to_string(code));
    const auto report = read_report(*plan.output);
    summary << " " << name << "=";
    for (const auto& detector : plan.detectors) {
      const auto* v = report.find(detector);
      const std::string got = v ? std::string(to_string(v->decision)) : "missing";
      const auto allowed = scenario["allowed"][detector].get<std::vector<std::string>>();
      if (std::find(allowed.begin(), allowed.end(), got) == allowed.end()) {
        problems.push_back(name + "/" + detector + " " + got);
      }
      summary << (got == "substitution-detected" ? 'D' : got == "honest-consistent" ? 'H' : got == "inconclusive" ? '?' : '-');
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::string detail = "patterns" + summary.str() + " in " + fmt(secs) + " s";
  for (const auto& p : problems) detail += "; unexpected " + p;
  return {problems.empty() && secs < 600.0, detail};
}

}  // namespace

int main() {
  std::unique_ptr<Fixtures> fx;
  try {
    fx = make_fixtures();
  } catch (const std::exception& e) {
    std::cout << "FAIL  fixtures: " << e.what() << std::endl;
    return 1;
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"null calibration", [&] { return null_calibration(*fx); }},
      {"randomized substitution power curve", [&] { return power_curve_shape(*fx); }},
      {"classifier blind to quantization", [&] { return classifier_table(*fx); }},
      {"benchmark cannot separate quantization", [&] { return benchmark_table(*fx); }},
      {"temperature hiding", [&] { return temperature_hiding(*fx); }},
      {"benchmark evasion", [&] { return benchmark_evasion(*fx); }},
      {"logprob verification", [&] { return logprob_verification(*fx); }},
      {"subspace recovery", [&] { return subspace_recovery(*fx); }},
      {"kernel oracles", [] { return kernel_oracles(); }},
      {"classifier gradient check", [] { return gradient_check(); }},
      {"service determinism and schema", [&] { return service_schema(*fx); }},
      {"end-to-end verdict matrix", [&] { return verdict_matrix(*fx); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
