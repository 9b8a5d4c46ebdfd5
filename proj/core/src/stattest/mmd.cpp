#include "subaudit/stattest/mmd.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "subaudit/core/error.hpp"
#include "subaudit/core/format.hpp"
#include "subaudit/core/parallel.hpp"

namespace subaudit {

double hamming_kernel(std::span<const TokenId> x, std::span<const TokenId> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kInput, "hamming kernel needs equal lengths, got " + std::to_string(x.size()) + " and " +
                                       std::to_string(y.size()));
  }
  std::size_t matches = 0;
  for (std::size_t i = 0; i < x.size(); ++i) matches += x[i] == y[i] ? 1 : 0;
  return static_cast<double>(matches);
}

namespace {

/// Pooled P+Q samples flattened to per-position histogram cells, plus the
/// prompt strata used for label shuffling.
struct PooledSamples {
  std::size_t length = 0;
  std::size_t vocab = 0;
  std::size_t n_p = 0;
  std::size_t n_q = 0;
  std::vector<std::uint32_t> cells;               // sample-major, cells[s * L + pos] = pos * V + tok
  std::vector<std::vector<std::size_t>> strata;   // pooled indices sharing a prompt
};

void check_compatible(const SampleSet& p, const SampleSet& q) {
  if (p.empty() || q.empty()) throw Error(ErrorCode::kInput, "MMD needs nonempty sample sets");
  if (p.length() != q.length()) throw Error(ErrorCode::kInput, "sample sets have different lengths");
  const long double n = static_cast<long double>(p.size());
  const long double m = static_cast<long double>(q.size());
  const long double bound = static_cast<long double>(p.length()) * 4.0L * n * n * m * m;
  if (bound > 4.0e18L) throw Error(ErrorCode::kInput, "sample sets too large for exact MMD accumulation");
}

PooledSamples pool(const SampleSet& p, const SampleSet& q) {
  check_compatible(p, q);
  PooledSamples pooled;
  pooled.length = p.length();
  pooled.vocab = std::max(p.vocab(), q.vocab());
  pooled.n_p = p.size();
  pooled.n_q = q.size();
  pooled.cells.reserve((pooled.n_p + pooled.n_q) * pooled.length);

  std::map<TokenSequence, std::size_t> stratum_of;
  std::size_t index = 0;
  auto append = [&](const SampleSet& set) {
    for (const auto& group : set.groups()) {
      auto [it, inserted] = stratum_of.try_emplace(group.prompt, pooled.strata.size());
      if (inserted) pooled.strata.emplace_back();
      for (const auto& c : group.completions) {
        for (std::size_t pos = 0; pos < pooled.length; ++pos) {
          pooled.cells.push_back(static_cast<std::uint32_t>(pos * pooled.vocab + c[pos]));
        }
        pooled.strata[it->second].push_back(index++);
      }
    }
  };
  append(p);
  append(q);
  return pooled;
}

/// sum over cells of (sum of signed weights)^2, where a P-labelled sample
/// weighs +n_q and a Q-labelled one -n_p.
std::int64_t scaled_statistic(const PooledSamples& pooled, const std::vector<std::uint8_t>& is_p,
                              std::vector<std::int64_t>& scratch) {
  scratch.assign(pooled.length * pooled.vocab, 0);
  const auto wp = static_cast<std::int64_t>(pooled.n_q);
  const auto wq = -static_cast<std::int64_t>(pooled.n_p);
  const std::size_t total = pooled.n_p + pooled.n_q;
  for (std::size_t s = 0; s < total; ++s) {
    const std::int64_t w = is_p[s] ? wp : wq;
    const std::uint32_t* row = pooled.cells.data() + s * pooled.length;
    for (std::size_t pos = 0; pos < pooled.length; ++pos) scratch[row[pos]] += w;
  }
  std::int64_t sum = 0;
  for (std::int64_t c : scratch) sum += c * c;
  return sum;
}

std::vector<std::uint8_t> initial_labels(const PooledSamples& pooled) {
  std::vector<std::uint8_t> is_p(pooled.n_p + pooled.n_q, 0);
  std::fill_n(is_p.begin(), pooled.n_p, 1);
  return is_p;
}

double normalize(std::int64_t scaled, std::size_t n, std::size_t m) {
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  return static_cast<double>(scaled) / (nn * nn * mm * mm);
}

}  // namespace

std::int64_t mmd_squared_scaled(const SampleSet& p, const SampleSet& q) {
  const PooledSamples pooled = pool(p, q);
  std::vector<std::int64_t> scratch;
  return scaled_statistic(pooled, initial_labels(pooled), scratch);
}

double mmd_squared(const SampleSet& p, const SampleSet& q) {
  return normalize(mmd_squared_scaled(p, q), p.size(), q.size());
}

MmdResult permutation_test(const SampleSet& p, const SampleSet& q, std::size_t permutations, double alpha,
                           Rng& rng, std::size_t threads) {
  if (permutations < 1) throw Error(ErrorCode::kInput, "need at least one permutation");
  const PooledSamples pooled = pool(p, q);

  MmdResult result;
  result.permutations = permutations;
  result.n_p = pooled.n_p;
  result.n_q = pooled.n_q;
  result.seed = rng.seed();
  result.stream = rng.stream();

  const std::vector<std::uint8_t> labels = initial_labels(pooled);
  std::vector<std::int64_t> scratch;
  const std::int64_t observed = scaled_statistic(pooled, labels, scratch);
  result.mmd_squared = normalize(observed, pooled.n_p, pooled.n_q);

  const Rng base = rng.split(rng.next_u64());
  std::vector<std::uint8_t> exceed(permutations, 0);
  parallel_for(permutations, threads, [&](std::size_t b) {
    Rng local = base.split(b);
    std::vector<std::uint8_t> permuted = labels;
    std::vector<std::uint8_t> stratum_labels;
    for (const auto& stratum : pooled.strata) {
      stratum_labels.resize(stratum.size());
      for (std::size_t i = 0; i < stratum.size(); ++i) stratum_labels[i] = labels[stratum[i]];
      local.shuffle(std::span<std::uint8_t>(stratum_labels));
      for (std::size_t i = 0; i < stratum.size(); ++i) permuted[stratum[i]] = stratum_labels[i];
    }
    std::vector<std::int64_t> local_scratch;
    exceed[b] = scaled_statistic(pooled, permuted, local_scratch) >= observed ? 1 : 0;
  });

  std::size_t count = 0;
  for (auto e : exceed) count += e;
  result.p_value = static_cast<double>(1 + count) / static_cast<double>(permutations + 1);
  result.reject = result.p_value < alpha;
  return result;
}

MixtureDraw mixture_sampler(const ToyModel& spec, const ToyModel& alt, double substitution_rate,
                            std::span<const TokenId> prompt, const DecodingParams& params, Rng& rng) {
  if (!(substitution_rate >= 0.0 && substitution_rate <= 1.0)) {
    throw Error(ErrorCode::kInput, "substitution rate must lie in [0, 1]");
  }
  MixtureDraw draw;
  draw.from_alt = rng.uniform() < substitution_rate;
  draw.completion = sample_completion(draw.from_alt ? alt : spec, prompt, params, rng);
  return draw;
}

PowerCurve power_estimate(const ToyModel& spec, const ToyModel& alt, std::span<const double> substitution_rates,
                          const PromptSet& prompts, const PowerConfig& config, Rng& rng) {
  if (config.mc_runs < 1) throw Error(ErrorCode::kInput, "mc_runs must be at least 1");
  if (prompts.size() == 0 || config.completions_per_prompt == 0) {
    throw Error(ErrorCode::kInput, "power estimation needs prompts and completions");
  }
  for (double s : substitution_rates) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::kInput, "substitution rates must lie in [0, 1]");
  }
  config.decoding.validate();

  PowerCurve curve;
  curve.substitution_rates.assign(substitution_rates.begin(), substitution_rates.end());
  curve.mc_runs = config.mc_runs;
  curve.permutations = config.permutations;
  curve.alpha = config.alpha;
  curve.samples_per_side = prompts.size() * config.completions_per_prompt;

  const std::size_t length = config.decoding.max_tokens;
  const Rng base = rng.split(rng.next_u64());
  const std::size_t trials = substitution_rates.size() * config.mc_runs;
  std::vector<std::uint8_t> rejected(trials, 0);
  parallel_for(trials, config.threads, [&](std::size_t t) {
    const double s = substitution_rates[t / config.mc_runs];
    const Rng trial = base.split(t);
    Rng ref_rng = trial.split(0);
    Rng mix_rng = trial.split(1);
    Rng perm_rng = trial.split(2);
    SampleSet reference(length, spec.vocab(), spec.name());
    SampleSet observed(length, spec.vocab(), "mixture");
    for (const auto& prompt : prompts.prompts()) {
      for (std::size_t k = 0; k < config.completions_per_prompt; ++k) {
        reference.add(prompt, sample_completion(spec, prompt, config.decoding, ref_rng));
        observed.add(prompt, mixture_sampler(spec, alt, s, prompt, config.decoding, mix_rng).completion);
      }
    }
    rejected[t] = permutation_test(reference, observed, config.permutations, config.alpha, perm_rng, 1).reject;
  });

  for (std::size_t i = 0; i < substitution_rates.size(); ++i) {
    std::size_t hits = 0;
    for (std::size_t k = 0; k < config.mc_runs; ++k) hits += rejected[i * config.mc_runs + k];
    curve.power.push_back(static_cast<double>(hits) / static_cast<double>(config.mc_runs));
  }
  return curve;
}

std::string power_curve_csv(const PowerCurve& curve) {
  std::ostringstream out;
  out << "s,power,mc_runs,B,alpha,n\n";
  for (std::size_t i = 0; i < curve.substitution_rates.size(); ++i) {
    out << format_double(curve.substitution_rates[i]) << ',' << format_double(curve.power[i]) << ','
        << curve.mc_runs << ',' << curve.permutations << ',' << format_double(curve.alpha) << ',' << curve.samples_per_side << '\n';
  }
  return out.str();
}

void write_power_csv(const PowerCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << power_curve_csv(curve);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace subaudit
