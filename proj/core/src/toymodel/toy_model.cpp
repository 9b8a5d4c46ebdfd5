#include "subaudit/toymodel/toy_model.hpp"

#include <cfenv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"

namespace subaudit {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kModelSchema = "toymodel/1";

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
  }
  return m;
}

bool full_column_rank(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s.size() == m.cols() && s.minCoeff() > ToyModel::kRankTolerance;
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::kConstruction, std::string(what) + " has non-finite entries");
}

}  // namespace

ToyModel ToyModel::create(std::size_t vocab, std::size_t hidden, std::uint64_t seed, std::string name,
                          std::string identity) {
  if (vocab < 8) throw Error(ErrorCode::kInput, "vocab_size must be at least 8");
  if (hidden < 2 || hidden + 2 > vocab) {
    throw Error(ErrorCode::kInput, "hidden_dim must satisfy 2 <= d <= v - 2");
  }
  const auto v = static_cast<Eigen::Index>(vocab);
  const auto d = static_cast<Eigen::Index>(hidden);
  const double stddev = std::pow(static_cast<double>(hidden), -0.25);

  Eigen::MatrixXd input = gaussian_matrix(v, d, stddev, Rng(seed, 0));
  Eigen::MatrixXd recurrence = gaussian_matrix(d, d, stddev, Rng(seed, 1));
  for (int attempt = 0; attempt <= kMaxRankRetries; ++attempt) {
    Eigen::MatrixXd output = gaussian_matrix(v, d, stddev, Rng(seed, 2 + static_cast<std::uint64_t>(attempt)));
    if (full_column_rank(output)) {
      return ToyModel(std::move(name), std::move(identity), seed, std::move(input), std::move(recurrence),
                      std::move(output));
    }
  }
  throw Error(ErrorCode::kConstruction, "output embeddings rank-deficient after retries");
}

ToyModel::ToyModel(std::string name, std::string identity, std::uint64_t seed, Eigen::MatrixXd input_embeddings,
                   Eigen::MatrixXd recurrence, Eigen::MatrixXd output_embeddings)
    : name_(std::move(name)),
      identity_(std::move(identity)),
      seed_(seed),
      input_(std::move(input_embeddings)),
      recurrence_(std::move(recurrence)),
      output_(std::move(output_embeddings)) {
  const auto v = output_.rows();
  const auto d = output_.cols();
  if (v < 8 || d < 2 || d > v - 2) throw Error(ErrorCode::kConstruction, "need v >= 8 and 2 <= d <= v - 2");
  if (input_.rows() != v || input_.cols() != d) throw Error(ErrorCode::kConstruction, "E_in must be v x d");
  if (recurrence_.rows() != d || recurrence_.cols() != d) {
    throw Error(ErrorCode::kConstruction, "W_h must be d x d");
  }
  require_finite(input_, "E_in");
  require_finite(recurrence_, "W_h");
  require_finite(output_, "E_out");
  if (!full_column_rank(output_)) throw Error(ErrorCode::kConstruction, "E_out is rank-deficient");
}

Eigen::VectorXd ToyModel::advance(const Eigen::VectorXd& state, TokenId token) const {
  if (token >= vocab()) {
    throw Error(ErrorCode::kInput, "token id " + std::to_string(token) + " outside vocabulary");
  }
  Eigen::VectorXd pre = recurrence_ * state + input_.row(token).transpose();
  return pre.array().tanh().matrix();
}

Eigen::VectorXd ToyModel::encode(std::span<const TokenId> context) const {
  Eigen::VectorXd h = initial_state();
  for (TokenId t : context) h = advance(h, t);
  return h;
}

LogitVector ToyModel::next_logits(std::span<const TokenId> context) const {
  if (context.empty()) throw Error(ErrorCode::kInput, "context must be nonempty");
  return LogitVector{logits(encode(context)), LogitKind::kRawLogits};
}

bool operator==(const ToyModel& a, const ToyModel& b) {
  return a.name_ == b.name_ && a.identity_ == b.identity_ && a.seed_ == b.seed_ && a.input_ == b.input_ &&
         a.recurrence_ == b.recurrence_ && a.output_ == b.output_;
}

LogitVector log_softmax(const Eigen::VectorXd& logits, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::kInput, "temperature must be positive");
  Eigen::VectorXd z = logits / temperature;
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return LogitVector{(z.array() - lse).matrix(), LogitKind::kLogProbabilities};
}

Eigen::VectorXd jitter_logits(const Eigen::VectorXd& logits, double sigma, Rng& rng) {
  if (sigma < 0.0) throw Error(ErrorCode::kInput, "jitter sigma must be non-negative");
  if (sigma == 0.0) return logits;
  Eigen::VectorXd out = logits;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += rng.normal(0.0, sigma);
  return out;
}

namespace {

std::vector<bool> emittable_mask(std::size_t vocab, const std::vector<TokenId>& allowed) {
  std::vector<bool> mask(vocab, allowed.empty());
  if (allowed.empty()) {
    mask[kBos] = false;
    mask[kPad] = false;
  } else {
    for (TokenId t : allowed) {
      if (t >= vocab) throw Error(ErrorCode::kInput, "allowed token outside vocabulary");
      mask[t] = true;
    }
  }
  return mask;
}

/// Log-softmax over the masked ids only; -inf elsewhere.
Eigen::VectorXd masked_log_softmax(const Eigen::VectorXd& logits, double temperature,
                                   const std::vector<bool>& mask) {
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd z = logits / temperature;
  double m = -inf;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) m = std::max(m, z[i]);
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) sum += std::exp(z[i] - m);
  }
  const double lse = m + std::log(sum);
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = mask[static_cast<std::size_t>(i)] ? z[i] - lse : -inf;
  return out;
}

}  // namespace

DecodeTrace decode(const ToyModel& model, std::span<const TokenId> prompt, const DecodingParams& params, Rng& rng,
                   const DecodeOptions& options) {
  params.validate();
  if (prompt.empty()) throw Error(ErrorCode::kInput, "prompt must be nonempty");
  if (options.jitter_sigma < 0.0) throw Error(ErrorCode::kInput, "jitter sigma must be non-negative");
  if (options.jitter_sigma > 0.0 && options.jitter_rng == nullptr) {
    throw Error(ErrorCode::kInput, "jitter requires a generator");
  }
  const std::size_t v = model.vocab();
  const std::vector<bool> mask = emittable_mask(v, options.allowed_tokens);
  const bool constrained = !options.allowed_tokens.empty();
  const double temperature = params.greedy ? 1.0 : params.temperature;

  DecodeTrace trace;
  Eigen::VectorXd h = model.encode(prompt);
  std::vector<double> weights(v);
  for (std::size_t step = 0; step < params.max_tokens; ++step) {
    Eigen::VectorXd logits = model.logits(h);
    if (options.jitter_sigma > 0.0) logits = jitter_logits(logits, options.jitter_sigma, *options.jitter_rng);

    TokenId next = 0;
    if (params.greedy) {
      double best = -std::numeric_limits<double>::infinity();
      bool found = false;
      for (std::size_t i = 0; i < v; ++i) {
        if (mask[i] && (!found || logits[static_cast<Eigen::Index>(i)] > best)) {
          best = logits[static_cast<Eigen::Index>(i)];
          next = static_cast<TokenId>(i);
          found = true;
        }
      }
    } else {
      const Eigen::VectorXd z = logits / temperature;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < v; ++i) {
        if (mask[i]) m = std::max(m, z[static_cast<Eigen::Index>(i)]);
      }
      for (std::size_t i = 0; i < v; ++i) weights[i] = mask[i] ? std::exp(z[static_cast<Eigen::Index>(i)] - m) : 0.0;
      next = static_cast<TokenId>(rng.categorical(weights));
    }

    if (next == kEos) {
      trace.stopped_at_eos = true;
      break;
    }
    if (options.record_logprobs) {
      trace.logprobs.push_back(constrained ? masked_log_softmax(logits, temperature, mask)
                                           : log_softmax(logits, temperature).values);
    }
    trace.tokens.push_back(next);
    h = model.advance(h, next);
  }
  return trace;
}

TokenSequence sample_completion(const ToyModel& model, std::span<const TokenId> prompt,
                                const DecodingParams& params, Rng& rng) {
  return decode(model, prompt, params, rng).tokens;
}

ToyModel quantize(const ToyModel& model, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw Error(ErrorCode::kInput, "quantization step must be positive");
  const int saved_mode = std::fegetround();
  std::fesetround(FE_TONEAREST);
  auto round_matrix = [step](const Eigen::MatrixXd& m) {
    return m.unaryExpr([step](double w) { return step * std::nearbyint(w / step); }).eval();
  };
  Eigen::MatrixXd input = round_matrix(model.input_embeddings());
  Eigen::MatrixXd recurrence = round_matrix(model.recurrence());
  Eigen::MatrixXd output = round_matrix(model.output_embeddings());
  std::fesetround(saved_mode);

  std::ostringstream suffix;
  suffix.precision(6);
  suffix << "-q" << step;
  return ToyModel(model.name() + suffix.str(), model.identity(), model.seed(), std::move(input),
                  std::move(recurrence), std::move(output));
}

std::vector<TokenLogprob> token_logprobs(const ToyModel& model, std::span<const TokenId> prompt,
                                         std::span<const TokenId> completion, double temperature) {
  if (prompt.empty()) throw Error(ErrorCode::kInput, "prompt must be nonempty");
  check_vocab(completion, model.vocab());
  std::vector<TokenLogprob> out;
  out.reserve(completion.size());
  Eigen::VectorXd h = model.encode(prompt);
  for (TokenId t : completion) {
    LogitVector lp = log_softmax(model.logits(h), temperature);
    out.push_back(TokenLogprob{lp.values[t], std::move(lp)});
    h = model.advance(h, t);
  }
  return out;
}

namespace {

ojson matrix_to_json(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const ojson& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw Error(ErrorCode::kParse, std::string(what) + " has wrong row count");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::kParse, std::string(what) + " has wrong column count");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

std::string model_to_json(const ToyModel& model) {
  ojson j;
  j["schema"] = kModelSchema;
  j["name"] = model.name();
  j["identity"] = model.identity();
  j["v"] = model.vocab();
  j["d"] = model.hidden();
  j["seed"] = model.seed();
  j["E_in"] = matrix_to_json(model.input_embeddings());
  j["W_h"] = matrix_to_json(model.recurrence());
  j["E_out"] = matrix_to_json(model.output_embeddings());
  return j.dump() + "\n";
}

ToyModel model_from_json(std::string_view text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  if (!j.is_object() || !j.contains("schema")) throw Error(ErrorCode::kParse, "model file lacks schema field");
  if (j["schema"] != kModelSchema) {
    throw Error(ErrorCode::kParse, "unsupported model schema " + j["schema"].dump());
  }
  try {
    const auto v = j.at("v").get<Eigen::Index>();
    const auto d = j.at("d").get<Eigen::Index>();
    return ToyModel(j.at("name").get<std::string>(), j.at("identity").get<std::string>(),
                    j.at("seed").get<std::uint64_t>(), matrix_from_json(j.at("E_in"), v, d, "E_in"),
                    matrix_from_json(j.at("W_h"), d, d, "W_h"), matrix_from_json(j.at("E_out"), v, d, "E_out"));
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

void save_model(const ToyModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << model_to_json(model);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

ToyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace subaudit
