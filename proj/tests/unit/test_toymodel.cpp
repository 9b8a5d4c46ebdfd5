#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"
#include "subaudit/toymodel/toy_model.hpp"

using namespace subaudit;

namespace {

nlohmann::json golden() {
  std::ifstream in(std::string(SUBAUDIT_TEST_DATA_DIR) + "/golden_toy.json");
  return nlohmann::json::parse(in);
}

TokenSequence to_tokens(const nlohmann::json& j) { return j.get<TokenSequence>(); }

const DecodingParams kGreedy20{1.0, 20, true};

double max_abs_logprob_diff(const ToyModel& a, const ToyModel& b, const std::vector<TokenSequence>& prompts) {
  double worst = 0.0;
  for (const auto& p : prompts) {
    Rng rng(0);
    const auto completion = decode(a, p, {1.0, 10, false}, rng).tokens;
    const auto la = token_logprobs(a, p, completion, 1.0);
    const auto lb = token_logprobs(b, p, completion, 1.0);
    for (std::size_t i = 0; i < la.size(); ++i) {
      worst = std::max(worst, (la[i].distribution.values - lb[i].distribution.values).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace

TEST(ToyModel, MatchesIndependentOracle) {
  const auto g = golden();
  const auto m = ToyModel::create(32, 8, 1, "m", "m-1");
  const auto row0 = g["model_seed1_e_in_row0"].get<std::vector<double>>();
  for (std::size_t j = 0; j < row0.size(); ++j) EXPECT_NEAR(m.input_embeddings()(0, static_cast<long>(j)), row0[j], 1e-14);

  const auto ctx = to_tokens(g["model_seed1_context"]);
  const auto logits = g["model_seed1_next_logits"].get<std::vector<double>>();
  const auto got = m.next_logits(ctx);
  ASSERT_EQ(static_cast<std::size_t>(got.values.size()), logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(got.values(static_cast<long>(i)), logits[i], 1e-12);

  Rng unused(0);
  EXPECT_EQ(decode(m, ctx, kGreedy20, unused).tokens, to_tokens(g["model_seed1_greedy_20"]));
  Rng r1(99);
  EXPECT_EQ(decode(m, ctx, {1.0, 30, false}, r1).tokens, to_tokens(g["model_seed1_sample_T1_rng99_30"]));
  Rng r2(99);
  EXPECT_EQ(decode(m, ctx, {0.6, 30, false}, r2).tokens, to_tokens(g["model_seed1_sample_T06_rng99_30"]));

  const auto small = ToyModel::create(16, 4, 7, "s", "s-1");
  const auto small_logits = g["model_v16_d4_seed7_next_logits_0_5_9"].get<std::vector<double>>();
  const auto got_small = small.next_logits(TokenSequence{0, 5, 9});
  for (std::size_t i = 0; i < small_logits.size(); ++i) {
    EXPECT_NEAR(got_small.values(static_cast<long>(i)), small_logits[i], 1e-12);
  }
  EXPECT_EQ(decode(small, TokenSequence{0, 3}, kGreedy20, unused).tokens,
            to_tokens(g["model_v16_d4_seed7_greedy_0_3"]));
  Rng r3(2024);
  EXPECT_EQ(decode(small, TokenSequence{0, 3}, {1.0, 20, false}, r3).tokens,
            to_tokens(g["model_v16_d4_seed7_sample_0_3_rng2024"]));
}

TEST(ToyModel, GoldenFileLoadsAndDecodes) {
  const auto g = golden();
  const auto m = load_model(std::string(SUBAUDIT_TEST_DATA_DIR) + "/golden_model.json");
  EXPECT_EQ(m.identity(), "golden-1b");
  EXPECT_EQ(m, ToyModel::create(16, 4, 7, "golden", "golden-1b"));
  Rng unused(0);
  EXPECT_EQ(decode(m, TokenSequence{0, 3}, kGreedy20, unused).tokens,
            to_tokens(g["model_v16_d4_seed7_greedy_0_3"]));
}

TEST(ToyModel, CreationIsDeterministicAndChecked) {
  EXPECT_EQ(ToyModel::create(16, 4, 7, "a", "a"), ToyModel::create(16, 4, 7, "a", "a"));
  EXPECT_THROW(ToyModel::create(8, 7, 1, "a", "a"), Error);
  EXPECT_THROW(ToyModel::create(16, 1, 1, "a", "a"), Error);
  const auto m = ToyModel::create(32, 8, 1, "a", "a");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.output_embeddings());
  EXPECT_GT(svd.singularValues().minCoeff(), 1e-8);
  EXPECT_EQ(svd.rank(), 8);
}

TEST(ToyModel, EntryScaleMatchesInitVariance) {
  const auto m = ToyModel::create(512, 16, 3, "a", "a");
  const auto& e = m.output_embeddings();
  const double var = e.array().square().mean();
  EXPECT_NEAR(var, 1.0 / std::sqrt(16.0), 0.02);
}

TEST(ToyModel, ZeroWeightsGiveZeroLogits) {
  Rng rng(1);
  Eigen::MatrixXd out(8, 2);
  for (long i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  const ToyModel m("z", "z", 0, Eigen::MatrixXd::Zero(8, 2), Eigen::MatrixXd::Zero(2, 2), out);
  EXPECT_EQ(m.next_logits(TokenSequence{kBos}).values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ToyModel, OutOfVocabularyContextIsInputError) {
  const auto m = ToyModel::create(16, 4, 7, "a", "a");
  try {
    (void)m.next_logits(TokenSequence{0, 16});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInput);
  }
}

TEST(ToyModel, LogitsStayInOutputSubspaceProperty) {
  const auto m = ToyModel::create(32, 8, 4, "a", "a");
  const Eigen::MatrixXd q = m.output_embeddings().householderQr().householderQ() * Eigen::MatrixXd::Identity(32, 8);
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    TokenSequence ctx{kBos};
    const auto n = rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) ctx.push_back(static_cast<TokenId>(rng.below(32)));
    const Eigen::VectorXd l = m.next_logits(ctx).values;
    EXPECT_LT((l - q * (q.transpose() * l)).norm(), 1e-9);
  }
}

TEST(LogSoftmax, Examples) {
  const auto u = log_softmax(Eigen::VectorXd::Constant(10, 3.5), 0.7);
  for (long i = 0; i < 10; ++i) EXPECT_NEAR(u.values(i), -std::log(10.0), 1e-12);
  EXPECT_EQ(u.kind, LogitKind::kLogProbabilities);

  Eigen::VectorXd distinct(4);
  distinct << 1.0, -2.0, 0.5, 3.0;
  double prev_spread = 1e300;
  for (double t : {1.0, 10.0, 100.0, 1e4, 1e6}) {
    const auto v = log_softmax(distinct, t).values;
    const double spread = v.maxCoeff() - v.minCoeff();
    EXPECT_LT(spread, prev_spread);
    prev_spread = spread;
  }
  EXPECT_LT(prev_spread, 1e-3);

  Eigen::VectorXd big(4);
  big << 1000.0, 0.0, 0.0, 0.0;
  const auto b = log_softmax(big, 1.0).values;
  EXPECT_NEAR(b(0), 0.0, 1e-12);
  for (long i = 1; i < 4; ++i) EXPECT_LE(b(i), -999.0);
  EXPECT_THROW(log_softmax(big, 0.0), Error);
}

TEST(LogSoftmax, NormalizedProperty) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    Eigen::VectorXd l(16);
    for (long i = 0; i < 16; ++i) l(i) = rng.normal() * 50.0;
    const double t = 0.01 + rng.uniform() * 5.0;
    EXPECT_NEAR(log_softmax(l, t).values.array().exp().sum(), 1.0, 1e-9);
  }
}

TEST(Decode, GreedyIsDeterministicAndSkipsReserved) {
  const auto m = ToyModel::create(32, 8, 1, "a", "a");
  Rng a(1), b(2);
  const auto x = decode(m, TokenSequence{0, 4}, {1.0, 30, true}, a).tokens;
  EXPECT_EQ(x, decode(m, TokenSequence{0, 4}, {1.0, 30, true}, b).tokens);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    for (auto t : decode(m, TokenSequence{0, 5}, {2.0, 30, false}, rng).tokens) {
      EXPECT_NE(t, kBos);
      EXPECT_NE(t, kPad);
      EXPECT_NE(t, kEos);
    }
  }
}

TEST(Decode, TinyTemperatureAgreesWithGreedy) {
  const auto m = ToyModel::create(32, 8, 1, "a", "a");
  Rng prompts(11), rng(12), unused(0);
  std::size_t agree = 0, total = 0;
  for (int i = 0; i < 100; ++i) {
    TokenSequence p{kBos};
    for (int k = 0; k < 8; ++k) p.push_back(static_cast<TokenId>(3 + prompts.below(29)));
    const auto g = decode(m, p, {1.0, 20, true}, unused).tokens;
    const auto s = decode(m, p, {1e-6, 20, false}, rng).tokens;
    for (std::size_t k = 0; k < std::max(g.size(), s.size()); ++k) {
      ++total;
      agree += k < g.size() && k < s.size() && g[k] == s[k];
    }
  }
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(total), 0.99);
}

TEST(Decode, AllowedTokensRestrictOutput) {
  const auto m = ToyModel::create(32, 8, 1, "a", "a");
  DecodeOptions opts;
  opts.allowed_tokens = {7, 11, 20};
  opts.record_logprobs = true;
  Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    const auto trace = decode(m, TokenSequence{0, 3}, {1.0, 1, false}, rng, opts);
    ASSERT_EQ(trace.tokens.size(), 1u);
    EXPECT_TRUE(trace.tokens[0] == 7 || trace.tokens[0] == 11 || trace.tokens[0] == 20);
    const auto& lp = trace.logprobs[0];
    EXPECT_NEAR(std::exp(lp(7)) + std::exp(lp(11)) + std::exp(lp(20)), 1.0, 1e-12);
    EXPECT_TRUE(std::isinf(lp(8)));
  }
}

TEST(Decode, JitterLeavesSamplingStreamUntouchedAtZero) {
  const auto m = ToyModel::create(32, 8, 1, "a", "a");
  Rng a(9), b(9), j(1);
  DecodeOptions opts;
  opts.jitter_rng = &j;
  EXPECT_EQ(decode(m, TokenSequence{0, 3}, {1.0, 20, false}, a).tokens,
            decode(m, TokenSequence{0, 3}, {1.0, 20, false}, b, opts).tokens);
}

TEST(Quantize, RoundsToNearestStepTiesToEven) {
  Rng rng(1);
  Eigen::MatrixXd out(8, 2);
  for (long i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  const ToyModel m("x", "x-id", 0, Eigen::MatrixXd::Constant(8, 2, 0.37), Eigen::MatrixXd::Constant(2, 2, 0.375),
                   out);
  const auto q = quantize(m, 0.25);
  // 0.37 / 0.25 = 1.48 rounds to 1; 0.375 / 0.25 = 1.5 is a tie and goes to the even multiple 2.
  EXPECT_DOUBLE_EQ(q.input_embeddings()(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(q.recurrence()(1, 1), 0.5);
  EXPECT_EQ(q.identity(), "x-id");
  EXPECT_EQ(q.name(), "x-q0.25");
  EXPECT_THROW(quantize(m, 0.0), Error);
}

TEST(Quantize, TinyStepIsIdentityAndHugeStepFails) {
  const auto m = ToyModel::create(32, 8, 1, "a", "a");
  const auto q = quantize(m, 1e-12);
  EXPECT_LT((q.output_embeddings() - m.output_embeddings()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((q.input_embeddings() - m.input_embeddings()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(quantize(m, 100.0), Error);
}

TEST(Quantize, DeviationShrinksWithStep) {
  const auto m = ToyModel::create(32, 8, 1, "a", "a");
  Rng rng(21);
  std::vector<TokenSequence> prompts;
  for (int i = 0; i < 10; ++i) {
    TokenSequence p{kBos};
    for (int k = 0; k < 8; ++k) p.push_back(static_cast<TokenId>(3 + rng.below(29)));
    prompts.push_back(p);
  }
  double prev = 1e300;
  for (double step : {0.5, 0.25, 0.1, 0.01}) {
    const double dev = max_abs_logprob_diff(m, quantize(m, step), prompts);
    EXPECT_LE(dev, prev) << "step " << step;
    prev = dev;
  }
  EXPECT_GT(max_abs_logprob_diff(m, quantize(m, 0.1), prompts), 0.0);
}

TEST(TokenLogprobs, ConsistentAndSensitiveToQuantization) {
  const auto m = ToyModel::create(32, 8, 1, "a", "a");
  const TokenSequence prompt{0, 5, 9, 3, 17};
  const TokenSequence completion{24, 13, 5, 13, 9};
  const auto a = token_logprobs(m, prompt, completion, 1.0);
  const auto b = token_logprobs(m, prompt, completion, 1.0);
  ASSERT_EQ(a.size(), completion.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].chosen, a[i].distribution.values(completion[i]));
    EXPECT_EQ(a[i].chosen, b[i].chosen);
    EXPECT_EQ(a[i].distribution.kind, LogitKind::kLogProbabilities);
  }
  const auto q = token_logprobs(quantize(m, 0.25), prompt, completion, 1.0);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i].chosen - q[i].chosen));
  EXPECT_GT(diff, 0.0);
}

TEST(ModelFile, RoundTripAndSchema) {
  const auto m = ToyModel::create(16, 4, 7, "rt", "rt-1");
  EXPECT_EQ(model_from_json(model_to_json(m)), m);
  const auto q = quantize(m, 0.1);
  EXPECT_EQ(model_from_json(model_to_json(q)), q);
  auto j = nlohmann::json::parse(model_to_json(m));
  j.erase("schema");
  try {
    (void)model_from_json(j.dump());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  EXPECT_THROW(model_from_json("{not json"), Error);
}
