#include <cmath>
#include <limits>

#include <gtest/gtest.h>
#include <openssl/sha.h>

#include "subaudit/adversary/policy.hpp"
#include "subaudit/core/error.hpp"

using namespace subaudit;

namespace {

const auto kSpec = std::make_shared<const ToyModel>(ToyModel::create(32, 8, 1, "spec", "aurora-9b"));
const auto kAlt = std::make_shared<const ToyModel>(ToyModel::create(32, 8, 8, "alt", "nimbus-7b"));
const DecodingParams kParams{0.7, 10, false};

TokenSequence random_prompt(Rng& rng, std::size_t length = 8) {
  TokenSequence p{kBos};
  for (std::size_t i = 0; i < length; ++i) p.push_back(static_cast<TokenId>(3 + rng.below(29)));
  return p;
}

}  // namespace

TEST(Digest, CanonicalBytesAndSha256) {
  const TokenSequence prompt{0, 258, 7};
  const auto bytes = canonical_prompt_bytes(prompt);
  const std::vector<std::uint8_t> expected{0, 0, 0, 0, 2, 1, 0, 0, 7, 0, 0, 0};
  EXPECT_EQ(bytes, expected);
  Digest ref{};
  SHA256(bytes.data(), bytes.size(), ref.data());
  EXPECT_EQ(prompt_digest(prompt), ref);
  // SHA-256 of the empty message.
  EXPECT_EQ(digest_to_hex(prompt_digest(TokenSequence{})),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(digest_from_hex(digest_to_hex(ref)), ref);
  EXPECT_THROW(digest_from_hex("abc"), Error);
  EXPECT_THROW(digest_from_hex(std::string(64, 'z')), Error);
}

TEST(Evasion, MatchRules) {
  EvasionRegistry registry;
  const TokenSequence audit{0, 5, 6, 7, 8};
  EXPECT_TRUE(registry.add_prompt(audit));
  EXPECT_FALSE(registry.add_prompt(audit));
  EXPECT_EQ(registry.digests().size(), 1u);
  EXPECT_TRUE(evasion_match(audit, registry));
  EXPECT_FALSE(evasion_match(TokenSequence{0, 5, 6, 7, 9}, registry));
  registry.add_template({20, 21});
  EXPECT_TRUE(evasion_match(TokenSequence{0, 3, 20, 21, 4}, registry));
  EXPECT_FALSE(evasion_match(TokenSequence{0, 3, 20, 4, 21}, registry));
}

TEST(Evasion, CompletenessAndSoundnessOnFuzzedPrompts) {
  Rng rng(11);
  auto registry = std::make_shared<EvasionRegistry>();
  std::vector<TokenSequence> registered;
  for (int i = 0; i < 40; ++i) {
    registered.push_back(random_prompt(rng));
    registry->add_prompt(registered.back());
  }
  registry->add_template({30, 31, 30});
  AttackPolicy policy{attack::BenchmarkEvasion{registry, kAlt}, {}, {}};
  policy.validate();
  for (const auto& p : registered) {
    const auto r = route(policy, p, kParams, rng);
    EXPECT_EQ(r.backend, Backend::kSpec);
    EXPECT_TRUE(r.evasion_hit);
  }
  for (int i = 0; i < 1000; ++i) {
    auto edited = registered[rng.below(registered.size())];
    const auto pos = 1 + rng.below(edited.size() - 1);
    const auto old = edited[pos];
    while (edited[pos] == old) edited[pos] = static_cast<TokenId>(3 + rng.below(29));
    const bool template_hit = contains_subsequence(edited, TokenSequence{30, 31, 30});
    const auto r = route(policy, edited, kParams, rng);
    EXPECT_EQ(r.backend, template_hit ? Backend::kSpec : Backend::kAlt);
  }
}

TEST(Route, ModesPickBackends) {
  Rng rng(3);
  const TokenSequence prompt{0, 4, 5};
  EXPECT_EQ(route(AttackPolicy{}, prompt, kParams, rng).backend, Backend::kSpec);
  EXPECT_EQ(route(AttackPolicy{attack::FixedSubstitute{kAlt}, {}, {}}, prompt, kParams, rng).backend, Backend::kAlt);
  const auto q = std::make_shared<const ToyModel>(quantize(*kSpec, 0.25));
  EXPECT_EQ(route(AttackPolicy{attack::Quantized{0.25, q}, {}, {}}, prompt, kParams, rng).backend, Backend::kAlt);
  EXPECT_EQ(mode_name(AttackMode{attack::Quantized{0.25, q}}), "quantized");
}

TEST(Route, MixtureRateAndDeterminism) {
  const AttackPolicy policy{attack::Mixture{0.3, kAlt}, {}, {}};
  const TokenSequence prompt{0, 4, 5};
  Rng rng(5);
  const int n = 10000;
  int alt = 0;
  std::vector<Backend> first;
  for (int i = 0; i < n; ++i) {
    const auto b = route(policy, prompt, kParams, rng).backend;
    alt += b == Backend::kAlt;
    if (i < 100) first.push_back(b);
  }
  const double rate = static_cast<double>(alt) / n;
  EXPECT_GE(rate, 0.27);
  EXPECT_LE(rate, 0.33);
  EXPECT_LE(std::abs(rate - 0.3), 4.0 * std::sqrt(0.3 * 0.7 / n));
  Rng again(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(route(policy, prompt, kParams, again).backend, first[static_cast<std::size_t>(i)]);
}

TEST(Route, TemperatureOverrideIsSilent) {
  AttackPolicy policy;
  policy.temperature_override = 1.5;
  Rng rng(1);
  const auto r = route(policy, TokenSequence{0, 3}, kParams, rng);
  EXPECT_EQ(r.effective.temperature, 1.5);
  EXPECT_EQ(r.effective.max_tokens, kParams.max_tokens);
  EXPECT_EQ(route(AttackPolicy{}, TokenSequence{0, 3}, kParams, rng).effective.temperature, 0.7);
}

TEST(Policy, Validation) {
  EXPECT_THROW((AttackPolicy{attack::Mixture{1.2, kAlt}, {}, {}}.validate()), Error);
  EXPECT_THROW((AttackPolicy{attack::Mixture{0.5, nullptr}, {}, {}}.validate()), Error);
  EXPECT_THROW((AttackPolicy{attack::Quantized{0.0, kAlt}, {}, {}}.validate()), Error);
  EXPECT_THROW((AttackPolicy{attack::BenchmarkEvasion{nullptr, kAlt}, {}, {}}.validate()), Error);
  AttackPolicy bad_t;
  bad_t.temperature_override = -1.0;
  EXPECT_THROW(bad_t.validate(), Error);
  EXPECT_EQ(AttackPolicy{}.alt_model(), nullptr);
  EXPECT_EQ((AttackPolicy{attack::FixedSubstitute{kAlt}, {}, {}}.alt_model()), kAlt);
}

TEST(LogprobPolicy, ParseAndRestrict) {
  EXPECT_EQ(LogprobPolicy::parse("none"), LogprobPolicy::none());
  EXPECT_EQ(LogprobPolicy::parse("full"), LogprobPolicy::full());
  EXPECT_EQ(LogprobPolicy::parse("topk:5"), LogprobPolicy::top_k(5));
  EXPECT_EQ(LogprobPolicy::top_k(5).to_string(), "topk:5");
  EXPECT_THROW(LogprobPolicy::parse("topk:0"), Error);
  EXPECT_THROW(LogprobPolicy::parse("some"), Error);
  EXPECT_EQ(restrict_policy(LogprobPolicy::full(), LogprobPolicy::top_k(3)), LogprobPolicy::top_k(3));
  EXPECT_EQ(restrict_policy(LogprobPolicy::top_k(2), LogprobPolicy::top_k(3)), LogprobPolicy::top_k(2));
  EXPECT_EQ(restrict_policy(LogprobPolicy::none(), LogprobPolicy::full()), LogprobPolicy::none());
}

TEST(LogprobPolicy, DisclosureLevels) {
  Eigen::VectorXd lp(10);
  lp << -5, -4, -3, -2.5, -2, -1.9, -1.8, -0.5, -1.8, -9;
  const std::vector<Eigen::VectorXd> vectors{lp};
  const TokenSequence chosen{3};
  EXPECT_FALSE(apply_logprob_policy(vectors, chosen, LogprobPolicy::none()).has_value());

  const auto top1 = apply_logprob_policy(vectors, chosen, LogprobPolicy::top_k(1));
  ASSERT_TRUE(top1.has_value());
  EXPECT_EQ((*top1)[0].token, 3u);
  EXPECT_EQ((*top1)[0].logprob, -2.5);
  ASSERT_EQ((*top1)[0].top.size(), 1u);
  EXPECT_EQ((*top1)[0].top[0], (TopLogprob{7, -0.5}));
  EXPECT_FALSE((*top1)[0].full.has_value());

  // Tie between ids 6 and 8 at -1.8 resolves by id.
  const auto top3 = apply_logprob_policy(vectors, chosen, LogprobPolicy::top_k(3));
  const std::vector<TopLogprob> expected{{7, -0.5}, {6, -1.8}, {8, -1.8}};
  EXPECT_EQ((*top3)[0].top, expected);

  const auto full = apply_logprob_policy(vectors, chosen, LogprobPolicy::full());
  ASSERT_TRUE((*full)[0].full.has_value());
  EXPECT_EQ((*full)[0].full->size(), 10u);
  EXPECT_EQ((*full)[0].full->at(9), -9.0);
}

TEST(LogprobPolicy, TopKIsPrefixMonotoneProperty) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd l(16);
    for (long i = 0; i < 16; ++i) l(i) = std::round(rng.normal() * 4.0);
    l(0) = -std::numeric_limits<double>::infinity();
    const auto lp = log_softmax(l, 1.0).values;
    const std::vector<Eigen::VectorXd> vectors{lp};
    const TokenSequence chosen{static_cast<TokenId>(rng.below(16))};
    for (std::size_t k = 2; k <= 16; ++k) {
      const auto big = (*apply_logprob_policy(vectors, chosen, LogprobPolicy::top_k(k)))[0].top;
      const auto small = (*apply_logprob_policy(vectors, chosen, LogprobPolicy::top_k(k - 1)))[0].top;
      ASSERT_GE(big.size(), small.size());
      for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(big[i], small[i]);
      for (std::size_t i = 1; i < big.size(); ++i) EXPECT_GE(big[i - 1].logprob, big[i].logprob);
    }
  }
}

TEST(Identity, Override) {
  const auto honest = render_identity_answer("aurora-9b");
  EXPECT_EQ(apply_identity_override(AttackPolicy{}, honest), honest);
  AttackPolicy policy;
  policy.identity_override = "nimbus-70b";
  const auto lied = apply_identity_override(policy, render_identity_answer("secret-1b"));
  EXPECT_NE(lied.find("nimbus-70b"), std::string::npos);
  EXPECT_EQ(lied.find("secret-1b"), std::string::npos);
}
