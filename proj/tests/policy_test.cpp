#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "leanpo/checkpoint.hpp"
#include "leanpo/losses.hpp"
#include "leanpo/policy.hpp"
#include "leanpo/rng.hpp"

using namespace leanpo;

namespace {

constexpr Token a = 1, b = 2, c = 3;

// Brute-force oracle: conditional from raw pair counts with add-one smoothing.
double count_oracle(const std::vector<TokenSeq>& corpus, std::size_t vocab, Token prev, Token next) {
  double pair = 0, row = 0;
  for (const auto& s : corpus) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i - 1] != prev) continue;
      row += 1;
      if (s[i] == next) pair += 1;
    }
  }
  return std::log((pair + 1.0) / (row + static_cast<double>(vocab)));
}

PolicyModel small_attention(std::uint64_t seed = 1) {
  AttentionConfig cfg;
  cfg.width = 8;
  cfg.hidden = 16;
  cfg.context_window = 16;
  return PolicyModel::attention(Vocab{}, cfg, seed);
}

void train_steps(PolicyModel& m, int steps, double lr) {
  for (int s = 0; s < steps; ++s) {
    m.zero_grad();
    Tape t;
    PolicyGraph g(t, m);
    Value loss = sft_nll_loss(g, {{5, 6, 2}}, {{7, 8}});
    t.backward(loss);
    for (Parameter* p : m.parameters())
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value.data[i] -= lr * p->grad.data[i];
  }
}

}  // namespace

TEST(Bigram, CountOracleSingleSuccessor) {
  const std::vector<TokenSeq> corpus{{a, b}, {a, b}, {a, b}};
  PolicyModel m = fit_bigram(Vocab::plain(4), corpus);
  auto lp = token_logprobs(m, {0, a}, {b});
  ASSERT_EQ(lp.size(), 1u);
  EXPECT_NEAR(lp[0], std::log(4.0 / 7.0), 1e-15);
  EXPECT_NEAR(lp[0], -0.5596157879354227, 1e-12);
  EXPECT_EQ(m.counts()[a * 4 + b], 3u);
}

TEST(Bigram, UnseenPredecessorIsUniform) {
  PolicyModel m = fit_bigram(Vocab::plain(4), {{a, b}, {a, b}, {a, b}});
  const auto lp = next_token_logprobs(m, {c});
  for (double v : lp) EXPECT_NEAR(std::exp(v), 0.25, 1e-15);
}

TEST(Bigram, ConditionalMassSumsToOne) {
  Rng rng(4);
  std::vector<TokenSeq> corpus(50);
  for (auto& s : corpus) {
    s.resize(2 + rng.below(6));
    for (auto& t : s) t = static_cast<Token>(rng.below(6));
  }
  PolicyModel m = fit_bigram(Vocab::plain(6), corpus);
  for (Token prev = 0; prev < 6; ++prev) {
    double total = 0;
    for (double v : next_token_logprobs(m, {prev})) total += std::exp(v);
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Bigram, UniformUntrainedGivesLogOneOver32) {
  PolicyModel m = PolicyModel::uniform_bigram(Vocab{});
  for (double v : token_logprobs(m, {5, 6}, {7, 8, 9, 10})) EXPECT_NEAR(v, std::log(1.0 / 32.0), 1e-15);
}

TEST(Bigram, MatchesCountOracleOnEveryPair) {
  Rng rng(17);
  std::vector<TokenSeq> corpus(200);
  for (auto& s : corpus) {
    s.resize(1 + rng.below(10));
    for (auto& t : s) t = static_cast<Token>(rng.below(12));
  }
  PolicyModel m = fit_bigram(Vocab::plain(12), corpus);
  for (Token prev = 0; prev < 12; ++prev)
    for (Token next = 0; next < 12; ++next)
      EXPECT_NEAR(token_logprobs(m, {prev}, {next})[0], count_oracle(corpus, 12, prev, next), 1e-14);
}

TEST(Bigram, EmptyCorpusRejected) { EXPECT_THROW(fit_bigram(Vocab{}, {}), InvalidInput); }

TEST(Policy, EmptyResponseRejected) {
  EXPECT_THROW(token_logprobs(PolicyModel::uniform_bigram(Vocab{}), {5}, {}), InvalidInput);
}

TEST(Policy, OverlongInputNamesWindow) {
  PolicyModel m = small_attention();
  try {
    token_logprobs(m, TokenSeq(12, 5), TokenSeq(5, 6));
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("16"), std::string::npos);
  }
}

TEST(Attention, OutputsAreLogProbabilitiesThatNormalize) {
  PolicyModel m = PolicyModel::attention(Vocab{}, AttentionConfig{}, 3);
  const TokenSeq ctx{5, 9, 9, 12, 2, 13};
  const TokenSeq resp{17, 6, 20};
  for (double v : token_logprobs(m, ctx, resp)) EXPECT_LE(v, 0.0);
  TokenSeq prefix = ctx;
  for (Token t : resp) {
    double total = 0;
    for (double v : next_token_logprobs(m, prefix)) total += std::exp(v);
    EXPECT_NEAR(total, 1.0, 1e-9);
    prefix.push_back(t);
  }
}

TEST(Attention, CausalityEarlierPositionsIgnoreLaterTokens) {
  PolicyModel m = small_attention(9);
  const TokenSeq ctx{5, 6, 2};
  TokenSeq r1{10, 11, 12, 13, 14};
  for (std::size_t j = 0; j < r1.size(); ++j) {
    TokenSeq r2 = r1;
    r2[j] = 20;
    const auto l1 = token_logprobs(m, ctx, r1);
    const auto l2 = token_logprobs(m, ctx, r2);
    for (std::size_t i = 0; i < j; ++i) EXPECT_EQ(l1[i], l2[i]) << "position " << i << " changed by token " << j;
  }
}

TEST(Policy, SequenceLogprobIsTokenSum) {
  for (const PolicyModel& m : {small_attention(2), PolicyModel::uniform_bigram(Vocab{})}) {
    const TokenSeq ctx{5, 6, 2}, resp{7, 8, 9, 10};
    double s = 0;
    for (double v : token_logprobs(m, ctx, resp)) s += v;
    Tape t;
    PolicyGraph g(t, m);
    EXPECT_NEAR(g.sequence_logprob(ctx, resp).item(), s, 1e-9);
  }
}

TEST(Sample, DeterministicInSeed) {
  PolicyModel m = small_attention(4);
  EXPECT_EQ(sample(m, {5, 6, 2}, 8, 1.0, 42), sample(m, {5, 6, 2}, 8, 1.0, 42));
}

TEST(Sample, LowTemperatureIsGreedy) {
  const std::vector<TokenSeq> corpus{{5, 6, 7, 8}, {5, 6, 7, 8}, {5, 6, 9}};
  PolicyModel m = fit_bigram(Vocab{}, corpus);
  EXPECT_EQ(sample(m, {5}, 3, 1e-6, 1), (TokenSeq{6, 7, 8}));
  EXPECT_EQ(sample(m, {5}, 3, 1e-6, 99), (TokenSeq{6, 7, 8}));
}

// Binomial oracle: n = 1000, p = 1/4 gives sigma = sqrt(n p (1-p)) ~= 13.7.
TEST(Sample, UniformBigramFrequencies) {
  PolicyModel m = PolicyModel::uniform_bigram(Vocab::plain(4));
  std::vector<int> freq(4, 0);
  for (std::uint64_t s = 0; s < 1000; ++s) ++freq[sample(m, {0}, 1, 1.0, derive_seed(7, s)).at(0)];
  const double sigma = std::sqrt(1000 * 0.25 * 0.75);
  for (int f : freq) EXPECT_LE(std::abs(f - 250.0), 4 * sigma);
}

TEST(Sample, BadArgumentsRejected) {
  PolicyModel m = PolicyModel::uniform_bigram(Vocab{});
  EXPECT_THROW(sample(m, {5}, 4, 0.0, 1), InvalidInput);
  EXPECT_THROW(sample(m, {5}, 0, 1.0, 1), InvalidInput);
}

TEST(Freeze, CopyMatchesThenStaysFixed) {
  PolicyModel m = small_attention(5);
  const TokenSeq ctx{5, 6, 2}, resp{7, 8};
  FrozenReference ref = freeze_reference(m);
  const auto before = token_logprobs(ref.model(), ctx, resp);
  EXPECT_EQ(before, token_logprobs(m, ctx, resp));
  train_steps(m, 100, 0.05);
  EXPECT_EQ(before, token_logprobs(ref.model(), ctx, resp));
  EXPECT_NE(before, token_logprobs(m, ctx, resp));
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  for (PolicyModel m : {small_attention(6), fit_bigram(Vocab{}, {{5, 6, 7}, {5, 8}})}) {
    train_steps(m, 3, 0.1);
    const auto path = std::filesystem::temp_directory_path() / "leanpo_ckpt_roundtrip.json";
    save_checkpoint(m, path);
    PolicyModel back = load_checkpoint(path);
    std::filesystem::remove(path);
    EXPECT_EQ(token_logprobs(m, {5, 6, 2}, {9, 10, 11}), token_logprobs(back, {5, 6, 2}, {9, 10, 11}));
    EXPECT_EQ(model_digest(m), model_digest(back));
    EXPECT_EQ(m.counts(), back.counts());
  }
}

TEST(Checkpoint, MalformedInputRejected) {
  EXPECT_THROW(parse_checkpoint("{"), InvalidInput);
  EXPECT_THROW(parse_checkpoint(R"({"format":"other"})"), InvalidInput);
  std::string text = checkpoint_text(small_attention());
  text.replace(text.find("\"w_q\""), 5, "\"w_x\"");
  EXPECT_THROW(parse_checkpoint(text), InvalidInput);
}
