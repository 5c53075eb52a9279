#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "leanpo/dataset_io.hpp"
#include "leanpo/rng.hpp"
#include "leanpo/synth.hpp"
#include "test_support.hpp"

using namespace leanpo;
using testing_support::bundled_reference;

namespace {

const WorldSpec kSpec = WorldSpec::standard();
const Vocab kVocab{};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST(World, SameSeedSameTriplet) {
  const auto a = gen_world(kSpec, 42), b = gen_world(kSpec, 42);
  EXPECT_EQ(a.video, b.video);
  EXPECT_EQ(a.query, b.query);
  EXPECT_EQ(a.answer, b.answer);
}

TEST(World, AnswerCheckerAcceptsEveryGeneratedTriplet) {
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto w = gen_world(kSpec, s);
    ASSERT_TRUE(check_answer(kSpec, w.video, w.query, w.answer)) << "seed " << s;
    EXPECT_EQ(w.video.size(), kSpec.video_length);
  }
}

TEST(World, AnswerIsFunctionOfProgramAndQuery) {
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto w = gen_world(kSpec, s);
    const auto events = recover_events(kSpec, w.video);
    ASSERT_TRUE(events.has_value());
    EXPECT_EQ(*events, w.events);
    const auto k = query_index(kSpec, w.query);
    ASSERT_TRUE(k.has_value());
    EXPECT_EQ(w.answer, TokenSeq{w.events[*k]});
  }
}

TEST(World, WrongAnswerRejected) {
  const auto w = gen_world(kSpec, 3);
  TokenSeq wrong{w.answer[0] == 14 ? Token{15} : Token{14}};
  EXPECT_FALSE(check_answer(kSpec, w.video, w.query, wrong));
  EXPECT_FALSE(check_answer(kSpec, w.video, w.query, {}));
}

TEST(World, PairwiseCollisionRateBelowTwoToMinus20) {
  // empirical P(two seeds give the same triplet), counted over all pairs
  const std::size_t n = 20000;
  std::map<std::vector<Token>, std::size_t> counts;
  for (std::uint64_t s = 0; s < n; ++s) {
    const auto w = gen_world(kSpec, derive_seed(77, s));
    std::vector<Token> key = w.video;
    key.insert(key.end(), w.query.begin(), w.query.end());
    ++counts[key];
  }
  double colliding = 0.0;
  for (const auto& [k, c] : counts) colliding += 0.5 * static_cast<double>(c) * static_cast<double>(c - 1);
  const double rate = colliding / (0.5 * n * (n - 1.0));
  RecordProperty("pairwise_collision_rate", std::to_string(rate));
  EXPECT_LT(rate, std::ldexp(1.0, -20));
}

TEST(World, SpecValidationCatchesRoleClashes) {
  EXPECT_NO_THROW(kSpec.validate(kVocab));
  WorldSpec s = kSpec;
  s.summary_token = 14;
  EXPECT_THROW(s.validate(kVocab), InvalidInput);
  s = kSpec;
  s.event_tokens[0] = kVocab.sep;
  EXPECT_THROW(s.validate(kVocab), InvalidInput);
  s = kSpec;
  s.query_tokens.pop_back();
  EXPECT_THROW(s.validate(kVocab), InvalidInput);
  s = kSpec;
  s.noise_rate = 1.0;
  EXPECT_THROW(s.validate(kVocab), InvalidInput);
  s = kSpec;
  s.event_tokens.push_back(40);
  EXPECT_THROW(s.validate(kVocab), InvalidInput);
}

TEST(World, TeacherResponseClaimsTheAnswer) {
  const auto w = gen_world(kSpec, 11);
  const TokenSeq y = teacher_response(kSpec, w.events, w.query_index);
  EXPECT_EQ(claimed_answer(kSpec, y), w.answer);
  EXPECT_DOUBLE_EQ(answer_overlap(kSpec, y, w.answer), 1.0);
  EXPECT_DOUBLE_EQ(answer_overlap(kSpec, {kSpec.summary_token}, w.answer), 0.0);
}

TEST(Augment, VanishingStrengthIsIdentity) {
  const auto w = gen_world(kSpec, 5);
  for (AugKind k : {AugKind::frame_drop, AugKind::frame_shuffle, AugKind::token_noise}) {
    for (std::uint64_t s = 0; s < 50; ++s) EXPECT_EQ(apply_augmentation(w.video, {k, 1e-12, {}}, s), w.video);
  }
}

TEST(Augment, FullDropKeepsOneSurvivor) {
  const TokenSeq v{14, 15, 16, 17, 18, 19, 20, 21};
  for (std::uint64_t s = 0; s < 200; ++s) {
    const TokenSeq out = apply_augmentation(v, {AugKind::frame_drop, 1.0, {}}, s);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_NE(std::find(v.begin(), v.end(), out[0]), v.end());
  }
}

TEST(Augment, DropKeepsOrderOfSurvivors) {
  TokenSeq v(24);
  std::iota(v.begin(), v.end(), Token{5});
  const TokenSeq out = apply_augmentation(v, {AugKind::frame_drop, 0.5, {}}, 9);
  EXPECT_TRUE(std::is_sorted(out.begin(), out.end()));
  EXPECT_LT(out.size(), v.size());
}

TEST(Augment, TokenNoiseRateMatchesBinomial) {
  // source tokens lie outside the replacement pool, so every replacement shows
  const TokenSeq v(10000, Token{5});
  const TokenSeq out = apply_augmentation(v, {AugKind::token_noise, 0.5, kSpec.event_tokens}, 1234);
  const double frac =
      static_cast<double>(std::count_if(out.begin(), out.end(), [](Token t) { return t != 5; })) / 10000.0;
  EXPECT_NEAR(frac, 0.5, 0.02);
}

TEST(Augment, ShuffleIsAWindowPermutation) {
  TokenSeq v(24);
  std::iota(v.begin(), v.end(), Token{5});
  const TokenSeq out = apply_augmentation(v, {AugKind::frame_shuffle, 0.5, {}}, 77);
  ASSERT_EQ(out.size(), v.size());
  EXPECT_TRUE(std::is_permutation(out.begin(), out.end(), v.begin()));
  std::size_t moved = 0, first = v.size(), last = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (out[i] != v[i]) {
      ++moved;
      first = std::min(first, i);
      last = i;
    }
  }
  EXPECT_GT(moved, 0u);
  EXPECT_LT(last - first, 12u);
}

TEST(Augment, DeterministicInSeedAndRejectsEmptyVideo) {
  const auto w = gen_world(kSpec, 8);
  const AugmentationOp op{AugKind::frame_drop, 0.3, {}};
  EXPECT_EQ(apply_augmentation(w.video, op, 4), apply_augmentation(w.video, op, 4));
  EXPECT_THROW(apply_augmentation({}, op, 4), InvalidInput);
  EXPECT_THROW((AugmentationOp{AugKind::token_noise, 0.0, {}}.validate()), InvalidInput);
  EXPECT_THROW((AugmentationOp{AugKind::token_noise, 1.5, {}}.validate()), InvalidInput);
  EXPECT_EQ(parse_aug_kind("frame-shuffle"), AugKind::frame_shuffle);
  EXPECT_THROW(parse_aug_kind("blur"), InvalidInput);
}

TEST(Generation, WinningAndLosingAreDeterministicAndClean) {
  const PolicyModel& m = bundled_reference();
  const auto w = gen_world(kSpec, 21);
  const AugmentationOp op;
  EXPECT_EQ(gen_winning(m, w.video, w.query, w.answer, 5), gen_winning(m, w.video, w.query, w.answer, 5));
  EXPECT_EQ(gen_losing(m, w.video, w.query, op, 5), gen_losing(m, w.video, w.query, op, 5));
  for (std::uint64_t s = 0; s < 30; ++s) {
    for (const TokenSeq& y : {gen_winning(m, w.video, w.query, w.answer, s), gen_losing(m, w.video, w.query, op, s)}) {
      for (Token t : y) EXPECT_FALSE(m.vocab().is_reserved(t));
    }
  }
}

TEST(Generation, TrustworthinessAndRewardGapsOver200Triplets) {
  const PolicyModel& m = bundled_reference();
  const GenerationConfig gen;
  std::vector<double> ov_win, ov_lose, ov_direct, r_win, r_answer;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto w = gen_world(kSpec, derive_seed(900, s));
    const TokenSeq win = gen_winning(m, w.video, w.query, w.answer, derive_seed(s, 1), gen);
    const TokenSeq lose = gen_losing(m, w.video, w.query, AugmentationOp{}, derive_seed(s, 2), gen);
    const TokenSeq direct = gen_direct(m, w.video, w.query, derive_seed(s, 3), gen);
    ov_win.push_back(answer_overlap(kSpec, win, w.answer));
    ov_lose.push_back(answer_overlap(kSpec, lose, w.answer));
    ov_direct.push_back(answer_overlap(kSpec, direct, w.answer));
    const TokenSeq ctx = plain_context(m.vocab(), w.video, w.query);
    if (!win.empty()) r_win.push_back(avg_loglik_reward(token_logprobs(m, ctx, win), 2.0));
    r_answer.push_back(avg_loglik_reward(token_logprobs(m, ctx, w.answer), 2.0));
  }
  EXPECT_GT(mean(ov_win), mean(ov_direct));
  EXPECT_GT(mean(ov_win), mean(ov_lose));
  EXPECT_GT(mean(r_win), mean(r_answer));
}

TEST(Pipeline, SingleRecordSatisfiesInvariants) {
  const FrozenReference ref = freeze_reference(bundled_reference());
  const DatasetBuild b = build_dataset(kSpec, ref, 1, AugmentationOp{}, 3);
  ASSERT_EQ(b.pairs.size(), 1u);
  const PreferencePair& p = b.pairs[0];
  EXPECT_TRUE(pair_is_valid(kVocab, p));
  EXPECT_EQ(p.id, "pair-000000");
  EXPECT_EQ(p.augmentation, "frame-drop:0.3");
  EXPECT_TRUE(check_answer(kSpec, p.video, p.query, p.answer));
  // stored rewards use the un-augmented context
  const TokenSeq ctx = plain_context(kVocab, p.video, p.query);
  EXPECT_NEAR(p.reward_win_sft, avg_loglik_reward(token_logprobs(ref.model(), ctx, p.winning), 2.0), 1e-12);
  EXPECT_NEAR(p.reward_lose_sft, avg_loglik_reward(token_logprobs(ref.model(), ctx, p.losing), 2.0), 1e-12);
}

TEST(Pipeline, SameSeedGivesByteIdenticalDataset) {
  const FrozenReference ref = freeze_reference(bundled_reference());
  auto text = [&] {
    Dataset d;
    d.pairs = build_dataset(kSpec, ref, 40, AugmentationOp{}, 17).pairs;
    d.header.count = d.pairs.size();
    return dataset_text(d);
  };
  EXPECT_EQ(text(), text());
}

TEST(Pipeline, RecordsDependOnlyOnTheirOwnSeed) {
  const FrozenReference ref = freeze_reference(bundled_reference());
  const auto big = build_dataset(kSpec, ref, 12, AugmentationOp{}, 5).pairs;
  const auto small = build_dataset(kSpec, ref, 4, AugmentationOp{}, 5).pairs;
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(big[i], small[i]);
  EXPECT_EQ(big[3].seed, record_seed(5, 3));
}

TEST(Pipeline, RewardsAndTrustworthinessSeparate) {
  const FrozenReference ref = freeze_reference(bundled_reference());
  const auto pairs = build_dataset(kSpec, ref, 200, AugmentationOp{}, 31).pairs;
  ASSERT_EQ(pairs.size(), 200u);
  std::vector<double> gap, trust_gap;
  std::size_t ordered = 0;
  for (const auto& p : pairs) {
    EXPECT_TRUE(pair_is_valid(kVocab, p));
    gap.push_back(p.reward_win_sft - p.reward_lose_sft);
    trust_gap.push_back(answer_overlap(kSpec, p.winning, p.answer) - answer_overlap(kSpec, p.losing, p.answer));
    ordered += p.reward_win_sft > p.reward_lose_sft;
  }
  EXPECT_GT(mean(gap), 0.0);
  EXPECT_GE(static_cast<double>(ordered) / pairs.size(), 0.85);
  // bootstrap 95% interval of the trustworthiness gap
  Rng rng(1);
  std::vector<double> boot;
  for (int b = 0; b < 2000; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < trust_gap.size(); ++i) s += trust_gap[rng.below(trust_gap.size())];
    boot.push_back(s / trust_gap.size());
  }
  std::sort(boot.begin(), boot.end());
  const double lo = boot[50], hi = boot[1949];
  RecordProperty("trust_gap_ci", std::to_string(lo) + " .. " + std::to_string(hi));
  EXPECT_GE(mean(trust_gap), 0.0);
  EXPECT_GE(hi, 0.0);
}

TEST(Pipeline, MisorderFilterDropsAndCounts) {
  const FrozenReference ref = freeze_reference(bundled_reference());
  PipelineConfig cfg;
  cfg.filter_misordered = true;
  const DatasetBuild b = build_dataset(kSpec, ref, 60, AugmentationOp{}, 31, cfg);
  for (const auto& p : b.pairs) EXPECT_GT(p.reward_win_sft, p.reward_lose_sft);
  EXPECT_EQ(b.attempted, b.pairs.size() + b.dropped_invalid + b.dropped_misordered);
  EXPECT_GT(b.dropped_misordered, 0u);
}
