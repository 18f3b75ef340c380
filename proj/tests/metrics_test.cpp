#include <gtest/gtest.h>

#include <random>

#include "cart/metrics.hpp"
#include "support/alignment_oracle.hpp"

namespace {

using cart::AlignTag;
using Tokens = std::vector<std::string>;

TEST(WordAlign, Identity) {
  Tokens r{"a", "b"};
  auto a = cart::word_align(r, r);
  EXPECT_EQ(a.matches(), 2u);
  EXPECT_EQ(a.cost(), 0u);
}

TEST(WordAlign, SubstitutionAndDeletion) {
  Tokens r{"a", "b", "c", "d"}, h{"a", "x", "c"};
  auto a = cart::word_align(r, h);
  EXPECT_EQ(a.substitutions(), 1u);
  EXPECT_EQ(a.deletions(), 1u);
  EXPECT_EQ(a.insertions(), 0u);
  EXPECT_EQ(a.cost(), cart::testing::exhaustive_min_cost(r, h));
}

TEST(WordAlign, EmptySides) {
  Tokens empty, one{"a"};
  EXPECT_EQ(cart::word_align(empty, one).insertions(), 1u);
  EXPECT_EQ(cart::word_align(one, empty).deletions(), 1u);
  EXPECT_TRUE(cart::word_align(empty, empty).pairs.empty());
}

TEST(WordAlign, PairsExhaustBothSidesInOrder) {
  Tokens r{"a", "b", "c"}, h{"x", "a", "c", "c"};
  auto a = cart::word_align(r, h);
  std::size_t ri = 0, hi = 0;
  for (const auto& p : a.pairs) {
    ASSERT_TRUE(p.ref || p.hyp);
    if (p.ref) {
      EXPECT_EQ(*p.ref, ri++);
    }
    if (p.hyp) {
      EXPECT_EQ(*p.hyp, hi++);
    }
  }
  EXPECT_EQ(ri, r.size());
  EXPECT_EQ(hi, h.size());
}

TEST(WordAlign, TieBreakPrefersSubstitutionOverDeleteInsert) {
  Tokens r{"a"}, h{"b"};
  auto a = cart::word_align(r, h);
  ASSERT_EQ(a.pairs.size(), 1u);
  EXPECT_EQ(a.pairs[0].tag, AlignTag::Substitution);
}

Tokens random_tokens(std::mt19937_64& rng, std::size_t max_len) {
  static const Tokens kAlphabet{"a", "b", "c", "d", "e"};
  std::uniform_int_distribution<std::size_t> len(0, max_len), sym(0, kAlphabet.size() - 1);
  Tokens t(len(rng));
  for (auto& s : t) s = kAlphabet[sym(rng)];
  return t;
}

TEST(WordAlignProperty, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    auto r = random_tokens(rng, 7), h = random_tokens(rng, 7);
    ASSERT_EQ(cart::word_align(r, h).cost(), cart::testing::exhaustive_min_cost(r, h));
  }
}

TEST(WordAlignProperty, SwapExchangesDeletionsAndInsertions) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    auto r = random_tokens(rng, 10), h = random_tokens(rng, 10);
    auto ab = cart::word_align(r, h), ba = cart::word_align(h, r);
    ASSERT_EQ(ab.cost(), ba.cost());
    if (r.empty() || h.empty()) continue;
    auto fwd = cart::wer_from_tokens(r, h), back = cart::wer_from_tokens(h, r);
    EXPECT_EQ(fwd.substitutions, back.substitutions);
    EXPECT_EQ(fwd.deletions, back.insertions);
    EXPECT_EQ(fwd.insertions, back.deletions);
  }
}

TEST(WordAlignProperty, TriangleInequality) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    auto a = random_tokens(rng, 9), b = random_tokens(rng, 9), c = random_tokens(rng, 9);
    EXPECT_LE(cart::word_align(a, c).cost(), cart::word_align(a, b).cost() + cart::word_align(b, c).cost());
  }
}

TEST(Wer, IdenticalIsZero) {
  EXPECT_EQ(cart::wer("Das ist ein Test.", "Das ist ein Test.").wer(), 0.0);
}

TEST(Wer, PunctuationStrippedBeforeAlignment) {
  auto r = cart::wer("das ist ein Test", "das ist kein Test.");
  EXPECT_EQ(r.substitutions, 1u);
  EXPECT_EQ(r.ref_len, 4u);
  EXPECT_DOUBLE_EQ(r.wer(), 0.25);
}

TEST(Wer, EmptyReference) {
  EXPECT_THROW(cart::wer("", "hallo"), cart::Error);
  try {
    cart::wer("...", "hallo");
  } catch (const cart::Error& e) {
    EXPECT_EQ(e.code(), cart::ErrorCode::EmptyReference);
  }
  EXPECT_EQ(cart::wer("", "").wer(), 0.0);
}

TEST(Wer, CanExceedOne) {
  EXPECT_DOUBLE_EQ(cart::wer("a", "b c d").wer(), 3.0);
}

TEST(Wer, InvariantUnderNormalizationPreservingChanges) {
  EXPECT_EQ(cart::wer("Er kam.", "er kam"), cart::wer("Er kam.", "Er kam!!"));
  EXPECT_EQ(cart::wer("Es kostet 200 €", "es kostet zweihundert Euro").errors(), 0u);
}

TEST(Punctuation, Examples) {
  EXPECT_EQ(cart::punctuation_errors("Hallo, Welt.", "Hallo, Welt."), 0u);
  EXPECT_EQ(cart::punctuation_errors("Hallo, Welt.", "Hallo Welt."), 1u);
  EXPECT_EQ(cart::punctuation_errors("Ende.", "Ende!"), 1u);
  // anchored to words: a wrong word does not shift later projections
  EXPECT_EQ(cart::punctuation_errors("Ich gehe, dann esse ich.", "Ich sehe, dann esse ich."), 0u);
}

TEST(Punctuation, LeadingPunctuationAttachesToPreviousWord) {
  auto p = cart::project_punctuation("„Hallo“, sagte er: „Komm!“");
  EXPECT_EQ(p.prefix, U"„");
  ASSERT_EQ(p.words.size(), 4u);
  EXPECT_EQ(p.words[0].punctuation, U"“,");
  EXPECT_EQ(p.words[2].punctuation, U":„");
  EXPECT_EQ(p.words[3].punctuation, U"!“");
}

TEST(Capitalization, Examples) {
  EXPECT_EQ(cart::capitalization_errors("Hallo Welt", "Hallo Welt"), 0u);
  EXPECT_EQ(cart::capitalization_errors("Hallo", "hallo"), 1u);
  EXPECT_EQ(cart::capitalization_errors("Haus", "Maus"), 0u);
  EXPECT_EQ(cart::capitalization_errors("Der Hund bellt.", "der hund Bellt"), 3u);
}

TEST(ReductionReport, Examples) {
  const std::string ref = "Das ist ein kleiner Test für die Auswertung.";
  const std::string base = "Das ist kein kleiner Text für Auswertung.";
  auto same = cart::reduction_report(ref, base, base);
  EXPECT_EQ(same.relative_wer_reduction, 0.0);
  auto perfect = cart::reduction_report(ref, base, ref, {{1, 3}});
  EXPECT_EQ(perfect.relative_wer_reduction, 1.0);
  EXPECT_EQ(perfect.edited.errors(), 0u);
  EXPECT_EQ(perfect.per_user_edit_counts.at(1), 3u);
  auto partial = cart::reduction_report(ref, base, "Das ist ein kleiner Text für Auswertung.");
  EXPECT_NEAR(partial.relative_wer_reduction, 1.0 - 2.0 / 3.0, 1e-12);
}

TEST(ReductionReport, OneThirdReduction) {
  EXPECT_NEAR(cart::relative_reduction(0.093, 0.062), 0.333, 0.001);
}

TEST(ReductionReport, ZeroBaseline) {
  EXPECT_EQ(cart::relative_reduction(0, 0), 0.0);
  EXPECT_TRUE(std::isinf(cart::relative_reduction(0, 2)));
  auto d = cart::reduction_report("a b", "a b", "a c");
  EXPECT_TRUE(cart::to_json(d)["relative_wer_reduction"].is_null());
}

TEST(Aggregate, MeanAndPooled) {
  cart::MetricsDelta a, b;
  a.baseline = {10, 0, 0, 100};
  a.edited = {5, 0, 0, 100};
  a.relative_wer_reduction = 0.5;
  b.baseline = {30, 0, 0, 100};
  b.edited = {30, 0, 0, 100};
  b.relative_wer_reduction = 0.0;
  std::vector<cart::MetricsDelta> v{a, b};
  auto agg = cart::aggregate(v);
  EXPECT_DOUBLE_EQ(agg.mean_wer_reduction, 0.25);
  EXPECT_DOUBLE_EQ(agg.pooled_wer_reduction, 1.0 - 35.0 / 40.0);
}

TEST(Json, WerReportShape) {
  auto j = cart::to_json(cart::WerReport{1, 2, 3, 12});
  EXPECT_EQ(j["errors"], 6);
  EXPECT_DOUBLE_EQ(j["wer"].get<double>(), 0.5);
}

}  // namespace
