#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <string>

#include "cart/normalizer.hpp"
#include "support/generators.hpp"

namespace {

using cart::testing::random_text;

using cart::normalize;
using cart::number_to_german;

// Independent unit/tens lookup used to cross-check number_to_german on 0..120.
std::string oracle_cardinal(int n) {
  static const char* const kWords[] = {"null",     "eins",     "zwei",     "drei",     "vier",     "fünf",
                                       "sechs",    "sieben",   "acht",     "neun",     "zehn",     "elf",
                                       "zwölf",    "dreizehn", "vierzehn", "fünfzehn", "sechzehn", "siebzehn",
                                       "achtzehn", "neunzehn"};
  static const char* const kUnitPrefix[] = {"", "ein", "zwei", "drei", "vier", "fünf", "sechs", "sieben", "acht", "neun"};
  static const char* const kDecades[] = {"", "zehn", "zwanzig", "dreißig", "vierzig", "fünfzig", "sechzig", "siebzig", "achtzig", "neunzig"};
  if (n < 20) return kWords[n];
  if (n < 100) {
    const int u = n % 10;
    return u == 0 ? std::string(kDecades[n / 10]) : std::string(kUnitPrefix[u]) + "und" + kDecades[n / 10];
  }
  // 100..120
  return "einhundert" + (n == 100 ? std::string() : oracle_cardinal(n - 100));
}

TEST(NumberToGerman, MatchesLookupOracleUpTo120) {
  for (int n = 0; n <= 120; ++n) {
    ASSERT_EQ(number_to_german(n).value(), oracle_cardinal(n)) << n;
  }
}

TEST(NumberToGerman, CommonAndBaseCases) {
  EXPECT_EQ(number_to_german(200), "zweihundert");
  EXPECT_EQ(number_to_german(0), "null");
  EXPECT_EQ(number_to_german(21), "einundzwanzig");
  EXPECT_EQ(number_to_german(1), "eins");
}

TEST(NumberToGerman, ThousandsUseCompoundForms) {
  EXPECT_EQ(number_to_german(1000), "eintausend");
  EXPECT_EQ(number_to_german(1001), "eintausendeins");
  EXPECT_EQ(number_to_german(1381), "eintausenddreihunderteinundachtzig");
  EXPECT_EQ(number_to_german(21000), "einundzwanzigtausend");
  EXPECT_EQ(number_to_german(201001), "zweihunderteintausendeins");
  EXPECT_EQ(number_to_german(999999), "neunhundertneunundneunzigtausendneunhundertneunundneunzig");
}

TEST(NumberToGerman, OutOfRange) {
  EXPECT_FALSE(number_to_german(1000000).has_value());
}

TEST(FoldDiacritics, Basics) {
  EXPECT_EQ(cart::fold_diacritics(std::string_view("ä")), "ae");
  EXPECT_EQ(cart::fold_diacritics(std::string_view("ß")), "ss");
  EXPECT_EQ(cart::fold_diacritics(std::string_view("abc")), "abc");
  EXPECT_EQ(cart::fold_diacritics(std::string_view("ÄÖÜ öü")), "AeOeUe oeue");
}

TEST(Normalize, RuleExamples) {
  EXPECT_EQ(normalize("Das kostet 200 €.").content, "das kostet zweihundert euro");
  EXPECT_EQ(normalize("").content, "");
  EXPECT_EQ(normalize("z.B. gibt's Käse").content, "zum beispiel gibt es kaese");
  EXPECT_EQ(normalize("Straße").content, "strasse");
  EXPECT_EQ(normalize("Äpfel").content, "aepfel");
  EXPECT_EQ(normalize("50 %").content, "fuenfzig prozent");
}

TEST(Normalize, CurrencyBeforeNumbers) {
  EXPECT_EQ(normalize("200€").content, "zweihundert euro");
  EXPECT_EQ(normalize("Es sind 200 €").content, "es sind zweihundert euro");
}

TEST(Normalize, TypographicApostropheAndQuotes) {
  EXPECT_EQ(normalize("„Gibt’s das?“").content, "gibt es das");
  EXPECT_EQ(normalize("So'n Quatsch, 'ne Idee").content, "so ein quatsch eine idee");
}

TEST(Normalize, AbbreviationsRespectWordBoundaries) {
  EXPECT_EQ(normalize("Ich bzw. du").content, "ich beziehungsweise du");
  EXPECT_EQ(normalize("z. B. heute, d.h. jetzt").content, "zum beispiel heute das heisst jetzt");
  // "ca." only at a word start
  EXPECT_EQ(normalize("Afrika.").content, "afrika");
}

TEST(Normalize, WhitespaceHygiene) {
  EXPECT_EQ(normalize("  a\t\tb \n c d  ").content, "a b c d");
  EXPECT_EQ(normalize("Hallo,Welt").content, "hallo welt");
}

TEST(Normalize, ThousandsSeparatorAndWarnings) {
  auto r = cart::Normalizer::standard().run("1.000 Leute und 3,5 Liter und 1234567 Sterne");
  EXPECT_EQ(r.text.content, "eintausend leute und drei fuenf liter und 1234567 sterne");
  ASSERT_EQ(r.warnings.size(), 2u);
  EXPECT_EQ(r.warnings[0].kind, cart::NormalizeWarning::Kind::DecimalNumber);
  EXPECT_EQ(r.warnings[1].kind, cart::NormalizeWarning::Kind::NumberOutOfRange);
  EXPECT_EQ(r.warnings[1].token, "1234567");
}

TEST(Normalize, MixedTokensKeepAdjacency) {
  EXPECT_EQ(normalize("3D-Drucker in den 20er Jahren").content, "dreid drucker in den zwanziger jahren");
}

TEST(Dictionary, ParseAndVersion) {
  auto d = cart::Dictionary::parse("# version: 7\n# comment\nz.B.\tzum Beispiel\r\n\nusw.\tund so weiter");
  EXPECT_EQ(d.version, "7");
  ASSERT_EQ(d.entries.size(), 2u);
  EXPECT_EQ(d.entries[1].second, "und so weiter");
  EXPECT_THROW(cart::Dictionary::parse("no tab here"), cart::Error);
}

TEST(Dictionary, BuiltinVersionsArePinned) {
  const auto& n = cart::Normalizer::standard();
  EXPECT_EQ(n.abbreviation_version(), "1");
  EXPECT_EQ(n.contraction_version(), "1");
  EXPECT_GE(n.abbreviation_count(), 30u);
  EXPECT_GE(n.contraction_count(), 20u);
}

TEST(Dictionary, CustomDictionaryIsUsed) {
  cart::Normalizer custom(cart::Dictionary::parse("Hbf.\tHauptbahnhof"), cart::Dictionary::parse(""));
  EXPECT_EQ(custom("Am Hbf. warten").content, "am hauptbahnhof warten");
  EXPECT_EQ(custom("z.B.").content, "z b");
}


TEST(NormalizeProperty, IdempotentAndClean) {
  std::mt19937_64 rng(20240501);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto text = random_text(rng);
    const auto result = cart::Normalizer::standard().run(text);
    const auto& once = result.text;
    const auto twice = normalize(once.content);
    ASSERT_EQ(once, twice) << "input: " << text;
    const auto& c = once.content;
    EXPECT_EQ(c.find("  "), std::string::npos);
    if (!c.empty()) {
      EXPECT_NE(c.front(), ' ');
      EXPECT_NE(c.back(), ' ');
    }
    for (std::string_view bad : {"ä", "ö", "ü", "ß", ".", ",", "€"}) EXPECT_EQ(c.find(bad), std::string::npos) << text;
    const bool out_of_range = std::any_of(result.warnings.begin(), result.warnings.end(), [](const auto& w) {
      return w.kind == cart::NormalizeWarning::Kind::NumberOutOfRange;
    });
    if (!out_of_range) {
      EXPECT_EQ(c.find_first_of("0123456789"), std::string::npos) << text;
    }
  }
}

}  // namespace
