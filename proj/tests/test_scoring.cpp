#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <tuple>

#include "binary_goldens.hpp"
#include "tcd/scoring.hpp"

using namespace tcd;
using tcd::goldens::kBinaryGolden;

TEST(ScoreBinary, GoldenSuite) {
  static_assert(std::size(kBinaryGolden) >= 30);
  for (const auto& c : kBinaryGolden) {
    const auto v = score_binary(c.answer, c.gt);
    EXPECT_EQ(v.correct, c.correct) << "'" << c.answer << "'";
    EXPECT_EQ(v.compliant, c.compliant) << "'" << c.answer << "'";
    EXPECT_FALSE(v.judge_raw.has_value());
  }
}

TEST(ScoreBinary, FirstWord) {
  EXPECT_EQ(first_word("  Hello, world"), "hello");
  EXPECT_EQ(first_word("\xe3\x80\x90YES\xe3\x80\x91 ok"), "yes");
  EXPECT_EQ(first_word(""), "");
}

TEST(ScoreBinary, TotalOverArbitraryBytes) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 24);
  for (int i = 0; i < 5000; ++i) {
    std::string s(static_cast<std::size_t>(len(rng)), '\0');
    for (auto& ch : s) ch = static_cast<char>(byte(rng));
    const auto v = score_binary(s, BinaryAnswer::yes);
    if (v.correct) {
      EXPECT_TRUE(v.compliant);
    }
  }
}

namespace {

BenchmarkItem item(const std::string& id, Category c, std::vector<QuestionType> qs) {
  BenchmarkItem it;
  it.id = id;
  it.category = c;
  for (auto q : qs) {
    Question question;
    question.qtype = q;
    if (q == QuestionType::binary) question.gt_binary = BinaryAnswer::no;
    it.questions.push_back(question);
  }
  return it;
}

/// Manifest with `n[c]` single-binary-question items per category and the
/// matching outcomes, `k[c]` of them correct.
std::pair<DatasetManifest, std::vector<QuestionOutcome>> binary_population(std::array<std::size_t, 3> n,
                                                                           std::array<std::size_t, 3> k) {
  DatasetManifest m;
  std::vector<QuestionOutcome> out;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n[c]; ++i) {
      const std::string id = std::to_string(c) + "_" + std::to_string(i);
      m.items.push_back(item(id, kCategories[c], {QuestionType::binary}));
      out.push_back({id, 0, Verdict{i < k[c], true, std::nullopt}});
    }
  }
  return {m, out};
}

std::string pct(std::optional<double> v) { return format_percent(v); }

}  // namespace

TEST(Aggregate, ReproducesReferenceBinaryAccuracies) {
  // Default decoding: 56/114, 136/193, 73/102 over 409 binary questions.
  auto [m, out] = binary_population({114, 193, 102}, {56, 136, 73});
  const auto r = aggregate(out, m);
  EXPECT_EQ(pct(r.cell(Category::entire, QuestionType::binary).accuracy()), "49.12");
  EXPECT_EQ(pct(r.cell(Category::mix, QuestionType::binary).accuracy()), "70.47");
  EXPECT_EQ(pct(r.cell(Category::misleading, QuestionType::binary).accuracy()), "71.57");
  EXPECT_NEAR(*r.overall_binary.accuracy() * 100.0, 64.79, 0.01);
  EXPECT_EQ(pct(r.overall_binary.accuracy()), "64.79");

  auto [m2, out2] = binary_population({114, 193, 102}, {58, 142, 76});
  const auto t = aggregate(out2, m2);
  EXPECT_EQ(pct(t.cell(Category::entire, QuestionType::binary).accuracy()), "50.88");
  EXPECT_EQ(pct(t.cell(Category::mix, QuestionType::binary).accuracy()), "73.58");
  EXPECT_EQ(pct(t.cell(Category::misleading, QuestionType::binary).accuracy()), "74.51");
  EXPECT_EQ(pct(t.overall_binary.accuracy()), "67.48");
}

TEST(Aggregate, BackSolvedDenominatorsAreConsistentWithBothRows) {
  // Independent search: per-category question counts up to 250 for which
  // some correct count rounds to each reference value in both rows, and the
  // pooled overall also rounds to the reference overall in both rows.
  const std::array<std::array<double, 4>, 2> rows{{{49.12, 70.47, 71.57, 64.79}, {50.88, 73.58, 74.51, 67.48}}};
  auto hits = [](std::size_t n, double target) {
    std::vector<std::size_t> ks;
    for (std::size_t k = 0; k <= n; ++k) {
      if (std::abs(std::round(10000.0 * k / n) / 100.0 - target) < 1e-9) ks.push_back(k);
    }
    return ks;
  };
  std::vector<std::array<std::size_t, 3>> solutions;
  std::array<std::vector<std::size_t>, 3> cands;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t n = 1; n <= 250; ++n) {
      if (!hits(n, rows[0][c]).empty() && !hits(n, rows[1][c]).empty()) cands[c].push_back(n);
    }
  }
  for (auto a : cands[0]) {
    for (auto b : cands[1]) {
      for (auto c : cands[2]) {
        bool ok = true;
        for (const auto& row : rows) {
          bool any = false;
          for (auto ka : hits(a, row[0])) {
            for (auto kb : hits(b, row[1])) {
              for (auto kc : hits(c, row[2])) {
                const double overall = std::round(10000.0 * (ka + kb + kc) / (a + b + c)) / 100.0;
                any = any || std::abs(overall - row[3]) < 1e-9;
              }
            }
          }
          ok = ok && any;
        }
        if (ok) solutions.push_back({a, b, c});
      }
    }
  }
  EXPECT_NE(std::find(solutions.begin(), solutions.end(), std::array<std::size_t, 3>{114, 193, 102}), solutions.end());
}

TEST(Aggregate, ErrorsAreExcludedFromDenominators) {
  DatasetManifest m;
  m.items.push_back(item("a", Category::entire, {QuestionType::binary, QuestionType::open_ended}));
  m.items.push_back(item("b", Category::entire, {QuestionType::binary}));
  m.items.push_back(item("c", Category::mix, {QuestionType::binary}));
  std::vector<QuestionOutcome> out{{"a", 0, Verdict{true, true, {}}},
                                   {"a", 1, std::string("judge unavailable")},
                                   {"b", 0, std::string("backend down")},
                                   {"c", 0, Verdict{false, false, {}}}};
  const auto r = aggregate(out, m);
  const auto& e = r.cell(Category::entire, QuestionType::binary);
  EXPECT_EQ(e.answered, 1u);
  EXPECT_EQ(e.errors, 1u);
  EXPECT_EQ(e.accuracy(), 1.0);
  EXPECT_FALSE(r.cell(Category::entire, QuestionType::open_ended).accuracy().has_value());
  EXPECT_EQ(r.cell(Category::entire, QuestionType::open_ended).errors, 1u);
  EXPECT_EQ(r.errors, 2u);
  EXPECT_EQ(r.overall_binary.answered, 2u);
  EXPECT_EQ(r.compliance_rate(), 0.5);
  EXPECT_FALSE(r.cell(Category::misleading, QuestionType::binary).accuracy().has_value());
}

TEST(Aggregate, ConservationAndOrderIndependence) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    DatasetManifest m;
    std::vector<QuestionOutcome> out;
    std::uniform_int_distribution<int> nq(1, 3), coin(0, 3);
    for (int i = 0; i < 40; ++i) {
      std::vector<QuestionType> qs;
      for (int q = nq(rng); q > 0; --q) qs.push_back(coin(rng) ? QuestionType::binary : QuestionType::open_ended);
      const std::string id = "i" + std::to_string(i);
      m.items.push_back(item(id, kCategories[static_cast<std::size_t>(i % 3)], qs));
      for (std::size_t q = 0; q < qs.size(); ++q) {
        if (coin(rng) == 0) {
          out.push_back({id, q, std::string("err")});
        } else {
          out.push_back({id, q, Verdict{coin(rng) > 1, coin(rng) > 0, {}}});
        }
      }
    }
    const auto r = aggregate(out, m);
    std::size_t total = 0;
    for (const auto& [cat, cols] : r.cells) {
      for (const auto& [col, cell] : cols) {
        total += cell.answered + cell.errors;
        EXPECT_LE(cell.correct, cell.answered);
      }
    }
    EXPECT_EQ(total, m.question_count());
    EXPECT_EQ(r.overall_binary.answered + r.overall_binary.errors + r.overall_description.answered +
                  r.overall_description.errors,
              m.question_count());
    std::shuffle(out.begin(), out.end(), rng);
    EXPECT_EQ(to_json(aggregate(out, m)).dump(), to_json(r).dump());
  }
}

TEST(Aggregate, RejectsUnknownAndDuplicateOutcomes) {
  DatasetManifest m;
  m.items.push_back(item("a", Category::entire, {QuestionType::binary}));
  EXPECT_THROW(aggregate({{"zz", 0, Verdict{}}}, m), ContractViolation);
  EXPECT_THROW(aggregate({{"a", 1, Verdict{}}}, m), ContractViolation);
  EXPECT_THROW(aggregate({{"a", 0, Verdict{}}, {"a", 0, Verdict{}}}, m), ContractViolation);
}

TEST(Report, JsonRoundTripAndTable) {
  auto [m, out] = binary_population({3, 2, 1}, {1, 2, 0});
  auto r = aggregate(out, m);
  r.metadata["mode"] = "tcd";
  const auto j = to_json(r);
  const auto back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_THROW(report_from_json(nlohmann::json::object()), SchemaError);

  const std::string table = render_table(r, "TCD");
  const std::string want =
      "    | Entire |       | Mix    |       | Misleading |       | Overall |       | Yes/No\n"
      "    | Binary | Desc. | Binary | Desc. | Binary     | Desc. | Binary  | Desc. | Rate\n"
      "----+--------+-------+--------+-------+------------+-------+---------+-------+-------\n"
      "TCD | 33.33  | -     | 100.00 | -     | 0.00       | -     | 50.00   | -     | 100.00\n";
  EXPECT_EQ(table, want);
}

TEST(Report, FormatPercent) {
  EXPECT_EQ(format_percent(std::nullopt), "-");
  EXPECT_EQ(format_percent(0.5), "50.00");
  EXPECT_EQ(format_percent(2.0 / 3.0), "66.67");
}
