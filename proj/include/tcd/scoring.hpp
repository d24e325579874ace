#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcd/dataset.hpp"

namespace tcd {

struct Verdict {
  bool correct = false;
  bool compliant = false;  // binary only: the answer opened with yes/no
  std::optional<std::string> judge_raw;  // open-ended only

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

namespace detail {

// Multi-byte punctuation stripped from the edges of the first word, in
// addition to ASCII punctuation.
inline constexpr std::string_view kWidePunctuation[] = {
    "、", "。", "，", "．", "！", "？", "：", "；", "（", "）",
    "「", "」", "『", "』", "【", "】", "《", "》", "＂", "＇",
    "“", "”", "‘", "’", "…", "—", "–", "·", "¿", "¡",
};

inline constexpr std::string_view kWideSpaces[] = {"\xe3\x80\x80", "\xc2\xa0"};  // U+3000, U+00A0

inline std::size_t wide_prefix(std::string_view s, std::span<const std::string_view> set) {
  for (auto p : set) {
    if (s.substr(0, p.size()) == p) return p.size();
  }
  return 0;
}

inline std::size_t wide_suffix(std::string_view s, std::span<const std::string_view> set) {
  for (auto p : set) {
    if (s.size() >= p.size() && s.substr(s.size() - p.size()) == p) return p.size();
  }
  return 0;
}

inline bool ascii_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool ascii_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace detail

/// First whitespace-delimited word of `answer`, stripped of surrounding
/// punctuation and lowercased (ASCII).
inline std::string first_word(std::string_view answer) {
  using namespace detail;
  std::string_view s = answer;
  for (;;) {
    if (!s.empty() && ascii_space(s.front())) {
      s.remove_prefix(1);
    } else if (auto n = wide_prefix(s, kWideSpaces)) {
      s.remove_prefix(n);
    } else {
      break;
    }
  }
  std::size_t end = 0;
  while (end < s.size() && !ascii_space(s[end]) && wide_prefix(s.substr(end), kWideSpaces) == 0) ++end;
  std::string_view word = s.substr(0, end);
  for (;;) {
    if (!word.empty() && ascii_punct(word.front())) {
      word.remove_prefix(1);
    } else if (auto n = wide_prefix(word, kWidePunctuation)) {
      word.remove_prefix(n);
    } else {
      break;
    }
  }
  for (;;) {
    if (!word.empty() && ascii_punct(word.back())) {
      word.remove_suffix(1);
    } else if (auto n = wide_suffix(word, kWidePunctuation)) {
      word.remove_suffix(n);
    } else {
      break;
    }
  }
  std::string out(word);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// First-word yes/no protocol. Total: never throws for any input.
inline Verdict score_binary(std::string_view raw_answer, BinaryAnswer gt) noexcept {
  Verdict v;
  try {
    const std::string w = first_word(raw_answer);
    v.compliant = w == "yes" || w == "no";
    v.correct = v.compliant && w == to_string(gt);
  } catch (...) {
    v = Verdict{};
  }
  return v;
}

/// Verdict or error for one (item, question) pair.
struct QuestionOutcome {
  std::string item_id;
  std::size_t question_index = 0;
  std::variant<Verdict, std::string> result;  // string: error message (unanswered)

  bool errored() const { return std::holds_alternative<std::string>(result); }
};

struct CellStats {
  std::size_t answered = 0;
  std::size_t correct = 0;
  std::size_t errors = 0;

  std::optional<double> accuracy() const {
    if (answered == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(answered);
  }

  void add(const CellStats& o) {
    answered += o.answered;
    correct += o.correct;
    errors += o.errors;
  }
};

struct EvaluationReport {
  // Indexed by category name then "binary" / "description".
  std::map<std::string, std::map<std::string, CellStats>> cells;
  CellStats overall_binary;
  CellStats overall_description;
  std::size_t compliant = 0;  // over answered binary questions
  std::size_t errors = 0;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  std::optional<double> compliance_rate() const {
    if (overall_binary.answered == 0) return std::nullopt;
    return static_cast<double>(compliant) / static_cast<double>(overall_binary.answered);
  }

  const CellStats& cell(Category c, QuestionType q) const {
    return cells.at(to_string(c)).at(q == QuestionType::binary ? "binary" : "description");
  }
};

inline const char* column_name(QuestionType q) { return q == QuestionType::binary ? "binary" : "description"; }

/// Folds outcomes into per-category accuracies. Outcomes are processed in
/// (item id, question index) order so the result does not depend on input
/// order. Errored questions are excluded from accuracy and counted in
/// `errors`.
inline EvaluationReport aggregate(std::vector<QuestionOutcome> outcomes, const DatasetManifest& manifest) {
  std::sort(outcomes.begin(), outcomes.end(), [](const QuestionOutcome& a, const QuestionOutcome& b) {
    return std::tie(a.item_id, a.question_index) < std::tie(b.item_id, b.question_index);
  });
  EvaluationReport r;
  for (auto c : kCategories) {
    r.cells[to_string(c)]["binary"] = {};
    r.cells[to_string(c)]["description"] = {};
  }
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& o : outcomes) {
    const auto* item = manifest.find(o.item_id);
    if (item == nullptr || o.question_index >= item->questions.size()) {
      throw ContractViolation("aggregate: outcome for unknown question " + o.item_id + "#" +
                              std::to_string(o.question_index));
    }
    if (!seen.emplace(o.item_id, o.question_index).second) {
      throw ContractViolation("aggregate: duplicate outcome for " + o.item_id + "#" + std::to_string(o.question_index));
    }
    const auto qtype = item->questions[o.question_index].qtype;
    CellStats& cell = r.cells[to_string(item->category)][column_name(qtype)];
    if (o.errored()) {
      ++cell.errors;
      ++r.errors;
      continue;
    }
    const auto& v = std::get<Verdict>(o.result);
    ++cell.answered;
    if (v.correct) ++cell.correct;
    if (qtype == QuestionType::binary && v.compliant) ++r.compliant;
  }
  for (const auto& [cat, cols] : r.cells) {
    r.overall_binary.add(cols.at("binary"));
    r.overall_description.add(cols.at("description"));
  }
  return r;
}

namespace detail {

inline nlohmann::ordered_json cell_json(const CellStats& c) {
  nlohmann::ordered_json j;
  j["accuracy"] = c.accuracy() ? nlohmann::ordered_json(*c.accuracy()) : nlohmann::ordered_json(nullptr);
  j["correct"] = c.correct;
  j["answered"] = c.answered;
  j["errors"] = c.errors;
  return j;
}

inline CellStats cell_from_json(const nlohmann::json& j) {
  return {j.at("answered").get<std::size_t>(), j.at("correct").get<std::size_t>(), j.at("errors").get<std::size_t>()};
}

}  // namespace detail

/// Canonical report JSON; identical reports serialize to identical bytes.
inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["metadata"] = r.metadata;
  nlohmann::ordered_json cats;
  for (auto c : kCategories) {
    const auto& cols = r.cells.at(to_string(c));
    cats[to_string(c)]["binary"] = detail::cell_json(cols.at("binary"));
    cats[to_string(c)]["description"] = detail::cell_json(cols.at("description"));
  }
  j["categories"] = std::move(cats);
  j["overall"]["binary"] = detail::cell_json(r.overall_binary);
  j["overall"]["description"] = detail::cell_json(r.overall_description);
  const auto rate = r.compliance_rate();
  j["compliance"]["rate"] = rate ? nlohmann::ordered_json(*rate) : nlohmann::ordered_json(nullptr);
  j["compliance"]["compliant"] = r.compliant;
  j["errors"] = r.errors;
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  try {
    EvaluationReport r;
    for (auto c : kCategories) {
      const auto& jc = j.at("categories").at(to_string(c));
      r.cells[to_string(c)]["binary"] = detail::cell_from_json(jc.at("binary"));
      r.cells[to_string(c)]["description"] = detail::cell_from_json(jc.at("description"));
    }
    r.overall_binary = detail::cell_from_json(j.at("overall").at("binary"));
    r.overall_description = detail::cell_from_json(j.at("overall").at("description"));
    r.compliant = j.at("compliance").at("compliant").get<std::size_t>();
    r.errors = j.at("errors").get<std::size_t>();
    if (j.contains("metadata")) r.metadata = nlohmann::ordered_json::parse(j["metadata"].dump());
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("report: ") + ex.what());
  }
}

inline std::string format_percent(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

/// Plain-text table: Entire / Mix / Misleading / Overall, each split into
/// Binary and Desc. accuracy, plus the yes/no first-word rate.
inline std::string render_table(const EvaluationReport& r, const std::string& row_label = "run") {
  std::vector<std::string> cells{row_label};
  for (auto c : kCategories) {
    cells.push_back(format_percent(r.cell(c, QuestionType::binary).accuracy()));
    cells.push_back(format_percent(r.cell(c, QuestionType::open_ended).accuracy()));
  }
  cells.push_back(format_percent(r.overall_binary.accuracy()));
  cells.push_back(format_percent(r.overall_description.accuracy()));
  cells.push_back(format_percent(r.compliance_rate()));

  const std::vector<std::string> group{"", "Entire", "", "Mix", "", "Misleading", "", "Overall", "", "Yes/No"};
  const std::vector<std::string> sub{"", "Binary", "Desc.", "Binary", "Desc.", "Binary", "Desc.", "Binary", "Desc.", "Rate"};
  std::vector<std::size_t> width(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    width[i] = std::max({cells[i].size(), group[i].size(), sub[i].size()});
  }
  auto line = [&](const std::vector<std::string>& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += i == 0 ? "" : " | ";
      out += row[i] + std::string(width[i] - row[i].size(), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string rule;
  for (std::size_t i = 0; i < width.size(); ++i) rule += (i ? "-+-" : "") + std::string(width[i], '-');
  std::string out = line(group) + line(sub) + rule + "\n" + line(cells);
  if (r.errors != 0) out += "unanswered (errors): " + std::to_string(r.errors) + "\n";
  return out;
}

}  // namespace tcd
