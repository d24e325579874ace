#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcd/error.hpp"
#include "tcd/frames.hpp"

namespace tcd {

enum class Category { entire, mix, misleading };
inline constexpr std::array kCategories{Category::entire, Category::mix, Category::misleading};

enum class Scenario { pet_animal, sports_competition, food_drink, gym_exercises, vehicle, life_record, nature };
enum class QuestionType { binary, open_ended };
enum class BinaryAnswer { yes, no };

/// Template a question's text was rendered from. `custom` opts out of the
/// exact-text check.
enum class QuestionForm { happen, did, is, entire_video, anomaly, describe, custom };

// clang-format off
NLOHMANN_JSON_SERIALIZE_ENUM(Category, {
    {Category::entire, "entire"}, {Category::mix, "mix"}, {Category::misleading, "misleading"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Scenario, {
    {Scenario::pet_animal, "pet_animal"}, {Scenario::sports_competition, "sports_competition"},
    {Scenario::food_drink, "food_drink"}, {Scenario::gym_exercises, "gym_exercises"},
    {Scenario::vehicle, "vehicle"}, {Scenario::life_record, "life_record"}, {Scenario::nature, "nature"}})
NLOHMANN_JSON_SERIALIZE_ENUM(QuestionType, {
    {QuestionType::binary, "binary"}, {QuestionType::open_ended, "open_ended"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BinaryAnswer, {{BinaryAnswer::yes, "yes"}, {BinaryAnswer::no, "no"}})
NLOHMANN_JSON_SERIALIZE_ENUM(QuestionForm, {
    {QuestionForm::happen, "happen"}, {QuestionForm::did, "did"}, {QuestionForm::is, "is"},
    {QuestionForm::entire_video, "entire_video"}, {QuestionForm::anomaly, "anomaly"},
    {QuestionForm::describe, "describe"}, {QuestionForm::custom, "custom"}})
// clang-format on

template <typename E>
std::string enum_name(E value) {
  return nlohmann::json(value).get<std::string>();
}

inline std::string to_string(Category c) { return enum_name(c); }
inline std::string to_string(QuestionType q) { return enum_name(q); }
inline std::string to_string(BinaryAnswer a) { return a == BinaryAnswer::yes ? "yes" : "no"; }

inline constexpr std::string_view kDescribePrompt = "Please describe this video in detail.";
inline constexpr std::string_view kAnomalyPrompt = "Did any accident or anything unexpected happen in the video?";

/// Binary form used when a question does not name one.
inline QuestionForm default_binary_form(Category c) {
  switch (c) {
    case Category::misleading: return QuestionForm::happen;
    case Category::entire: return QuestionForm::did;
    case Category::mix: return QuestionForm::entire_video;
  }
  return QuestionForm::custom;
}

inline bool form_allowed(Category c, QuestionType q, QuestionForm f) {
  if (f == QuestionForm::custom) return true;
  if (q == QuestionType::open_ended) return f == QuestionForm::describe;
  switch (c) {
    case Category::misleading: return f == QuestionForm::happen;
    case Category::entire: return f == QuestionForm::did || f == QuestionForm::is;
    case Category::mix: return f == QuestionForm::entire_video || f == QuestionForm::anomaly;
  }
  return false;
}

/// Canonical question text for a category/type/form.
inline std::string render_question(Category category, QuestionType qtype, std::string_view subject = {},
                                   std::string_view event = {}, std::optional<QuestionForm> form = std::nullopt) {
  if (qtype == QuestionType::open_ended) return std::string(kDescribePrompt);
  const QuestionForm f = form.value_or(default_binary_form(category));
  if (!form_allowed(category, qtype, f) || f == QuestionForm::custom) {
    throw ContractViolation("render_question: form '" + enum_name(f) +
                            "' has no template for " + to_string(category) + " binary questions");
  }
  if (f == QuestionForm::anomaly) return std::string(kAnomalyPrompt);
  if (subject.empty() || event.empty()) {
    throw ContractViolation("render_question: " + to_string(category) + " binary template needs subject and event");
  }
  const std::string se = std::string(subject) + " " + std::string(event);
  switch (f) {
    case QuestionForm::happen: return "Did the " + se + " happen in the video?";
    case QuestionForm::did: return "Did the " + se + " in the video?";
    case QuestionForm::is: return "Is the " + se + " in the video?";
    case QuestionForm::entire_video: return "Did the " + se + " in the entire video?";
    default: break;
  }
  throw ContractViolation("render_question: unsupported form");
}

struct Question {
  QuestionType qtype = QuestionType::binary;
  std::string text;
  std::optional<BinaryAnswer> gt_binary;
  std::optional<std::string> gt_description;
  std::optional<std::string> subject;
  std::optional<std::string> event;
  QuestionForm form = QuestionForm::custom;

  friend bool operator==(const Question&, const Question&) = default;
};

struct VideoRef {
  enum class Kind { features, frames_dir };
  Kind kind = Kind::features;
  std::string path;  // relative to the manifest directory unless absolute
  double duration_seconds = 0.0;

  friend bool operator==(const VideoRef&, const VideoRef&) = default;
};

struct BenchmarkItem {
  std::string id;
  Category category = Category::entire;
  Scenario scenario = Scenario::life_record;
  VideoRef video;
  std::vector<Question> questions;

  friend bool operator==(const BenchmarkItem&, const BenchmarkItem&) = default;
};

struct DatasetCounts {
  std::map<std::string, std::size_t> items;      // per category
  std::map<std::string, std::size_t> questions;  // per question type

  friend bool operator==(const DatasetCounts&, const DatasetCounts&) = default;
};

struct DatasetManifest {
  std::vector<BenchmarkItem> items;
  DatasetCounts counts;
  std::filesystem::path base_dir;

  const BenchmarkItem* find(const std::string& id) const {
    for (const auto& it : items) {
      if (it.id == id) return &it;
    }
    return nullptr;
  }

  std::size_t question_count() const {
    std::size_t n = 0;
    for (const auto& it : items) n += it.questions.size();
    return n;
  }
};

inline DatasetCounts tally(const std::vector<BenchmarkItem>& items) {
  DatasetCounts c;
  for (auto cat : kCategories) c.items[to_string(cat)] = 0;
  c.questions["binary"] = 0;
  c.questions["open_ended"] = 0;
  for (const auto& it : items) {
    ++c.items[to_string(it.category)];
    for (const auto& q : it.questions) ++c.questions[to_string(q.qtype)];
  }
  return c;
}

struct Violation {
  std::string item_id;  // empty for manifest-level problems
  std::string path;     // JSON path of the offending field
  std::string message;

  std::string str() const {
    std::string out = path;
    if (!item_id.empty()) out += " (item '" + item_id + "')";
    return out + ": " + message;
  }
};

struct ValidationResult {
  std::optional<DatasetManifest> manifest;  // set when there are no violations
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

namespace detail {

class ManifestParser {
 public:
  ManifestParser(std::filesystem::path base_dir, bool check_media)
      : base_dir_(std::move(base_dir)), check_media_(check_media) {}

  ValidationResult run(const nlohmann::json& root) {
    ValidationResult result;
    if (!root.is_object()) {
      fail("", "$", "manifest must be a JSON object");
      result.violations = std::move(violations_);
      return result;
    }
    std::vector<BenchmarkItem> items;
    if (!root.contains("items") || !root["items"].is_array()) {
      fail("", "$.items", "required array is missing");
    } else {
      std::set<std::string> seen;
      const auto& arr = root["items"];
      for (std::size_t i = 0; i < arr.size(); ++i) {
        // Ids are checked even when the item itself is malformed.
        bool duplicate = false;
        if (arr[i].is_object() && arr[i].contains("id") && arr[i]["id"].is_string()) {
          const auto id = arr[i]["id"].get<std::string>();
          if (!seen.insert(id).second) {
            fail(id, "$.items[" + std::to_string(i) + "].id", "duplicate item id");
            duplicate = true;
          }
        }
        auto item = parse_item(arr[i], "$.items[" + std::to_string(i) + "]");
        if (item && !duplicate) items.push_back(std::move(*item));
      }
    }
    if (root.contains("counts")) check_counts(root["counts"], items);

    result.violations = std::move(violations_);
    if (result.violations.empty()) {
      DatasetManifest m;
      m.counts = tally(items);
      m.items = std::move(items);
      m.base_dir = base_dir_;
      result.manifest = std::move(m);
    }
    return result;
  }

 private:
  void fail(const std::string& id, const std::string& path, const std::string& msg) {
    violations_.push_back({id, path, msg});
  }

  template <typename T>
  std::optional<T> field(const nlohmann::json& obj, const char* key, const std::string& id, const std::string& path) {
    if (!obj.contains(key)) {
      fail(id, path + "." + key, "required field is missing");
      return std::nullopt;
    }
    try {
      return obj[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(id, path + "." + key, "has the wrong type");
      return std::nullopt;
    }
  }

  template <typename E>
  std::optional<E> enum_field(const nlohmann::json& obj, const char* key, const std::string& id,
                              const std::string& path) {
    auto name = field<std::string>(obj, key, id, path);
    if (!name) return std::nullopt;
    // nlohmann maps unknown strings to the first enumerator, so round-trip to detect them.
    const E value = nlohmann::json(*name).get<E>();
    if (nlohmann::json(value).get<std::string>() != *name) {
      fail(id, path + "." + key, "unknown value '" + *name + "'");
      return std::nullopt;
    }
    return value;
  }

  std::optional<BenchmarkItem> parse_item(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) {
      fail("", path, "item must be an object");
      return std::nullopt;
    }
    const std::size_t before = violations_.size();
    BenchmarkItem item;
    item.id = field<std::string>(j, "id", "", path).value_or("");
    if (item.id.empty() && violations_.size() == before) fail("", path + ".id", "must be non-empty");
    const std::string& id = item.id;
    auto cat = enum_field<Category>(j, "category", id, path);
    auto scen = enum_field<Scenario>(j, "scenario", id, path);
    if (cat) item.category = *cat;
    if (scen) item.scenario = *scen;
    parse_video(j, id, path, item.video);

    if (!j.contains("questions") || !j["questions"].is_array()) {
      fail(id, path + ".questions", "required array is missing");
    } else if (j["questions"].empty()) {
      fail(id, path + ".questions", "every item needs at least one question");
    } else if (cat) {
      const auto& qs = j["questions"];
      for (std::size_t q = 0; q < qs.size(); ++q) {
        if (auto parsed = parse_question(qs[q], *cat, id, path + ".questions[" + std::to_string(q) + "]")) {
          item.questions.push_back(std::move(*parsed));
        }
      }
      if (*cat == Category::misleading) {
        const bool has_binary = std::any_of(item.questions.begin(), item.questions.end(),
                                            [](const Question& q) { return q.qtype == QuestionType::binary; });
        if (!has_binary && violations_.size() == before) {
          fail(id, path + ".questions", "misleading items need at least one binary question");
        }
      }
    }
    if (violations_.size() != before) return std::nullopt;
    return item;
  }

  void parse_video(const nlohmann::json& j, const std::string& id, const std::string& path, VideoRef& out) {
    if (!j.contains("video") || !j["video"].is_object()) {
      fail(id, path + ".video", "required object is missing");
      return;
    }
    const auto& v = j["video"];
    const std::string vpath = path + ".video";
    const bool has_features = v.contains("features");
    const bool has_dir = v.contains("frames_dir");
    if (has_features == has_dir) {
      fail(id, vpath, "exactly one of 'features' or 'frames_dir' is required");
      return;
    }
    out.kind = has_features ? VideoRef::Kind::features : VideoRef::Kind::frames_dir;
    auto p = field<std::string>(v, has_features ? "features" : "frames_dir", id, vpath);
    if (!p) return;
    out.path = *p;
    if (auto d = field<double>(v, "duration_seconds", id, vpath)) {
      if (!(*d > 0.0)) fail(id, vpath + ".duration_seconds", "must be positive");
      out.duration_seconds = *d;
    }
    if (check_media_) {
      const auto resolved = resolve(out.path);
      const bool exists = has_features ? std::filesystem::is_regular_file(resolved)
                                       : std::filesystem::is_directory(resolved);
      if (!exists) {
        fail(id, vpath + (has_features ? ".features" : ".frames_dir"),
             std::string(has_features ? "feature file" : "frame directory") + " not found: " + resolved.string());
      }
    }
  }

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir_ / path;
  }

  std::optional<Question> parse_question(const nlohmann::json& j, Category cat, const std::string& id,
                                         const std::string& path) {
    if (!j.is_object()) {
      fail(id, path, "question must be an object");
      return std::nullopt;
    }
    const std::size_t before = violations_.size();
    Question q;
    auto type = enum_field<QuestionType>(j, "type", id, path);
    auto text = field<std::string>(j, "text", id, path);
    if (!type || !text) return std::nullopt;
    q.qtype = *type;
    q.text = *text;
    if (j.contains("subject")) q.subject = field<std::string>(j, "subject", id, path);
    if (j.contains("event")) q.event = field<std::string>(j, "event", id, path);

    if (q.qtype == QuestionType::binary) {
      if (j.contains("description")) fail(id, path + ".description", "binary questions carry no description");
      if (auto a = enum_field<BinaryAnswer>(j, "answer", id, path)) q.gt_binary = *a;
      if (cat == Category::misleading && q.gt_binary == BinaryAnswer::yes) {
        fail(id, path + ".answer", "misleading-category binary ground truth must be \"no\"");
      }
    } else {
      if (j.contains("answer")) fail(id, path + ".answer", "open-ended questions carry no binary answer");
      q.gt_description = field<std::string>(j, "description", id, path);
    }

    if (j.contains("form")) {
      if (auto f = enum_field<QuestionForm>(j, "form", id, path)) q.form = *f;
    } else {
      q.form = q.qtype == QuestionType::open_ended ? QuestionForm::describe : default_binary_form(cat);
    }
    if (!form_allowed(cat, q.qtype, q.form)) {
      fail(id, path + ".form",
           "form '" + enum_name(q.form) + "' is not valid for " + to_string(cat) + " " +
               to_string(q.qtype) + " questions");
    } else if (q.form != QuestionForm::custom && violations_.size() == before) {
      try {
        const auto expected = render_question(cat, q.qtype, q.subject.value_or(""), q.event.value_or(""), q.form);
        if (expected != q.text) {
          fail(id, path + ".text", "does not match template text \"" + expected + "\"");
        }
      } catch (const ContractViolation& ex) {
        fail(id, path, ex.what());
      }
    }
    if (violations_.size() != before) return std::nullopt;
    return q;
  }

  void check_counts(const nlohmann::json& j, const std::vector<BenchmarkItem>& items) {
    if (!violations_.empty()) return;  // tallies are meaningless over a partial parse
    const auto actual = tally(items);
    DatasetCounts declared;
    try {
      declared.items = j.at("items").get<std::map<std::string, std::size_t>>();
      declared.questions = j.at("questions").get<std::map<std::string, std::size_t>>();
    } catch (const nlohmann::json::exception&) {
      fail("", "$.counts", "must be {items: {...}, questions: {...}} with integer tallies");
      return;
    }
    if (declared.items != actual.items) fail("", "$.counts.items", "does not match the per-category item tally");
    if (declared.questions != actual.questions) {
      fail("", "$.counts.questions", "does not match the per-type question tally");
    }
  }

  std::filesystem::path base_dir_;
  bool check_media_;
  std::vector<Violation> violations_;
};

}  // namespace detail

inline ValidationResult validate_manifest(const nlohmann::json& root, const std::filesystem::path& base_dir = {},
                                          bool check_media = false) {
  return detail::ManifestParser(base_dir, check_media).run(root);
}

inline ValidationResult validate_manifest_file(const std::filesystem::path& path, bool check_media = false) {
  std::ifstream in(path);
  if (!in) return {std::nullopt, {{"", "$", "cannot open manifest " + path.string()}}};
  auto root = nlohmann::json::parse(in, nullptr, false);
  if (root.is_discarded()) return {std::nullopt, {{"", "$", "manifest " + path.string() + " is not valid JSON"}}};
  return validate_manifest(root, path.parent_path(), check_media);
}

/// Loads and validates a manifest; throws SchemaError listing every violation.
inline DatasetManifest load_manifest(const std::filesystem::path& path, bool check_media = false) {
  auto result = validate_manifest_file(path, check_media);
  if (!result.ok()) {
    std::ostringstream os;
    os << "manifest " << path.string() << " has " << result.violations.size() << " violation(s)";
    for (const auto& v : result.violations) os << "\n  " << v.str();
    throw SchemaError(os.str());
  }
  return std::move(*result.manifest);
}

/// Canonical serialization: fixed key order, absent optionals omitted.
inline nlohmann::ordered_json to_json(const DatasetManifest& m) {
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const auto& it : m.items) {
    nlohmann::ordered_json video;
    video[it.video.kind == VideoRef::Kind::features ? "features" : "frames_dir"] = it.video.path;
    video["duration_seconds"] = it.video.duration_seconds;
    nlohmann::ordered_json qs = nlohmann::ordered_json::array();
    for (const auto& q : it.questions) {
      nlohmann::ordered_json jq;
      jq["type"] = enum_name(q.qtype);
      jq["text"] = q.text;
      if (q.gt_binary) jq["answer"] = to_string(*q.gt_binary);
      if (q.gt_description) jq["description"] = *q.gt_description;
      if (q.subject) jq["subject"] = *q.subject;
      if (q.event) jq["event"] = *q.event;
      jq["form"] = enum_name(q.form);
      qs.push_back(std::move(jq));
    }
    nlohmann::ordered_json ji;
    ji["id"] = it.id;
    ji["category"] = enum_name(it.category);
    ji["scenario"] = enum_name(it.scenario);
    ji["video"] = std::move(video);
    ji["questions"] = std::move(qs);
    items.push_back(std::move(ji));
  }
  const auto counts = tally(m.items);
  nlohmann::ordered_json out;
  out["version"] = 1;
  out["items"] = std::move(items);
  out["counts"]["items"] = counts.items;
  out["counts"]["questions"] = counts.questions;
  return out;
}

inline std::filesystem::path resolve_media(const DatasetManifest& m, const VideoRef& v) {
  std::filesystem::path p(v.path);
  return p.is_absolute() ? p : m.base_dir / p;
}

/// Reads an item's frames. The sequence's source_id is the item id.
inline FrameSequence load_video(const DatasetManifest& m, const BenchmarkItem& item) {
  const auto path = resolve_media(m, item.video);
  auto seq = item.video.kind == VideoRef::Kind::features ? read_feature_file(path, item.id)
                                                         : read_frame_directory(path, item.id);
  seq.validate();
  return seq;
}

}  // namespace tcd
