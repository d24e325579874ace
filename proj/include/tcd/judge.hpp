#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tcd/backend.hpp"
#include "tcd/dataset.hpp"
#include "tcd/error.hpp"
#include "tcd/scoring.hpp"

namespace tcd {

inline constexpr std::string_view kJudgePromptVersion = "judge-prompts/v1";

inline constexpr std::string_view kJudgeSystemPrompt =
    "You grade video descriptions written by a video-language model. You are given the ground-truth "
    "description of what happens in a video and the model's description of the same video. Decide "
    "whether the model's description is faithful to the ground truth. Reply with exactly one word on "
    "the first line, either \"correct\" or \"incorrect\". You may add a one-sentence justification on "
    "the second line.";

/// Per-category user prompt; {ground_truth} and {answer} are substituted.
inline std::string_view judge_template(Category c) {
  switch (c) {
    case Category::entire:
      return "The video shows an unusual event from start to finish.\n"
             "Ground truth: {ground_truth}\n"
             "Model description: {answer}\n"
             "Answer \"correct\" only if the model describes the same unusual event as the ground truth. "
             "Answer \"incorrect\" if it describes a more common event instead, or misses the event.";
    case Category::mix:
      return "The video contains ordinary activity and, at some point, an unusual event.\n"
             "Ground truth: {ground_truth}\n"
             "Model description: {answer}\n"
             "Answer \"correct\" only if the model reports that the unusual event occurs and describes it "
             "consistently with the ground truth. Answer \"incorrect\" if it only describes the ordinary "
             "activity or invents a different event.";
    case Category::misleading:
      return "The video shows an ordinary event.\n"
             "Ground truth: {ground_truth}\n"
             "Model description: {answer}\n"
             "Answer \"correct\" only if the model's description is consistent with the ground-truth event "
             "and does not add events that are absent from it. Answer \"incorrect\" otherwise.";
  }
  return {};
}

inline std::string render_judge_prompt(Category c, std::string_view ground_truth, std::string_view answer) {
  // Single pass over the template so placeholder-like text in the inputs is
  // copied verbatim.
  constexpr std::string_view kGt = "{ground_truth}";
  constexpr std::string_view kAnswer = "{answer}";
  const std::string_view tpl = judge_template(c);
  std::string out;
  for (std::size_t i = 0; i < tpl.size();) {
    if (tpl.substr(i, kGt.size()) == kGt) {
      out += ground_truth;
      i += kGt.size();
    } else if (tpl.substr(i, kAnswer.size()) == kAnswer) {
      out += answer;
      i += kAnswer.size();
    } else {
      out += tpl[i++];
    }
  }
  return out;
}

struct JudgeRequest {
  std::string model;
  double temperature = 0.0;
  std::string system;
  std::string user;

  nlohmann::json to_json() const {
    return {{"model", model},
            {"temperature", temperature},
            {"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}})}};
  }

  /// Stable identifier used to key recorded replies.
  std::string hash() const { return hex64(fnv1a64(to_json().dump())); }
};

/// Sends one chat request, returns the reply text. Throws JudgeError when no
/// reply can be obtained.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const JudgeRequest& request) const = 0;
  virtual std::string model() const = 0;
  virtual double temperature() const = 0;
};

/// Offline judge. Replies live in `<dir>/<request hash>.txt`.
class RecordedJudge final : public JudgeClient {
 public:
  RecordedJudge(std::filesystem::path dir, std::string model = "gpt-4o", double temperature = 0.0)
      : dir_(std::move(dir)), model_(std::move(model)), temperature_(temperature) {}

  std::string complete(const JudgeRequest& request) const override {
    const auto path = dir_ / (request.hash() + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw JudgeError("no recorded judge reply " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  std::string model() const override { return model_; }
  double temperature() const override { return temperature_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string model_;
  double temperature_;
};

/// true for "correct...", false for "incorrect...", nullopt otherwise. Only
/// the first line counts and the keyword must be a whole word.
inline std::optional<bool> parse_judge_reply(std::string_view reply) {
  const auto nl = reply.find('\n');
  std::string_view line = reply.substr(0, nl);
  while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
  auto starts_with_word = [&](std::string_view word) {
    if (line.size() < word.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(line[i])) != word[i]) return false;
    }
    return line.size() == word.size() || !std::isalnum(static_cast<unsigned char>(line[word.size()]));
  };
  if (starts_with_word("incorrect")) return false;
  if (starts_with_word("correct")) return true;
  return std::nullopt;
}

inline JudgeRequest make_judge_request(const JudgeClient& judge, Category category, std::string_view gt_description,
                                       std::string_view raw_answer) {
  return {judge.model(), judge.temperature(), std::string(kJudgeSystemPrompt),
          render_judge_prompt(category, gt_description, raw_answer)};
}

/// Judge-based open-ended scoring. Fails closed: anything but an explicit
/// "correct" is scored incorrect, with the reply kept in judge_raw. Judge
/// failures propagate as JudgeError.
inline Verdict score_open_ended(std::string_view raw_answer, std::string_view gt_description, Category category,
                                const JudgeClient& judge) {
  const auto reply = judge.complete(make_judge_request(judge, category, gt_description, raw_answer));
  Verdict v;
  v.correct = parse_judge_reply(reply).value_or(false);
  v.compliant = false;
  v.judge_raw = reply;
  return v;
}

}  // namespace tcd
