#pragma once

// Batch orchestration behind the command-line tool: run configuration,
// evaluation runs, ablation sweeps, dataset validation and report rendering.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcd/backend.hpp"
#include "tcd/counterpart.hpp"
#include "tcd/dataset.hpp"
#include "tcd/decoder.hpp"
#include "tcd/http_backend.hpp"
#include "tcd/http_judge.hpp"
#include "tcd/judge.hpp"
#include "tcd/scoring.hpp"
#include "tcd/scripted_backend.hpp"
#include "tcd/synthetic_backend.hpp"
#include "tcd/version.hpp"

namespace tcd {

enum class DecodingMode { standard, tcd };

inline const char* to_string(DecodingMode m) { return m == DecodingMode::standard ? "standard" : "tcd"; }

struct JudgeSettings {
  enum class Mode { none, recorded, live };
  Mode mode = Mode::none;
  std::string recorded_dir;
  std::string model = "gpt-4o";
  double temperature = 0.0;
  nlohmann::json live = nlohmann::json::object();  // HttpJudgeConfig fields
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  nlohmann::json backend = nlohmann::json::object();
  std::string dataset;
  CounterpartSpec counterpart{};
  ContrastParams contrast{};
  DecodingMode mode = DecodingMode::tcd;
  std::size_t max_tokens = 16;
  std::vector<std::string> stop_tokens;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  JudgeSettings judge;
  std::size_t jobs = 1;
  bool concurrent_queries = false;

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  static RunConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir) {
    RunConfig c;
    c.base_dir = std::move(base_dir);
    try {
      c.backend = j.at("backend");
      if (!c.backend.is_object() || !c.backend.contains("kind")) throw SchemaError("config: backend.kind is required");
      c.dataset = j.at("dataset").get<std::string>();
      if (j.contains("counterpart")) {
        const auto& cp = j["counterpart"];
        c.counterpart.original_frame_count = cp.value("original_frames", c.counterpart.original_frame_count);
        c.counterpart.counterpart_frame_count = cp.value("counterpart_frames", c.counterpart.counterpart_frame_count);
        c.counterpart.noise_sigma = cp.value("noise_sigma", c.counterpart.noise_sigma);
      }
      if (j.contains("contrast")) {
        const auto& cs = j["contrast"];
        c.contrast.alpha = cs.value("alpha", c.contrast.alpha);
        c.contrast.beta = cs.value("beta", c.contrast.beta);
        c.contrast.threshold_space =
            threshold_space_from_string(cs.value("threshold_space", std::string("probability")));
      }
      const auto mode = j.value("mode", std::string("tcd"));
      if (mode == "standard") {
        c.mode = DecodingMode::standard;
      } else if (mode == "tcd") {
        c.mode = DecodingMode::tcd;
      } else {
        throw SchemaError("config: mode must be 'standard' or 'tcd', got '" + mode + "'");
      }
      c.max_tokens = j.value("max_tokens", c.max_tokens);
      c.stop_tokens = j.value("stop_tokens", c.stop_tokens);
      c.output_dir = j.value("output_dir", c.output_dir);
      c.seed = j.value("seed", c.seed);
      c.jobs = j.value("jobs", c.jobs);
      c.concurrent_queries = j.value("concurrent_queries", c.concurrent_queries);
      if (j.contains("judge")) {
        const auto& jj = j["judge"];
        const auto jm = jj.value("mode", std::string("none"));
        c.judge.model = jj.value("model", c.judge.model);
        c.judge.temperature = jj.value("temperature", c.judge.temperature);
        if (jm == "recorded") {
          c.judge.mode = JudgeSettings::Mode::recorded;
          c.judge.recorded_dir = jj.at("dir").get<std::string>();
        } else if (jm == "live") {
          c.judge.mode = JudgeSettings::Mode::live;
          c.judge.live = jj;
        } else if (jm != "none") {
          throw SchemaError("config: judge.mode must be none, recorded or live");
        }
      }
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError(std::string("config: ") + ex.what());
    } catch (const ContractViolation& ex) {
      throw SchemaError(std::string("config: ") + ex.what());
    }
    c.validate();
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open config " + path.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError("config " + path.string() + " is not valid JSON");
    return from_json(j, path.parent_path());
  }

  void validate() const {
    try {
      contrast.validate();
      if (mode == DecodingMode::tcd) counterpart.validate();
    } catch (const ContractViolation& ex) {
      throw SchemaError(std::string("config: ") + ex.what());
    }
    if (max_tokens < 1) throw SchemaError("config: max_tokens must be >= 1");
    if (jobs < 1) throw SchemaError("config: jobs must be >= 1");
  }

  /// Startup checks on referenced files.
  void check_paths() const {
    if (!std::filesystem::is_regular_file(resolve(dataset))) {
      throw SchemaError("config: dataset " + resolve(dataset).string() + " not found");
    }
    if (backend.value("kind", "") == "scripted") {
      const auto scenario = resolve(backend.value("scenario", ""));
      if (!std::filesystem::is_regular_file(scenario)) {
        throw SchemaError("config: scripted scenario " + scenario.string() + " not found");
      }
    }
    if (judge.mode == JudgeSettings::Mode::recorded && !std::filesystem::is_directory(resolve(judge.recorded_dir))) {
      throw SchemaError("config: recorded judge directory " + resolve(judge.recorded_dir).string() + " not found");
    }
  }

  /// Config echo embedded in every output: defaults filled in, paths as written.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["backend"] = nlohmann::ordered_json::parse(backend.dump());
    j["dataset"] = dataset;
    j["mode"] = to_string(mode);
    j["counterpart"]["original_frames"] = counterpart.original_frame_count;
    j["counterpart"]["counterpart_frames"] = counterpart.counterpart_frame_count;
    j["counterpart"]["noise_sigma"] = counterpart.noise_sigma;
    j["contrast"]["alpha"] = contrast.alpha;
    j["contrast"]["beta"] = contrast.beta;
    j["contrast"]["threshold_space"] = to_string(contrast.threshold_space);
    j["max_tokens"] = max_tokens;
    j["stop_tokens"] = stop_tokens;
    j["output_dir"] = output_dir;
    j["seed"] = seed;
    j["jobs"] = jobs;
    j["concurrent_queries"] = concurrent_queries;
    const char* jm = judge.mode == JudgeSettings::Mode::none       ? "none"
                     : judge.mode == JudgeSettings::Mode::recorded ? "recorded"
                                                                   : "live";
    j["judge"]["mode"] = jm;
    j["judge"]["model"] = judge.model;
    j["judge"]["temperature"] = judge.temperature;
    if (judge.mode == JudgeSettings::Mode::recorded) j["judge"]["dir"] = judge.recorded_dir;
    if (judge.mode == JudgeSettings::Mode::live) {
      for (const auto& [k, v] : judge.live.items()) {
        if (!j["judge"].contains(k)) j["judge"][k] = nlohmann::ordered_json::parse(v.dump());
      }
    }
    return j;
  }
};

inline std::shared_ptr<const Backend> make_backend(const RunConfig& config) {
  const auto& b = config.backend;
  const auto kind = b.value("kind", std::string{});
  try {
    if (kind == "scripted") {
      return std::make_shared<ScriptedBackend>(ScriptedBackend::load(config.resolve(b.at("scenario").get<std::string>())));
    }
    if (kind == "synthetic_bias") return std::make_shared<SyntheticBiasBackend>(SyntheticBiasBackend::from_json(b));
    if (kind == "http") {
      Vocabulary vocab(b.at("vocab").get<TokenList>(), b.value("eos", std::string(kDefaultEos)));
      return std::make_shared<HttpBackend>(std::move(vocab), HttpBackendConfig::from_json(b));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("config: backend: ") + ex.what());
  }
  throw SchemaError("config: unknown backend kind '" + kind + "'");
}

inline std::shared_ptr<const JudgeClient> make_judge(const RunConfig& config) {
  switch (config.judge.mode) {
    case JudgeSettings::Mode::none: return nullptr;
    case JudgeSettings::Mode::recorded:
      return std::make_shared<RecordedJudge>(config.resolve(config.judge.recorded_dir), config.judge.model,
                                             config.judge.temperature);
    case JudgeSettings::Mode::live: {
      auto jc = HttpJudgeConfig::from_json(config.judge.live);
      if (jc.record_dir) jc.record_dir = config.resolve(jc.record_dir->string());
      return std::make_shared<HttpJudge>(std::move(jc));
    }
  }
  return nullptr;
}

/// Everything an evaluation needs besides the config; shared read-only
/// across ablation grid points.
struct RunResources {
  DatasetManifest manifest;
  std::shared_ptr<const Backend> backend;
  std::shared_ptr<const JudgeClient> judge;

  static RunResources prepare(const RunConfig& config) {
    config.check_paths();
    RunResources r;
    r.manifest = load_manifest(config.resolve(config.dataset));
    r.backend = make_backend(config);
    r.judge = make_judge(config);
    for (const auto& t : config.stop_tokens) {
      if (!r.backend->vocab().contains(t)) throw SchemaError("config: stop token '" + t + "' is not in the vocabulary");
    }
    const bool needs_judge = r.manifest.counts.questions.at("open_ended") > 0;
    if (needs_judge && !r.judge) {
      throw SchemaError("config: dataset has open-ended questions but no judge is configured");
    }
    return r;
  }
};

/// One question's decode + verdict, serialized as a JSON line.
struct QuestionRecord {
  QuestionOutcome outcome;
  nlohmann::ordered_json line;
};

struct EvalResult {
  EvaluationReport report;
  std::vector<QuestionRecord> records;  // sorted by (item id, question index)
  bool any_errors() const { return report.errors != 0; }
};

namespace detail {

inline nlohmann::ordered_json step_json(const StepDiagnostics& d) {
  nlohmann::ordered_json j;
  j["plausible_count"] = d.plausible_count;
  j["argmax_ori"] = d.argmax_ori;
  j["argmax_final"] = d.argmax_final;
  j["contrast_flipped"] = d.contrast_flipped;
  return j;
}

inline std::uint64_t item_seed(std::uint64_t run_seed, const std::string& item_id) {
  return fnv1a64(item_id, 0xcbf29ce484222325ULL ^ (run_seed * 0x9e3779b97f4a7c15ULL));
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    }));
  }
  for (auto& f : workers) f.get();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string fmt_double(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string run_label(const std::string& mode) {
  if (mode == "tcd") return "TCD";
  if (mode == "standard") return "Default";
  return "run";
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SchemaError("cannot write " + path.string());
  out << bytes;
}

}  // namespace detail

/// Decodes and scores every question of the manifest. Never throws for
/// per-question failures: those become error records.
inline EvalResult evaluate(const RunConfig& config, const RunResources& res) {
  struct Unit {
    const BenchmarkItem* item;
    std::size_t question;
  };
  std::vector<const BenchmarkItem*> items;
  for (const auto& it : res.manifest.items) items.push_back(&it);
  std::sort(items.begin(), items.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<Unit> units;
  for (auto* it : items) {
    for (std::size_t q = 0; q < it->questions.size(); ++q) units.push_back({it, q});
  }

  std::mutex video_mutex;
  std::map<std::string, std::shared_future<FrameSequence>> videos;
  auto video_for = [&](const BenchmarkItem& item) {
    std::shared_future<FrameSequence> f;
    {
      std::lock_guard lock(video_mutex);
      auto it = videos.find(item.id);
      if (it == videos.end()) {
        it = videos.emplace(item.id, std::async(std::launch::deferred, [&res, &item] {
                                       return load_video(res.manifest, item);
                                     }).share()).first;
      }
      f = it->second;
    }
    return f.get();
  };

  std::vector<QuestionRecord> records(units.size());
  detail::parallel_for(units.size(), config.jobs, [&](std::size_t u) {
    const BenchmarkItem& item = *units[u].item;
    const Question& question = item.questions[units[u].question];
    QuestionRecord& rec = records[u];
    rec.outcome.item_id = item.id;
    rec.outcome.question_index = units[u].question;

    auto& line = rec.line;
    line["item_id"] = item.id;
    line["question_index"] = units[u].question;
    line["category"] = to_string(item.category);
    line["qtype"] = to_string(question.qtype);
    line["question"] = question.text;
    line["seed"] = config.seed;

    std::optional<DecodeResult> decoded;
    try {
      const FrameSequence video = video_for(item);
      DecodeRequest req;
      req.instruction = split_words(question.text);
      req.frames = video.empty() ? video
                                 : select_frames(video, std::min(config.counterpart.original_frame_count, video.size()));
      if (config.mode == DecodingMode::tcd) {
        CounterpartSpec spec = config.counterpart;
        spec.rng_seed = detail::item_seed(config.seed, item.id);
        req.counterpart = spec;
      }
      req.params = config.contrast;
      req.max_tokens = config.max_tokens;
      req.stop_tokens.insert(config.stop_tokens.begin(), config.stop_tokens.end());
      req.concurrent_queries = config.concurrent_queries;
      decoded = decode(req, *res.backend);

      const std::string answer = decoded->text();
      line["answer"] = answer;
      line["tokens"] = decoded->tokens;
      line["stop_reason"] = to_string(decoded->stop_reason);
      nlohmann::ordered_json steps = nlohmann::ordered_json::array();
      for (const auto& s : decoded->steps) steps.push_back(detail::step_json(s));
      line["steps"] = std::move(steps);
      line["stop_step"] = decoded->stop_step ? detail::step_json(*decoded->stop_step) : nlohmann::ordered_json(nullptr);

      Verdict v;
      if (question.qtype == QuestionType::binary) {
        v = score_binary(answer, *question.gt_binary);
      } else {
        v = score_open_ended(answer, *question.gt_description, item.category, *res.judge);
      }
      nlohmann::ordered_json jv;
      jv["correct"] = v.correct;
      if (question.qtype == QuestionType::binary) jv["compliant"] = v.compliant;
      if (v.judge_raw) jv["judge_raw"] = *v.judge_raw;
      line["verdict"] = std::move(jv);
      line["error"] = nullptr;
      rec.outcome.result = v;
    } catch (const std::exception& ex) {
      if (!line.contains("answer")) line["answer"] = nullptr;
      line["verdict"] = nullptr;
      line["error"] = ex.what();
      rec.outcome.result = std::string(ex.what());
    }
  });

  std::vector<QuestionOutcome> outcomes;
  outcomes.reserve(records.size());
  for (const auto& r : records) outcomes.push_back(r.outcome);

  EvalResult result;
  result.report = aggregate(std::move(outcomes), res.manifest);
  result.report.metadata["tool"] = "tcd";
  result.report.metadata["version"] = kVersion;
  result.report.metadata["backend"] = res.backend->kind();
  result.report.metadata["mode"] = to_string(config.mode);
  result.report.metadata["seed"] = config.seed;
  result.report.metadata["judge_prompts"] = std::string(kJudgePromptVersion);
  result.report.metadata["config"] = config.to_json();
  result.records = std::move(records);
  return result;
}

/// Writes answers.jsonl, report.json and report.txt into `dir`.
inline void write_eval_outputs(const EvalResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string lines;
  for (const auto& r : result.records) lines += r.line.dump() + "\n";
  detail::write_file(dir / "answers.jsonl", lines);
  detail::write_file(dir / "report.json", to_json(result.report).dump(2) + "\n");
  detail::write_file(dir / "report.txt",
                     render_table(result.report, detail::run_label(result.report.metadata.value("mode", ""))));
}

/// Full eval command: prepare (config and schema errors throw before any
/// decoding), evaluate, write outputs.
inline EvalResult run_eval(const RunConfig& config) {
  const auto res = RunResources::prepare(config);
  auto result = evaluate(config, res);
  write_eval_outputs(result, config.resolve(config.output_dir));
  return result;
}

struct AblationSweep {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<std::size_t> counterpart_frames;

  void validate() const {
    if (alphas.empty()) throw ContractViolation("ablate: alphas list is empty");
    if (betas.empty()) throw ContractViolation("ablate: betas list is empty");
    if (counterpart_frames.empty()) throw ContractViolation("ablate: counterpart frames list is empty");
    for (double a : alphas) {
      if (!std::isfinite(a) || a < 0) throw ContractViolation("ablate: alpha " + std::to_string(a) + " is not >= 0");
    }
    for (double b : betas) {
      if (!(b >= 0 && b <= 1)) throw ContractViolation("ablate: beta " + std::to_string(b) + " is outside [0, 1]");
    }
    for (auto f : counterpart_frames) {
      if (f < 1) throw ContractViolation("ablate: counterpart frame count must be >= 1");
    }
  }
};

struct AblationRow {
  double alpha = 0;
  double beta = 0;
  std::size_t frames = 0;
  std::optional<EvaluationReport> report;
  std::string status = "ok";
};

inline const std::vector<std::string>& ablation_header() {
  static const std::vector<std::string> h{"alpha",          "beta",         "frames",           "entire_binary",
                                          "mix_binary",     "misleading_binary", "entire_desc", "mix_desc",
                                          "misleading_desc", "overall_binary", "overall_desc",   "compliance",
                                          "errors",         "seed",         "status"};
  return h;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows, std::uint64_t seed) {
  auto acc = [](std::optional<double> v) { return v ? detail::fmt_double(*v) : std::string{}; };
  std::string out;
  const auto& header = ablation_header();
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += "\r\n";
  for (const auto& r : rows) {
    std::vector<std::string> f{detail::fmt_double(r.alpha, "%g"), detail::fmt_double(r.beta, "%g"),
                               std::to_string(r.frames)};
    if (r.report) {
      for (auto c : kCategories) f.push_back(acc(r.report->cell(c, QuestionType::binary).accuracy()));
      for (auto c : kCategories) f.push_back(acc(r.report->cell(c, QuestionType::open_ended).accuracy()));
      f.push_back(acc(r.report->overall_binary.accuracy()));
      f.push_back(acc(r.report->overall_description.accuracy()));
      f.push_back(acc(r.report->compliance_rate()));
      f.push_back(std::to_string(r.report->errors));
    } else {
      f.insert(f.end(), 10, std::string{});
    }
    f.push_back(std::to_string(seed));
    f.push_back(r.status);
    for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + detail::csv_field(f[i]);
    out += "\r\n";
  }
  return out;
}

/// Runs one TCD evaluation per (alpha, beta, frames) grid point, alpha-major.
/// A failing point is recorded in its row and the sweep continues.
inline std::vector<AblationRow> run_ablate(const RunConfig& base, const AblationSweep& sweep) {
  sweep.validate();
  const auto res = RunResources::prepare(base);
  const auto out_dir = base.resolve(base.output_dir);

  struct Point {
    double alpha, beta;
    std::size_t frames;
  };
  std::vector<Point> points;
  for (double a : sweep.alphas) {
    for (double b : sweep.betas) {
      for (auto f : sweep.counterpart_frames) points.push_back({a, b, f});
    }
  }
  std::vector<AblationRow> rows(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    AblationRow& row = rows[i];
    row.alpha = points[i].alpha;
    row.beta = points[i].beta;
    row.frames = points[i].frames;
    try {
      RunConfig cfg = base;
      cfg.mode = DecodingMode::tcd;
      cfg.contrast.alpha = row.alpha;
      cfg.contrast.beta = row.beta;
      cfg.counterpart.counterpart_frame_count = row.frames;
      char name[96];
      std::snprintf(name, sizeof name, "point_%03zu_a%g_b%g_f%zu", i, row.alpha, row.beta, row.frames);
      cfg.output_dir = (std::filesystem::path(base.output_dir) / "points" / name).string();
      cfg.validate();
      auto result = evaluate(cfg, res);
      write_eval_outputs(result, cfg.resolve(cfg.output_dir));
      row.report = std::move(result.report);
    } catch (const std::exception& ex) {
      row.status = std::string("error: ") + ex.what();
    }
  }

  std::filesystem::create_directories(out_dir);
  detail::write_file(out_dir / "ablation.csv", ablation_csv(rows, base.seed));
  nlohmann::ordered_json meta;
  meta["tool"] = "tcd";
  meta["version"] = kVersion;
  meta["config"] = base.to_json();
  meta["sweep"]["alphas"] = sweep.alphas;
  meta["sweep"]["betas"] = sweep.betas;
  meta["sweep"]["counterpart_frames"] = sweep.counterpart_frames;
  nlohmann::ordered_json jrows = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json jr;
    jr["alpha"] = r.alpha;
    jr["beta"] = r.beta;
    jr["frames"] = r.frames;
    jr["status"] = r.status;
    jr["report"] = r.report ? to_json(*r.report) : nlohmann::ordered_json(nullptr);
    jrows.push_back(std::move(jr));
  }
  meta["rows"] = std::move(jrows);
  detail::write_file(out_dir / "ablation.json", meta.dump(2) + "\n");
  return rows;
}

/// Prints one line per violation and a final "<n> violations" line.
/// Returns true when the dataset is valid.
inline bool run_validate(const std::filesystem::path& manifest, bool check_media, std::ostream& out) {
  const auto result = validate_manifest_file(manifest, check_media);
  for (const auto& v : result.violations) out << v.str() << "\n";
  out << result.violations.size() << (result.violations.size() == 1 ? " violation" : " violations") << "\n";
  if (result.manifest) {
    const auto& c = result.manifest->counts;
    out << result.manifest->items.size() << " items (entire " << c.items.at("entire") << ", mix "
        << c.items.at("mix") << ", misleading " << c.items.at("misleading") << "), " << c.questions.at("binary")
        << " binary and " << c.questions.at("open_ended") << " open-ended questions\n";
  }
  return result.ok();
}

inline std::string run_render_report(const std::filesystem::path& report_json) {
  std::ifstream in(report_json);
  if (!in) throw SchemaError("cannot open report " + report_json.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("report " + report_json.string() + " is not valid JSON");
  const auto report = report_from_json(j);
  return render_table(report, detail::run_label(report.metadata.value("mode", std::string{})));
}

}  // namespace tcd
