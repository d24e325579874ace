#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tcd/run.hpp"
#include "tcd/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitQuestionErrors = 2;

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (field.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream in(field);
    T v{};
    if (!(in >> v) || !(in >> std::ws).eof()) {
      throw tcd::ContractViolation(std::string("cannot parse '") + field + "' in " + what);
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal contrastive decoding and event-hallucination evaluation"};
  app.set_version_flag("--version", tcd::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;

  auto* eval = app.add_subcommand("eval", "Decode and score every question of a dataset");
  eval->add_option("-c,--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("-o,--out", out_dir, "Output directory (overrides config)");
  eval->add_option("-j,--jobs", jobs, "Questions evaluated in parallel");
  eval->add_option("--seed", seed, "Run seed (overrides config)");

  std::optional<std::string> alphas_arg;
  std::optional<std::string> betas_arg;
  std::optional<std::string> frames_arg;
  auto* ablate = app.add_subcommand("ablate", "Sweep alpha, beta and counterpart frame count; write a CSV grid");
  ablate->add_option("-c,--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--alphas", alphas_arg, "Comma-separated alpha values (default: config alpha)");
  ablate->add_option("--betas", betas_arg, "Comma-separated beta values (default: config beta)");
  ablate->add_option("--frames", frames_arg, "Comma-separated counterpart frame counts (default: config)");
  ablate->add_option("-o,--out", out_dir, "Output directory (overrides config)");
  ablate->add_option("-j,--jobs", jobs, "Questions evaluated in parallel per grid point");
  ablate->add_option("--seed", seed, "Run seed (overrides config)");

  std::string dataset_path;
  bool check_media = false;
  auto* validate = app.add_subcommand("validate", "Check a dataset manifest against the schema");
  validate->add_option("dataset", dataset_path, "Manifest file")->required();
  validate->add_flag("--check-media", check_media, "Also check that feature files and frame directories exist");

  std::string report_path;
  auto* render = app.add_subcommand("render-report", "Print a report.json as a text table");
  render->add_option("report", report_path, "report.json written by eval")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every other parse failure is a usage error.
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*validate) {
      return tcd::run_validate(dataset_path, check_media, std::cout) ? kExitOk : kExitUsage;
    }
    if (*render) {
      std::cout << tcd::run_render_report(report_path);
      return kExitOk;
    }

    auto config = tcd::RunConfig::load(config_path);
    if (out_dir) config.output_dir = std::filesystem::absolute(*out_dir).string();
    if (jobs) config.jobs = *jobs;
    if (seed) config.seed = *seed;
    config.validate();

    if (*eval) {
      const auto result = tcd::run_eval(config);
      std::cout << tcd::render_table(result.report, config.mode == tcd::DecodingMode::tcd ? "TCD" : "Default");
      std::cout << "outputs: " << config.resolve(config.output_dir).string() << "\n";
      return result.any_errors() ? kExitQuestionErrors : kExitOk;
    }

    tcd::AblationSweep sweep;
    sweep.alphas = alphas_arg ? parse_list<double>(*alphas_arg, "--alphas") : std::vector{config.contrast.alpha};
    sweep.betas = betas_arg ? parse_list<double>(*betas_arg, "--betas") : std::vector{config.contrast.beta};
    sweep.counterpart_frames = frames_arg ? parse_list<std::size_t>(*frames_arg, "--frames")
                                          : std::vector{config.counterpart.counterpart_frame_count};
    sweep.validate();
    const auto rows = tcd::run_ablate(config, sweep);
    std::cout << tcd::ablation_csv(rows, config.seed);
    std::cout << "outputs: " << config.resolve(config.output_dir).string() << "\n";
    bool failed = false;
    for (const auto& r : rows) failed = failed || r.status != "ok" || (r.report && r.report->errors != 0);
    return failed ? kExitQuestionErrors : kExitOk;
  } catch (const tcd::ContractViolation& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const tcd::SchemaError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
}
