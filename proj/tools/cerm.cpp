#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cerm/pipeline/commands.hpp"
#include "cerm/pipeline/config.hpp"
#include "cerm/pipeline/store.hpp"

namespace fs = std::filesystem;
using namespace cerm::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"cerm: criteria-then-evaluation reward model pipeline"};
  app.require_subcommand(1);

  std::optional<fs::path> config_file;
  bool force = false;
  bool quiet = false;
  std::optional<int> stop_after;
  app.add_option("--config", config_file, "INI configuration file")->check(CLI::ExistingFile);
  app.add_flag("--force", force, "overwrite outputs written with another template version");
  app.add_flag("-q,--quiet", quiet, "suppress progress notes");
  app.add_option("--stop-after", stop_after, "interrupt after N freshly computed units (exit 5)")
      ->group("")
      ->check(CLI::NonNegativeNumber);

  std::map<std::string, std::string> overrides;
  std::vector<std::pair<std::string, CLI::Option*>> flags;
  for (const auto& spec : setting_registry()) {
    auto* opt = app.add_option("--" + spec.key, overrides[spec.key], spec.help + " [" + spec.default_value + "]")
                    ->group("Settings");
    flags.emplace_back(spec.key, opt);
  }

  fs::path in, out, out_sft, out_rl, discards;
  std::optional<fs::path> trees, capture, template_dir;
  std::vector<fs::path> datasets;
  bool compare = false;
  std::optional<std::string> setting;
  std::optional<std::string> k_list;

  auto* curate = app.add_subcommand("curate", "accuracy filter, tagging, clustering and stratified sampling");
  curate->add_option("--in", in, "preference JSONL")->required()->check(CLI::ExistingFile);
  curate->add_option("--out", out, "curated JSONL")->required();

  auto* cold = app.add_subcommand("coldstart", "teacher distillation and SFT/RL selection");
  cold->add_option("--in", in, "curated JSONL")->required()->check(CLI::ExistingFile);
  cold->add_option("--out-sft", out_sft, "D_SFT JSONL")->required();
  cold->add_option("--out-rl", out_rl, "RL instance JSONL")->required();
  cold->add_option("--discards", discards, "discard log [<out-sft>.discards.jsonl]");

  auto* roll = app.add_subcommand("rollout-rewards", "two-stage rollouts, rewards and advantages");
  roll->add_option("--in", in, "RL instance JSONL")->required()->check(CLI::ExistingFile);
  roll->add_option("--out", out, "advantage batch JSONL")->required();
  roll->add_option("--trees", trees, "also write RolloutTree JSONL here");

  auto* bench = app.add_subcommand("bench", "benchmark a judge, optionally across protocols");
  bench->add_option("--dataset", datasets, "benchmark JSONL (repeatable)")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", out, "report directory")->required();
  bench->add_flag("--compare-settings", compare, "run direct, explicit and unified");
  bench->add_option("--setting", setting, "shorthand for --bench.setting");
  bench->add_option("--k", k_list, "shorthand for --bench.k");
  bench->add_option("--capture", capture, "write every judge request as JSONL");

  auto* dump = app.add_subcommand("dump-templates", "print or write every prompt template");
  dump->add_option("--out", template_dir, "directory for <id>.txt files");

  auto* validate = app.add_subcommand("validate-config", "check the configuration and print effective settings");

  for (auto* sub : {curate, cold, roll, bench, dump, validate}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  RunOptions options;
  options.force = force;
  options.stop_after = stop_after;
  options.log = quiet ? nullptr : &std::cerr;

  try {
    if (dump->parsed()) {
      const auto text = dump_templates(template_dir);
      if (!template_dir) std::cout << text;
      return kExitOk;
    }

    Settings settings;
    if (config_file) settings.merge_ini(*config_file);
    for (const auto& [key, opt] : flags)
      if (opt->count() > 0) settings.set(key, overrides[key]);
    if (setting) settings.set("bench.setting", *setting);
    if (k_list) settings.set("bench.k", *k_list);
    const auto config = PipelineConfig::from_settings(std::move(settings));

    if (validate->parsed()) {
      std::cout << validate_config(config);
    } else if (curate->parsed()) {
      cmd_curate(config, in, out, options);
    } else if (cold->parsed()) {
      cmd_coldstart(config, in, {out_sft, out_rl, discards}, options);
    } else if (roll->parsed()) {
      cmd_rollout_rewards(config, in, out, trees, options);
    } else if (bench->parsed()) {
      cmd_bench(config, {datasets, out, compare, capture}, options);
    }
    return kExitOk;
  } catch (const Interrupted& e) {
    std::cerr << "interrupted: " << e.what() << "; rerun to resume\n";
    return kExitInterrupted;
  } catch (const cerm::Error& e) {
    std::cerr << "error (" << cerm::to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}
