#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icon/runner.hpp"

namespace {

// --ablate tokens flip individual components off on top of the config.
void apply_ablations(icon::RunConfig& cfg, const std::vector<std::string>& tokens) {
  for (const std::string& t : tokens) {
    if (t == "no-cast") {
      cfg.trainer.cast_enabled = false;
    } else if (t == "no-ic") {
      cfg.trainer.ic_enabled = false;
    } else if (t == "no-dt") {
      cfg.trainer.dynamic_threshold_enabled = false;
    } else {
      throw icon::ConfigError("unknown --ablate token '" + t +
                              "' (expected no-cast, no-ic, no-dt)");
    }
  }
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string scenario;
  std::vector<std::string> ablate;
  std::int64_t seed = -1;
};

icon::RunConfig resolve(const CommonOpts& opts) {
  icon::RunConfig cfg = icon::load_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.run.out_dir = opts.out_dir;
  if (!opts.scenario.empty()) cfg.scenario.kind = icon::parse_stream_kind(opts.scenario);
  if (opts.seed >= 0) cfg.run.seeds = {std::uint64_t(opts.seed)};
  apply_ablations(cfg, opts.ablate);
  icon::validate_config(cfg);
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "path to the JSON config")->required();
  cmd->add_option("-o,--out", opts.out_dir, "override run.out_dir");
  cmd->add_option("-s,--seed", opts.seed, "run a single seed instead of run.seeds");
  cmd->add_option("--scenario", opts.scenario, "override scenario.kind (cil|dil|vil|cdil)");
  cmd->add_option("--ablate", opts.ablate,
                  "components to disable (no-cast, no-ic, no-dt)")
      ->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"versatile incremental learning benchmark"};
  app.require_subcommand(1);

  CommonOpts opts;
  CLI::App* run = app.add_subcommand("run", "train every seed and emit metrics");
  add_common(run, opts);
  CLI::App* ablation =
      app.add_subcommand("ablation", "component grid over the same config");
  add_common(ablation, opts);
  CLI::App* validate =
      app.add_subcommand("validate", "print the resolved config and derived sizes");
  add_common(validate, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    const icon::RunConfig cfg = resolve(opts);
    if (run->parsed()) {
      icon::cmd_run(cfg);
    } else if (ablation->parsed()) {
      icon::cmd_ablation(cfg);
    } else if (validate->parsed()) {
      icon::cmd_validate(cfg);
    }
  } catch (const icon::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const icon::BadConfig& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const icon::BadKind& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const icon::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
