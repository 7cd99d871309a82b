// nvphoto command-line front end.

#include "nvphoto/nvphoto.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::uint64_t> shots;
  bool infinite_shots = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("-c,--config", c.config, "JSON run config");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "random seed (overrides config)");
  cmd->add_option("-o,--out", c.out, "output directory (overrides config)");
  cmd->add_option("--shots", c.shots, "shots per point (overrides config)");
  cmd->add_flag("--infinite-shots", c.infinite_shots, "exact means instead of sampled counts");
}

nvphoto::RunContext context(const Common& c) {
  nvphoto::RunContext ctx;
  if (!c.config.empty()) {
    const nvphoto::fs::path path(c.config);
    if (!nvphoto::fs::exists(path)) nvphoto::fail(nvphoto::ErrorKind::config, "config file '" + c.config + "' not found");
    ctx.config = nvphoto::io::read_json(path);
    if (!ctx.config.is_object()) nvphoto::fail(nvphoto::ErrorKind::config, c.config + ": expected a JSON object");
    ctx.base = path.parent_path();
  } else {
    ctx.config = nvphoto::Json::object();
  }
  nvphoto::apply_overrides(ctx.config, {c.seed, c.out, c.shots, c.infinite_shots});
  if (!ctx.config.contains("out")) nvphoto::fail(nvphoto::ErrorKind::config, "no output directory (config 'out' or --out)");
  ctx.out = ctx.config.at("out").get<std::string>();
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV center charge/spin photodynamics: simulate, fit, age, sense, calibrate"};
  app.set_version_flag("--version", NVPHOTO_VERSION);
  app.require_subcommand(1);

  Common simulate, fit, age, sense, calibrate;
  std::vector<std::string> trace_paths;
  std::string model;
  bool defaults = false;

  auto* c_sim = app.add_subcommand("simulate", "simulate protocol traces");
  add_common(c_sim, simulate, true);
  auto* c_fit = app.add_subcommand("fit", "fit traces");
  add_common(c_fit, fit, false);
  c_fit->add_option("traces", trace_paths, "trace CSV files (override config 'traces')");
  c_fit->add_option("--model", model, "mono, bi or auto")->check(CLI::IsMember({"mono", "bi", "auto"}));
  auto* c_age = app.add_subcommand("age", "dose sweep of an aging channel");
  add_common(c_age, age, true);
  auto* c_sense = app.add_subcommand("sense", "radical-pair sensing figures of merit");
  add_common(c_sense, sense, true);
  auto* c_cal = app.add_subcommand("calibrate", "solve cross sections from targets");
  add_common(c_cal, calibrate, false);
  c_cal->add_flag("--defaults", defaults, "also write the shipped profiles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    nvphoto::Json manifest;
    if (c_sim->parsed()) {
      manifest = nvphoto::cmd_simulate(context(simulate));
    } else if (c_fit->parsed()) {
      auto ctx = context(fit);
      if (!trace_paths.empty()) {
        ctx.config["traces"] = trace_paths;
        ctx.base.clear();
      }
      if (!model.empty()) ctx.config["model"] = model;
      manifest = nvphoto::cmd_fit(ctx);
      std::cout << nvphoto::io::read_file(ctx.out / "fit_report.txt");
    } else if (c_age->parsed()) {
      manifest = nvphoto::cmd_age(context(age));
    } else if (c_sense->parsed()) {
      manifest = nvphoto::cmd_sense(context(sense));
    } else {
      manifest = nvphoto::cmd_calibrate(context(calibrate), defaults);
    }
    std::cout << manifest.at("summary").dump(2) << "\n";
  } catch (const nvphoto::Error& e) {
    std::cerr << "nvphoto: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nvphoto::Json::exception& e) {
    std::cerr << "nvphoto: config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "nvphoto: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
