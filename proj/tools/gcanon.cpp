#include <string>

#include <CLI11.hpp>

#include "gcanon/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"canonical guiding-center toolkit"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir = "out";
  int jobs = 1;
  bool quiet = false;
  app.add_option("--config", config, "run configuration (JSON, comments allowed)")->required();
  app.add_option("--out-dir", out_dir, "directory for trajectory.csv, diagnostics.csv, summary.json");
  app.add_option("--jobs", jobs, "concurrent scan jobs")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "suppress progress output");
  app.fallthrough();

  for (auto name : gcanon::cli::kSubcommands) app.add_subcommand(std::string(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  return gcanon::cli::run(sub, config, out_dir, jobs, quiet);
}
