#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <utility>

#include "kam_cli/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"KAM torus construction by the linear scheme"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  bool strict = false;
  const std::pair<const char*, const char*> kinds[] = {
      {"step", "run one KAM step on the configured perturbation"},
      {"iterate", "iterate to the invariant torus and check it a posteriori"},
      {"scaling", "sweep eps and fit the torus-distance exponents"},
      {"verify", "run the fixed-seed property suites"},
  };
  for (const auto& [kind, help] : kinds) {
    CLI::App* sub = app.add_subcommand(kind, help);
    sub->add_option("--config", config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory, overrides the config");
    sub->add_flag("--strict", strict, "treat every failed assertion as fatal");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kam::cli::kExitConfig;
  }

  const std::string kind = app.get_subcommands().front()->get_name();
  const kam::cli::Outcome o = kam::cli::run_file(config_path, kind, out_dir, strict, std::cerr);
  if (o.exit_code == kam::cli::kExitOk) std::cout << o.message << "\n";
  return o.exit_code;
}
