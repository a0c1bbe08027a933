#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hermitelab/cli_runner.hpp"

int main(int argc, char** argv) {
  using namespace hermitelab;
  CLI::App app{"Hermite process laboratory"};
  app.require_subcommand(1, 1);
  RunRequest request;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", request.config_path, "config file (key = value)")->required();
    sub->add_option("--out", request.out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads (does not change results)");
    sub->add_option("--seed", seed, "overrides the config seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }
  for (auto* sub : app.get_subcommands()) {
    request.subcommand = sub->get_name();
    if (sub->count("--threads")) request.threads = threads;
    if (sub->count("--seed")) request.seed = seed;
  }
  return run(request, std::cout, std::cerr);
}
