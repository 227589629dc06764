// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Writes the synthetic demo corpus and its config into a directory.

#include <iostream>

#include <CLI11.hpp>

#include "sepforge/fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic ten-file demo corpus"};
  std::string dir;
  sepforge::fixture::FixtureOptions options;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--seed", options.seed, "Synthesis seed");
  app.add_option("--train", options.train, "Training mixtures");
  app.add_option("--val", options.val, "Validation mixtures");
  app.add_option("--test", options.test, "Test mixtures");
  CLI11_PARSE(app, argc, argv);
  try {
    std::cout << sepforge::fixture::write_fixture(dir, options).string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
