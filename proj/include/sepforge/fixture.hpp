// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Synthetic ten-file corpus with everything the pipeline needs to run
// offline: taxonomy, refinement plan, metadata, coarse tags, offline
// annotator answers, co-occurrence matrix, listening-study responses and a
// config file wiring them together.

#ifndef SEPFORGE_FIXTURE_HPP_
#define SEPFORGE_FIXTURE_HPP_

#include <cstdint>
#include <filesystem>

namespace sepforge::fixture {

struct FixtureOptions {
  std::uint64_t seed = 7;
  std::size_t train = 12;
  std::size_t val = 4;
  std::size_t test = 4;
  unsigned workers = 2;
};

// Writes under root; returns the path of the generated config.json.
std::filesystem::path write_fixture(const std::filesystem::path& root,
                                    const FixtureOptions& options = {});

}  // namespace sepforge::fixture

#endif  // SEPFORGE_FIXTURE_HPP_
