// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SEPFORGE_WAV_HPP_
#define SEPFORGE_WAV_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sepforge/audio.hpp"

namespace sepforge::wav {

enum class SampleFormat { kPcm16, kPcm24, kFloat32 };

// Decodes RIFF/WAVE with PCM 16/24-bit integer or 32-bit IEEE float data,
// including WAVE_FORMAT_EXTENSIBLE wrappers. Throws AudioError.
AudioBuffer decode(const std::vector<std::uint8_t>& bytes,
                   const std::string& source_id = {});
AudioBuffer read(const std::filesystem::path& path,
                 const std::string& source_id = {});

std::vector<std::uint8_t> encode(const AudioBuffer& buffer,
                                 SampleFormat format = SampleFormat::kFloat32);

// Writes via a temporary sibling and rename, so readers never observe a
// partial file.
void write(const std::filesystem::path& path, const AudioBuffer& buffer,
           SampleFormat format = SampleFormat::kFloat32);

}  // namespace sepforge::wav

#endif  // SEPFORGE_WAV_HPP_
