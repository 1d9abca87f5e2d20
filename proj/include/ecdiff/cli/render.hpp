// Copyright 2026 The ecdiff Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Schematic SVG rendering of trajectory and plan dumps.

#pragma once

#include <cstddef>
#include <filesystem>
#include <json.hpp>
#include <string>

namespace ecdiff::cli {

/// Writes frame_0000.svg, frame_0001.svg, ... for every frame of a
/// trajectory or plans dump into `out_dir` and returns the frame count.
/// Throws std::runtime_error on malformed input.
std::size_t render_json(const nlohmann::json& dump, const std::filesystem::path& out_dir);
std::size_t render_file(const std::filesystem::path& input, const std::filesystem::path& out_dir);

/// Fill color of a palette slot; the agent slot and anything else get gray.
std::string palette_color(int slot);

}  // namespace ecdiff::cli
