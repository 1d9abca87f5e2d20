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

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ecdiff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Runs one subcommand (gen-data, train, eval, ablate, generalize,
/// attn-test, render, selftest). Returns 0 on success, 1 on usage or
/// configuration errors and 2 when the command itself fails.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Fast invariant checks; prints one line per check and returns true when
/// all pass.
bool selftest(std::ostream& out);

}  // namespace ecdiff::cli
