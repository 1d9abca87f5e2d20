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

#include <cstddef>
#include <functional>

namespace ecdiff::pipeline {

/// Worker count: `requested` (0 = hardware concurrency), capped by the
/// ECDIFF_THREADS environment variable when set, and at least 1.
std::size_t worker_count(std::size_t requested = 0);

/// Calls task(i) for i in [0, n) on up to `workers` threads. Tasks must be
/// independent. The first exception thrown by a task is rethrown after all
/// workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task);

}  // namespace ecdiff::pipeline
