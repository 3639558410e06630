// Copyright 2026 The SDGD Authors
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

#ifndef SDGD_PARALLEL_HPP_
#define SDGD_PARALLEL_HPP_

#include <cstdint>
#include <functional>

namespace sdgd::par {

// Execution mode for the data-parallel kernels. Serial runs the exact same
// loop bodies in index order and is kept as the reference path for testing;
// results must be bit-identical between the two modes, which holds because
// every kernel writes to disjoint per-index slots and all floating-point
// reductions happen in a fixed order after the loop.
enum class Mode { Serial, OpenMP };

Mode mode();
void set_mode(Mode m);
bool openmp_available();
int max_threads();

// Runs body(i) for i in [0, n). The body goes through std::function so the
// serial and OpenMP paths execute the same compiled code.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace sdgd::par

#endif  // SDGD_PARALLEL_HPP_
