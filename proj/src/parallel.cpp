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

#include "sdgd/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdgd::par {

namespace {
#ifdef _OPENMP
Mode g_mode = Mode::OpenMP;
#else
Mode g_mode = Mode::Serial;
#endif
}  // namespace

Mode mode() { return g_mode; }

void set_mode(Mode m) { g_mode = m; }

bool openmp_available() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body) {
#ifdef _OPENMP
  if (g_mode == Mode::OpenMP && n > 1) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    body(i);
  }
}

}  // namespace sdgd::par
