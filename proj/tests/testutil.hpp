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

#ifndef SDGD_TESTS_TESTUTIL_HPP_
#define SDGD_TESTS_TESTUTIL_HPP_

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace sdgd::testutil {

// Central finite difference of a scalar function at x, one coordinate.
inline double central_diff(const std::function<double(std::span<const double>)>& f,
                           std::vector<double> x, std::size_t i,
                           double h = 1e-4) {
  const double orig = x[i];
  x[i] = orig + h;
  const double fp = f(x);
  x[i] = orig - h;
  const double fm = f(x);
  x[i] = orig;
  return (fp - fm) / (2.0 * h);
}

// Relative error scaled by max(1, |reference|), the tolerance convention the
// gradient checks use.
inline double rel_err(double value, double reference) {
  return std::abs(value - reference) / std::max(1.0, std::abs(reference));
}

// Full finite-difference gradient check: returns the worst relative error
// over all coordinates.
inline double max_grad_rel_err(
    const std::function<double(std::span<const double>)>& f,
    const std::vector<double>& x, std::span<const double> analytic,
    double h = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = central_diff(f, x, i, h);
    worst = std::max(worst, rel_err(analytic[i], fd));
  }
  return worst;
}

}  // namespace sdgd::testutil

#endif  // SDGD_TESTS_TESTUTIL_HPP_
