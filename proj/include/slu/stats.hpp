// stats.hpp
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

#include <span>

namespace slu {

double mean(std::span<const double> xs);
double sample_std(std::span<const double> xs);

// Regularized incomplete beta function I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value of Student's t with the given degrees of freedom.
double student_t_two_sided_p(double t, double df);

// Welch's unequal-variance two-sample t-test, two-sided. Variances are
// floored at 1e-12 so degenerate zero-variance inputs stay defined.
// Throws EvalError(InsufficientSamples) when either list has < 2 entries.
double welch_p_value(std::span<const double> a, std::span<const double> b);

}  // namespace slu
