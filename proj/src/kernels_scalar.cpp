// Copyright 2026 The cfguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cfguard/kernels.hpp"

namespace cfguard::kernels {

namespace {

double SumScalar(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v;
  return acc;
}

double DotScalar(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double SumSqDevScalar(std::span<const double> x, double mu) {
  double acc = 0.0;
  for (double v : x) {
    double d = v - mu;
    acc += d * d;
  }
  return acc;
}

void Clip01Scalar(std::span<double> x) {
  for (double& v : x) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
  }
}

}  // namespace

extern const Ops kScalarOps;
const Ops kScalarOps = {SumScalar, DotScalar, SumSqDevScalar, Clip01Scalar,
                        "scalar"};

}  // namespace cfguard::kernels
