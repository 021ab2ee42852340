// Copyright 2026 The fedsilo Authors
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

#include "fedsilo/privacy.hpp"

#include <cmath>
#include <string>

#include "fedsilo/error.hpp"

namespace fedsilo {

std::string_view privacy_mechanism_name(PrivacyMechanism m) {
  return m == PrivacyMechanism::kLaplace ? "laplace" : "none";
}

PrivacyMechanism privacy_mechanism_from_name(std::string_view s) {
  if (s == "none") return PrivacyMechanism::kNone;
  if (s == "laplace") return PrivacyMechanism::kLaplace;
  throw Error(ErrorCode::kInvalidPrivacyConfig,
              "unknown privacy mechanism '" + std::string(s) + "'");
}

void PrivacyConfig::validate() const {
  if (mechanism == PrivacyMechanism::kNone) return;
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::kInvalidPrivacyConfig, "laplace mechanism needs epsilon > 0");
  }
  if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) {
    throw Error(ErrorCode::kInvalidPrivacyConfig, "laplace mechanism needs clip_norm > 0");
  }
}

ParameterVector clip_l2(const ParameterVector& v, double bound) {
  const double norm = l2_norm(v);
  if (norm <= bound) return v;
  auto clipped = scale(bound / norm, v);
  // Rounding in the rescale can leave the norm an ulp above the bound.
  while (l2_norm(clipped) > bound) clipped = scale(std::nextafter(1.0, 0.0), clipped);
  return clipped;
}

double sample_laplace(std::mt19937_64& rng, double b) {
  // u uniform on (-1/2, 1/2), excluding the endpoints.
  double u = 0.0;
  do {
    u = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  } while (u == -0.5);
  const double sign = u < 0.0 ? -1.0 : 1.0;
  return -b * sign * std::log1p(-2.0 * std::fabs(u));
}

ParameterVector apply_dp(const ParameterVector& delta, const PrivacyConfig& privacy) {
  privacy.validate();
  if (privacy.mechanism == PrivacyMechanism::kNone) return delta;

  const auto clipped = clip_l2(delta, privacy.clip_norm);
  std::mt19937_64 rng(privacy.noise_seed ? *privacy.noise_seed : std::random_device{}());
  const double b = privacy.laplace_scale();
  std::vector<double> noisy(clipped.values().begin(), clipped.values().end());
  for (auto& x : noisy) x += sample_laplace(rng, b);
  return ParameterVector(delta.layout_ptr(), std::move(noisy));
}

}  // namespace fedsilo
