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

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

#include "fedsilo/params.hpp"

namespace fedsilo {

enum class PrivacyMechanism { kNone, kLaplace };

std::string_view privacy_mechanism_name(PrivacyMechanism m);
PrivacyMechanism privacy_mechanism_from_name(std::string_view s);

struct PrivacyConfig {
  PrivacyMechanism mechanism = PrivacyMechanism::kNone;
  double epsilon = 0.0;    // per-round budget
  double clip_norm = 0.0;  // L2 bound C on the update delta
  std::optional<std::uint64_t> noise_seed;

  // Throws InvalidPrivacyConfig.
  void validate() const;
  double laplace_scale() const { return clip_norm / epsilon; }
  bool operator==(const PrivacyConfig&) const = default;
};

// Rescales v to L2 norm <= bound (unchanged when already inside).
ParameterVector clip_l2(const ParameterVector& v, double bound);

// Draws Laplace(0, b) by inverse CDF.
double sample_laplace(std::mt19937_64& rng, double b);

// Output perturbation of a model update. `none` returns the input unchanged;
// `laplace` clips to clip_norm then adds i.i.d. Laplace(0, clip_norm/epsilon)
// noise per coordinate (seeded from noise_seed when present).
ParameterVector apply_dp(const ParameterVector& delta, const PrivacyConfig& privacy);

}  // namespace fedsilo
