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

// Random small-instance gradient checks shared by the unit and acceptance
// suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fedsilo/dataset.hpp"
#include "fedsilo/model.hpp"
#include "fedsilo/trainer.hpp"
#include "oracles.hpp"

namespace fedsilo::testing {

struct GradCheckResult {
  double relative_error = 0.0;
  double max_abs_diff = 0.0;
  int redraws = 0;  // parameter draws rejected for sitting near a kink
};

// Independent forward pass over the named tensors. Returns the mean loss and
// reports the smallest distance to a non-differentiable point: a ReLU
// pre-activation near zero, or a max-pool window whose two largest positive
// entries nearly tie.
struct ReferenceForward {
  double mean_loss = 0.0;
  double kink_margin = 0.0;
};

inline ReferenceForward reference_forward(const ModelSpec& spec, const ModelLayout& layout,
                                          const std::vector<double>& p,
                                          const LocalDataset& data, LossKind loss) {
  ReferenceForward out;
  out.kink_margin = std::numeric_limits<double>::infinity();
  const auto at = [&](const std::string& name) { return p.data() + layout.offset_of(name); };
  const auto relu = [&](std::vector<double>& z) {
    for (auto& v : z) {
      out.kink_margin = std::min(out.kink_margin, std::abs(v));
      v = std::max(v, 0.0);
    }
  };
  const auto dense = [&](const std::string& name, const std::vector<double>& in,
                         std::size_t outs) {
    const double* w = at(name + ".weight");
    const double* b = at(name + ".bias");
    std::vector<double> z(outs);
    for (std::size_t o = 0; o < outs; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in.size(); ++i) s += w[o * in.size() + i] * in[i];
      z[o] = s;
    }
    return z;
  };
  // in: [c][h][w] -> [f][h-k+1][w-k+1]
  const auto conv = [&](const std::string& name, const std::vector<double>& in, std::size_t c,
                        std::size_t h, std::size_t w, std::size_t f, std::size_t k) {
    const double* wt = at(name + ".weight");
    const double* b = at(name + ".bias");
    const std::size_t oh = h - k + 1, ow = w - k + 1;
    std::vector<double> z(f * oh * ow);
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double s = b[o];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx)
                s += wt[((o * c + ci) * k + ky) * k + kx] * in[(ci * h + y + ky) * w + x + kx];
          z[(o * oh + y) * ow + x] = s;
        }
    return z;
  };
  const auto pool = [&](const std::vector<double>& in, std::size_t c, std::size_t h,
                        std::size_t w) {
    const std::size_t oh = h / 2, ow = w / 2;
    std::vector<double> z(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          std::vector<double> win;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              win.push_back(in[(ci * h + 2 * y + dy) * w + 2 * x + dx]);
          std::sort(win.begin(), win.end(), std::greater<>());
          if (win[0] > 0.0) out.kink_margin = std::min(out.kink_margin, win[0] - win[1]);
          z[(ci * oh + y) * ow + x] = win[0];
        }
    return z;
  };

  const std::size_t k = spec.num_classes;
  double total = 0.0;
  for (std::size_t r : data.train_idx) {
    std::vector<double> x(data.row(r), data.row(r) + data.num_features);
    std::vector<double> logits;
    switch (spec.kind) {
      case ModelKind::kLogisticRegression:
        logits = dense("linear", x, k);
        break;
      case ModelKind::kMlp: {
        std::size_t l = 0;
        for (auto width : spec.hidden_sizes) {
          x = dense("fc" + std::to_string(l++), x, width);
          relu(x);
        }
        logits = dense("fc" + std::to_string(l), x, k);
        break;
      }
      case ModelKind::kCnn2: {
        std::size_t c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
        for (int stage = 0; stage < 2; ++stage) {
          const std::size_t f = spec.channels[stage], kk = spec.kernel_sizes[stage];
          x = conv(stage == 0 ? "conv1" : "conv2", x, c, h, w, f, kk);
          c = f;
          h = h - kk + 1;
          w = w - kk + 1;
          relu(x);
          x = pool(x, c, h, w);
          h /= 2;
          w /= 2;
        }
        x = dense("fc1", x, spec.hidden_sizes[0]);
        relu(x);
        logits = dense("fc2", x, k);
        break;
      }
    }
    const int y = data.labels[r];
    if (loss == LossKind::kCrossEntropy) {
      const double mx = *std::max_element(logits.begin(), logits.end());
      double se = 0.0;
      for (double z : logits) se += std::exp(z - mx);
      total += mx + std::log(se) - logits[y];
    } else {
      double se = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double t = static_cast<int>(j) == y ? 1.0 : 0.0;
        se += (logits[j] - t) * (logits[j] - t);
      }
      total += se / static_cast<double>(k);
    }
  }
  out.mean_loss = total / static_cast<double>(data.train_idx.size());
  return out;
}

inline ModelSpec random_small_spec(ModelKind kind, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> classes(2, 4), feats(2, 6), width(2, 5);
  ModelSpec spec;
  spec.kind = kind;
  spec.num_classes = static_cast<std::uint32_t>(classes(rng));
  spec.init_seed = rng();
  switch (kind) {
    case ModelKind::kLogisticRegression:
      spec.input_shape = {static_cast<std::uint32_t>(feats(rng))};
      break;
    case ModelKind::kMlp:
      spec.input_shape = {static_cast<std::uint32_t>(feats(rng))};
      spec.hidden_sizes = {static_cast<std::uint32_t>(width(rng)),
                           static_cast<std::uint32_t>(width(rng))};
      break;
    case ModelKind::kCnn2: {
      std::uniform_int_distribution<int> side(10, 12), ch(1, 2);
      const auto s = static_cast<std::uint32_t>(side(rng));
      spec.input_shape = {static_cast<std::uint32_t>(ch(rng)), s, s};
      spec.channels = {2, 3};
      spec.kernel_sizes = {3, 2};
      spec.hidden_sizes = {static_cast<std::uint32_t>(width(rng))};
      break;
    }
  }
  return spec;
}

inline LocalDataset random_dataset(const ModelSpec& spec, std::size_t n, std::mt19937_64& rng) {
  LocalDataset d;
  d.num_features = spec.input_size();
  d.feature_shape = spec.input_shape;
  d.num_classes = static_cast<int>(spec.num_classes);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, d.num_classes - 1);
  d.features.resize(n * d.num_features);
  for (auto& x : d.features) x = u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels.push_back(lab(rng));
    d.train_idx.push_back(i);
  }
  return d;
}

// Minimum kink margin accepted at the base point. A single-coordinate step of
// h=1e-5 moves any pre-activation by far less than this on unit-scale inputs,
// so the central difference never straddles a kink.
inline constexpr double kKinkMargin = 1e-3;

inline GradCheckResult gradient_check(const ModelSpec& spec, const LocalDataset& data,
                                      LossKind loss, std::mt19937_64& rng, double h = 1e-5) {
  const auto net = Network::create(spec);
  const auto layout = model_layout(spec);
  auto init = init_model(spec);
  std::vector<double> params;
  GradCheckResult r;
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (;;) {
    params.assign(init.values().begin(), init.values().end());
    for (auto& p : params) p += jitter(rng);
    if (reference_forward(spec, *layout, params, data, loss).kink_margin >= kKinkMargin) break;
    ++r.redraws;
  }

  std::vector<double> analytic(params.size());
  loss_and_gradient(*net, params, data, data.train_idx, loss, analytic);

  std::vector<double> scratch(params.size());
  const auto f = [&](const std::vector<double>& p) {
    return loss_and_gradient(*net, p, data, data.train_idx, loss, scratch);
  };
  const auto numeric = oracle::finite_difference(f, params, h);

  r.relative_error = oracle::relative_error(analytic, numeric);
  for (std::size_t i = 0; i < params.size(); ++i) {
    r.max_abs_diff = std::max(r.max_abs_diff, std::abs(analytic[i] - numeric[i]));
  }
  return r;
}

}  // namespace fedsilo::testing
