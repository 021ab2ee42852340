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

#include "fedsilo/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>

#include "fedsilo/error.hpp"

namespace fedsilo {
namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void fill_glorot(std::span<double> w, std::size_t fan_in, std::size_t fan_out,
                 std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : w) x = (2.0 * uniform01(rng) - 1.0) * limit;
}

// Fully connected layer view over the flat parameter array.
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t w_offset = 0;
  std::size_t b_offset = 0;

  void forward(std::span<const double> p, const double* a, double* z) const {
    const double* w = p.data() + w_offset;
    const double* b = p.data() + b_offset;
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
  }

  // da may be null when the input gradient is not needed.
  void backward(std::span<const double> p, const double* a, const double* dz,
                std::span<double> g, double* da) const {
    const double* w = p.data() + w_offset;
    double* gw = g.data() + w_offset;
    double* gb = g.data() + b_offset;
    if (da != nullptr) std::fill(da, da + in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = dz[o];
      gb[o] += d;
      if (d == 0.0) continue;
      const double* row = w + o * in;
      double* grow = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
      if (da != nullptr) {
        for (std::size_t i = 0; i < in; ++i) da[i] += d * row[i];
      }
    }
  }
};

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

class DenseNetwork final : public Network {
 public:
  // widths = [input, hidden..., classes]; ReLU between layers.
  explicit DenseNetwork(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      Dense d{widths_[l], widths_[l + 1], offset, offset + widths_[l] * widths_[l + 1]};
      offset = d.b_offset + d.out;
      layers_.push_back(d);
    }
    params_ = offset;
  }

  std::size_t input_size() const override { return widths_.front(); }
  std::size_t param_count() const override { return params_; }

  BatchStats run(std::span<const double> params, std::span<const double> inputs,
                 std::span<const int> labels, LossKind loss,
                 std::span<double> grad) const override {
    const std::size_t depth = layers_.size();
    const std::size_t d_in = input_size();
    // acts[l] is the input to layer l; pre[l] its pre-activation output.
    std::vector<std::vector<double>> acts(depth + 1), pre(depth);
    for (std::size_t l = 0; l < depth; ++l) {
      acts[l + 1].resize(layers_[l].out);
      pre[l].resize(layers_[l].out);
    }
    std::vector<double> delta, next_delta;

    BatchStats stats;
    for (std::size_t s = 0; s < labels.size(); ++s) {
      const double* x = inputs.data() + s * d_in;
      const double* a = x;
      for (std::size_t l = 0; l < depth; ++l) {
        layers_[l].forward(params, a, pre[l].data());
        auto& out = acts[l + 1];
        if (l + 1 < depth) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, pre[l][i]);
        } else {
          out = pre[l];
        }
        a = out.data();
      }
      const auto& logits = pre[depth - 1];
      delta.assign(logits.size(), 0.0);
      stats.loss_sum += logits_loss(logits, labels[s], loss,
                                    grad.empty() ? std::span<double>() : std::span(delta));
      stats.correct += argmax(logits) == labels[s];
      ++stats.count;
      if (grad.empty()) continue;

      for (std::size_t l = depth; l-- > 0;) {
        const double* layer_in = l == 0 ? x : acts[l].data();
        const bool need_input_grad = l > 0;
        next_delta.assign(layers_[l].in, 0.0);
        layers_[l].backward(params, layer_in, delta.data(), grad,
                            need_input_grad ? next_delta.data() : nullptr);
        if (!need_input_grad) break;
        for (std::size_t i = 0; i < next_delta.size(); ++i) {
          if (pre[l - 1][i] <= 0.0) next_delta[i] = 0.0;
        }
        delta.swap(next_delta);
      }
    }
    return stats;
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<Dense> layers_;
  std::size_t params_ = 0;
};

struct Conv {
  std::size_t in_c, in_h, in_w, out_c, k;
  std::size_t w_offset, b_offset;

  std::size_t out_h() const { return in_h - k + 1; }
  std::size_t out_w() const { return in_w - k + 1; }

  void forward(std::span<const double> p, const double* in, double* out) const {
    const double* w = p.data() + w_offset;
    const double* b = p.data() + b_offset;
    const std::size_t oh = out_h(), ow = out_w();
    for (std::size_t f = 0; f < out_c; ++f) {
      double* o = out + f * oh * ow;
      std::fill(o, o + oh * ow, b[f]);
      for (std::size_t c = 0; c < in_c; ++c) {
        const double* plane = in + c * in_h * in_w;
        const double* kern = w + ((f * in_c + c) * k) * k;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double wv = kern[ky * k + kx];
            for (std::size_t y = 0; y < oh; ++y) {
              const double* row = plane + (y + ky) * in_w + kx;
              double* orow = o + y * ow;
              for (std::size_t x = 0; x < ow; ++x) orow[x] += wv * row[x];
            }
          }
        }
      }
    }
  }

  void backward(std::span<const double> p, const double* in, const double* dout,
                std::span<double> g, double* din) const {
    const double* w = p.data() + w_offset;
    double* gw = g.data() + w_offset;
    double* gb = g.data() + b_offset;
    const std::size_t oh = out_h(), ow = out_w();
    if (din != nullptr) std::fill(din, din + in_c * in_h * in_w, 0.0);
    for (std::size_t f = 0; f < out_c; ++f) {
      const double* d = dout + f * oh * ow;
      double bsum = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) bsum += d[i];
      gb[f] += bsum;
      for (std::size_t c = 0; c < in_c; ++c) {
        const double* plane = in + c * in_h * in_w;
        const std::size_t kbase = ((f * in_c + c) * k) * k;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            const double wv = w[kbase + ky * k + kx];
            for (std::size_t y = 0; y < oh; ++y) {
              const double* row = plane + (y + ky) * in_w + kx;
              const double* drow = d + y * ow;
              for (std::size_t x = 0; x < ow; ++x) acc += drow[x] * row[x];
              if (din != nullptr) {
                double* dinrow = din + c * in_h * in_w + (y + ky) * in_w + kx;
                for (std::size_t x = 0; x < ow; ++x) dinrow[x] += wv * drow[x];
              }
            }
            gw[kbase + ky * k + kx] += acc;
          }
        }
      }
    }
  }
};

// 2x2 stride-2 max pooling; odd trailing rows/columns are dropped.
struct Pool {
  std::size_t c, in_h, in_w;
  std::size_t out_h() const { return in_h / 2; }
  std::size_t out_w() const { return in_w / 2; }

  void forward(const double* in, double* out, std::size_t* arg) const {
    const std::size_t oh = out_h(), ow = out_w();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          std::size_t best = ch * in_h * in_w + (2 * y) * in_w + 2 * x;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ch * in_h * in_w + (2 * y + dy) * in_w + 2 * x + dx;
              if (in[idx] > in[best]) best = idx;
            }
          }
          const std::size_t o = (ch * oh + y) * ow + x;
          out[o] = in[best];
          arg[o] = best;
        }
      }
    }
  }
};

class Cnn2Network final : public Network {
 public:
  explicit Cnn2Network(const ModelSpec& spec) {
    const std::size_t c = spec.input_shape[0], h = spec.input_shape[1],
                      w = spec.input_shape[2];
    std::size_t offset = 0;
    conv1_ = {c, h, w, spec.channels[0], spec.kernel_sizes[0], 0, 0};
    conv1_.w_offset = offset;
    conv1_.b_offset = offset + conv1_.out_c * c * conv1_.k * conv1_.k;
    offset = conv1_.b_offset + conv1_.out_c;
    pool1_ = {conv1_.out_c, conv1_.out_h(), conv1_.out_w()};
    conv2_ = {pool1_.c, pool1_.out_h(), pool1_.out_w(), spec.channels[1],
              spec.kernel_sizes[1], 0, 0};
    conv2_.w_offset = offset;
    conv2_.b_offset = offset + conv2_.out_c * conv2_.in_c * conv2_.k * conv2_.k;
    offset = conv2_.b_offset + conv2_.out_c;
    pool2_ = {conv2_.out_c, conv2_.out_h(), conv2_.out_w()};
    flat_ = pool2_.c * pool2_.out_h() * pool2_.out_w();
    fc1_ = {flat_, spec.hidden_sizes[0], offset, offset + flat_ * spec.hidden_sizes[0]};
    offset = fc1_.b_offset + fc1_.out;
    fc2_ = {fc1_.out, spec.num_classes, offset, offset + fc1_.out * spec.num_classes};
    params_ = fc2_.b_offset + fc2_.out;
    input_ = c * h * w;
  }

  std::size_t input_size() const override { return input_; }
  std::size_t param_count() const override { return params_; }

  BatchStats run(std::span<const double> params, std::span<const double> inputs,
                 std::span<const int> labels, LossKind loss,
                 std::span<double> grad) const override {
    const std::size_t n1 = conv1_.out_c * conv1_.out_h() * conv1_.out_w();
    const std::size_t p1 = pool1_.c * pool1_.out_h() * pool1_.out_w();
    const std::size_t n2 = conv2_.out_c * conv2_.out_h() * conv2_.out_w();
    std::vector<double> z1(n1), a1(n1), q1(p1), z2(n2), a2(n2), q2(flat_);
    std::vector<std::size_t> arg1(p1), arg2(flat_);
    std::vector<double> h(fc1_.out), hz(fc1_.out), logits(fc2_.out);
    std::vector<double> dlogits(fc2_.out), dh(fc1_.out), dq2(flat_), da2(n2), dq1(p1),
        da1(n1);

    BatchStats stats;
    for (std::size_t s = 0; s < labels.size(); ++s) {
      const double* x = inputs.data() + s * input_;
      conv1_.forward(params, x, z1.data());
      for (std::size_t i = 0; i < n1; ++i) a1[i] = std::max(0.0, z1[i]);
      pool1_.forward(a1.data(), q1.data(), arg1.data());
      conv2_.forward(params, q1.data(), z2.data());
      for (std::size_t i = 0; i < n2; ++i) a2[i] = std::max(0.0, z2[i]);
      pool2_.forward(a2.data(), q2.data(), arg2.data());
      fc1_.forward(params, q2.data(), hz.data());
      for (std::size_t i = 0; i < hz.size(); ++i) h[i] = std::max(0.0, hz[i]);
      fc2_.forward(params, h.data(), logits.data());

      stats.loss_sum += logits_loss(logits, labels[s], loss,
                                    grad.empty() ? std::span<double>() : std::span(dlogits));
      stats.correct += argmax(logits) == labels[s];
      ++stats.count;
      if (grad.empty()) continue;

      fc2_.backward(params, h.data(), dlogits.data(), grad, dh.data());
      for (std::size_t i = 0; i < dh.size(); ++i) {
        if (hz[i] <= 0.0) dh[i] = 0.0;
      }
      fc1_.backward(params, q2.data(), dh.data(), grad, dq2.data());
      std::fill(da2.begin(), da2.end(), 0.0);
      for (std::size_t i = 0; i < flat_; ++i) da2[arg2[i]] += dq2[i];
      for (std::size_t i = 0; i < n2; ++i) {
        if (z2[i] <= 0.0) da2[i] = 0.0;
      }
      conv2_.backward(params, q1.data(), da2.data(), grad, dq1.data());
      std::fill(da1.begin(), da1.end(), 0.0);
      for (std::size_t i = 0; i < p1; ++i) da1[arg1[i]] += dq1[i];
      for (std::size_t i = 0; i < n1; ++i) {
        if (z1[i] <= 0.0) da1[i] = 0.0;
      }
      conv1_.backward(params, x, da1.data(), grad, nullptr);
    }
    return stats;
  }

 private:
  Conv conv1_{}, conv2_{};
  Pool pool1_{}, pool2_{};
  Dense fc1_{}, fc2_{};
  std::size_t flat_ = 0;
  std::size_t params_ = 0;
  std::size_t input_ = 0;
};

// Spatial sizes after each conv/pool stage; zero when the input is too small.
struct Cnn2Dims {
  std::size_t h1, w1, h2, w2;
};

Cnn2Dims cnn2_dims(const ModelSpec& spec) {
  auto shrink = [](std::size_t n, std::size_t k) -> std::size_t {
    return n >= k ? (n - k + 1) / 2 : 0;
  };
  const std::size_t h1 = shrink(spec.input_shape[1], spec.kernel_sizes[0]);
  const std::size_t w1 = shrink(spec.input_shape[2], spec.kernel_sizes[0]);
  return {h1, w1, shrink(h1, spec.kernel_sizes[1]), shrink(w1, spec.kernel_sizes[1])};
}

}  // namespace

std::string_view model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kLogisticRegression:
      return "logistic_regression";
    case ModelKind::kMlp:
      return "mlp";
    case ModelKind::kCnn2:
      return "cnn2";
  }
  return "mlp";
}

ModelKind model_kind_from_name(std::string_view s) {
  if (s == "logistic_regression") return ModelKind::kLogisticRegression;
  if (s == "mlp") return ModelKind::kMlp;
  if (s == "cnn2") return ModelKind::kCnn2;
  throw Error(ErrorCode::kInvalidConfig, "unknown model kind '" + std::string(s) + "'",
              {{"model_spec.kind", "must be logistic_regression, mlp or cnn2"}});
}

std::string_view loss_kind_name(LossKind k) {
  return k == LossKind::kMse ? "mse" : "cross_entropy";
}

LossKind loss_kind_from_name(std::string_view s) {
  if (s == "cross_entropy") return LossKind::kCrossEntropy;
  if (s == "mse") return LossKind::kMse;
  throw Error(ErrorCode::kInvalidConfig, "unknown loss '" + std::string(s) + "'",
              {{"loss", "must be cross_entropy or mse"}});
}

std::size_t ModelSpec::input_size() const {
  std::size_t n = 1;
  for (auto d : input_shape) n *= d;
  return input_shape.empty() ? 0 : n;
}

void ModelSpec::validate() const {
  std::map<std::string, std::string> bad;
  if (input_shape.empty() || input_size() == 0) {
    bad["model_spec.input_shape"] = "must be non-empty with positive dimensions";
  }
  if (num_classes < 2) bad["model_spec.num_classes"] = "must be >= 2";
  for (auto h : hidden_sizes) {
    if (h == 0) bad["model_spec.hidden_sizes"] = "widths must be positive";
  }
  if (kind == ModelKind::kCnn2) {
    if (input_shape.size() != 3) {
      bad["model_spec.input_shape"] = "cnn2 expects [channels, height, width]";
    }
    if (channels.size() != 2 || channels[0] == 0 || channels[1] == 0) {
      bad["model_spec.channels"] = "cnn2 needs exactly two positive channel counts";
    }
    if (kernel_sizes.size() != 2 || kernel_sizes[0] == 0 || kernel_sizes[1] == 0) {
      bad["model_spec.kernel_sizes"] = "cnn2 needs exactly two positive kernel sizes";
    }
    if (hidden_sizes.size() != 1) {
      bad["model_spec.hidden_sizes"] = "cnn2 needs exactly one dense hidden width";
    }
    if (bad.empty()) {
      const auto d = cnn2_dims(*this);
      if (d.h2 == 0 || d.w2 == 0) {
        bad["model_spec.input_shape"] = "input too small for the conv/pool stack";
      }
    }
  }
  if (!bad.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "invalid model spec", std::move(bad));
  }
}

LayoutPtr model_layout(const ModelSpec& spec) {
  spec.validate();
  using U = std::uint32_t;
  std::vector<TensorEntry> entries;
  const U in = static_cast<U>(spec.input_size());
  switch (spec.kind) {
    case ModelKind::kLogisticRegression:
      entries.push_back({"linear.weight", {spec.num_classes, in}});
      entries.push_back({"linear.bias", {spec.num_classes}});
      break;
    case ModelKind::kMlp: {
      std::vector<U> widths{in};
      widths.insert(widths.end(), spec.hidden_sizes.begin(), spec.hidden_sizes.end());
      widths.push_back(spec.num_classes);
      for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto name = "fc" + std::to_string(l);
        entries.push_back({name + ".weight", {widths[l + 1], widths[l]}});
        entries.push_back({name + ".bias", {widths[l + 1]}});
      }
      break;
    }
    case ModelKind::kCnn2: {
      const U c = spec.input_shape[0];
      const U c1 = spec.channels[0], c2 = spec.channels[1];
      const U k1 = spec.kernel_sizes[0], k2 = spec.kernel_sizes[1];
      const auto d = cnn2_dims(spec);
      const U flat = static_cast<U>(c2 * d.h2 * d.w2);
      entries.push_back({"conv1.weight", {c1, c, k1, k1}});
      entries.push_back({"conv1.bias", {c1}});
      entries.push_back({"conv2.weight", {c2, c1, k2, k2}});
      entries.push_back({"conv2.bias", {c2}});
      entries.push_back({"fc1.weight", {spec.hidden_sizes[0], flat}});
      entries.push_back({"fc1.bias", {spec.hidden_sizes[0]}});
      entries.push_back({"fc2.weight", {spec.num_classes, spec.hidden_sizes[0]}});
      entries.push_back({"fc2.bias", {spec.num_classes}});
      break;
    }
  }
  return std::make_shared<ModelLayout>(std::move(entries));
}

ParameterVector init_model(const ModelSpec& spec) {
  auto layout = model_layout(spec);
  std::vector<double> values(layout->total_len(), 0.0);
  std::mt19937_64 rng(spec.init_seed);
  std::size_t offset = 0;
  for (const auto& e : layout->entries()) {
    const std::size_t n = e.size();
    if (e.shape.size() >= 2) {
      const std::size_t receptive = n / (e.shape[0] * e.shape[1]);
      fill_glorot(std::span(values).subspan(offset, n), e.shape[1] * receptive,
                  e.shape[0] * receptive, rng);
    }
    offset += n;
  }
  return ParameterVector(std::move(layout), std::move(values));
}

std::unique_ptr<Network> Network::create(const ModelSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ModelKind::kLogisticRegression:
      return std::make_unique<DenseNetwork>(
          std::vector<std::size_t>{spec.input_size(), spec.num_classes});
    case ModelKind::kMlp: {
      std::vector<std::size_t> widths{spec.input_size()};
      widths.insert(widths.end(), spec.hidden_sizes.begin(), spec.hidden_sizes.end());
      widths.push_back(spec.num_classes);
      return std::make_unique<DenseNetwork>(std::move(widths));
    }
    case ModelKind::kCnn2:
      return std::make_unique<Cnn2Network>(spec);
  }
  throw Error(ErrorCode::kInternal, "unhandled model kind");
}

double logits_loss(std::span<const double> logits, int label, LossKind loss,
                   std::span<double> dlogits) {
  const std::size_t k = logits.size();
  if (loss == LossKind::kCrossEntropy) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    const double log_z = mx + std::log(sum);
    if (!dlogits.empty()) {
      for (std::size_t j = 0; j < k; ++j) {
        dlogits[j] = std::exp(logits[j] - log_z) - (static_cast<int>(j) == label ? 1.0 : 0.0);
      }
    }
    return log_z - logits[label];
  }
  double l = 0.0;
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double diff = logits[j] - (static_cast<int>(j) == label ? 1.0 : 0.0);
    l += diff * diff * inv_k;
    if (!dlogits.empty()) dlogits[j] = 2.0 * diff * inv_k;
  }
  return l;
}

}  // namespace fedsilo
