#include "mminr/layers.hpp"

#include <cmath>
#include <numeric>

#include "mminr/errors.hpp"

namespace mminr {

namespace {

template <typename T>
void fill_uniform(std::span<T> values, double bound, Rng& rng) {
  for (T& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, int in_channels, int out_channels,
                  int kernel)
    : in_(in_channels), out_(out_channels), kernel_(kernel) {
  weight_ = store.add(name + ".weight", {out_channels, in_channels, kernel, kernel});
  bias_ = store.add(name + ".bias", {out_channels});
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const ParamStore<T>& store, const Tensor<T>& x) const {
  if (x.channels() != in_) {
    throw ShapeError("convolution expects " + std::to_string(in_) + " input channels, got " +
                     std::to_string(x.channels()));
  }
  return ops::conv2d<T>(x, store.value(weight_), store.value(bias_), out_, kernel_);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(ParamStore<T>& store, const Tensor<T>& x, const Tensor<T>& dy,
                              bool need_input_grad) const {
  Tensor<T> dx;
  ops::conv2d_backward<T>(x, std::as_const(store).value(weight_), dy, kernel_,
                          need_input_grad ? &dx : nullptr, store.grad(weight_), store.grad(bias_));
  return dx;
}

template <typename T>
void Conv2d<T>::initialize(ParamStore<T>& store, Rng& rng) const {
  fill_uniform(store.value(weight_), 1.0 / std::sqrt(static_cast<double>(in_ * kernel_ * kernel_)), rng);
  std::fill(store[bias_].value.begin(), store[bias_].value.end(), T(0));
}

// ---------------------------------------------------------------- NDM

int norm_groups(int channels) { return std::gcd(channels, 8); }

template <typename T>
NdmBlock<T>::NdmBlock(ParamStore<T>& store, const std::string& name, int in_channels,
                      int out_channels)
    : conv1_(store, name + ".conv1", in_channels, out_channels, 3),
      conv2_(store, name + ".conv2", out_channels, out_channels, 3),
      groups_(norm_groups(out_channels)) {
  gamma1_ = store.add(name + ".norm1.gamma", {out_channels});
  beta1_ = store.add(name + ".norm1.beta", {out_channels});
  gamma2_ = store.add(name + ".norm2.gamma", {out_channels});
  beta2_ = store.add(name + ".norm2.beta", {out_channels});
}

template <typename T>
Tensor<T> NdmBlock<T>::forward(const ParamStore<T>& store, const Tensor<T>& x, Trace* trace) const {
  constexpr T eps = T(1e-5);
  auto a = conv1_.forward(store, x);
  a = ops::group_norm<T>(a, groups_, store.value(gamma1_), store.value(beta1_), eps,
                         trace ? &trace->norm1 : nullptr);
  auto r1 = ops::relu(a);
  auto b = conv2_.forward(store, r1);
  b = ops::group_norm<T>(b, groups_, store.value(gamma2_), store.value(beta2_), eps,
                         trace ? &trace->norm2 : nullptr);
  auto out = ops::relu(b);
  if (trace) {
    trace->input = x;
    trace->act1 = std::move(r1);
    trace->output = out;
  }
  return out;
}

template <typename T>
Tensor<T> NdmBlock<T>::backward(ParamStore<T>& store, const Trace& trace, const Tensor<T>& dy) const {
  auto d = ops::relu_backward(dy, trace.output);
  d = ops::group_norm_backward<T>(d, trace.norm2, std::as_const(store).value(gamma2_),
                                  store.grad(gamma2_), store.grad(beta2_));
  d = conv2_.backward(store, trace.act1, d);
  d = ops::relu_backward(d, trace.act1);
  d = ops::group_norm_backward<T>(d, trace.norm1, std::as_const(store).value(gamma1_),
                                  store.grad(gamma1_), store.grad(beta1_));
  return conv1_.backward(store, trace.input, d);
}

template <typename T>
void NdmBlock<T>::initialize(ParamStore<T>& store, Rng& rng) const {
  conv1_.initialize(store, rng);
  conv2_.initialize(store, rng);
  for (auto id : {gamma1_, gamma2_}) std::fill(store[id].value.begin(), store[id].value.end(), T(1));
  for (auto id : {beta1_, beta2_}) std::fill(store[id].value.begin(), store[id].value.end(), T(0));
}

// ---------------------------------------------------------------- CBAM

template <typename T>
CbamBlock<T>::CbamBlock(ParamStore<T>& store, const std::string& name, int channels, int reduction,
                        int spatial_kernel)
    : channels_(channels) {
  if (reduction < 1 || channels < reduction) {
    throw ConfigError("CBAM needs at least " + std::to_string(reduction) + " channels, got " +
                      std::to_string(channels));
  }
  hidden_ = channels / reduction;
  fc1_w_ = store.add(name + ".fc1.weight", {hidden_, channels});
  fc1_b_ = store.add(name + ".fc1.bias", {hidden_});
  fc2_w_ = store.add(name + ".fc2.weight", {channels, hidden_});
  fc2_b_ = store.add(name + ".fc2.bias", {channels});
  spatial_ = Conv2d<T>(store, name + ".spatial", 2, 1, spatial_kernel);
}

template <typename T>
void CbamBlock<T>::mlp(const ParamStore<T>& store, const T* in, T* hidden, T* out) const {
  auto w1 = store.value(fc1_w_);
  auto b1 = store.value(fc1_b_);
  auto w2 = store.value(fc2_w_);
  auto b2 = store.value(fc2_b_);
  for (int j = 0; j < hidden_; ++j) {
    T s = b1[j];
    for (int c = 0; c < channels_; ++c) s += w1[static_cast<std::size_t>(j) * channels_ + c] * in[c];
    hidden[j] = s > T(0) ? s : T(0);
  }
  for (int c = 0; c < channels_; ++c) {
    T s = b2[c];
    for (int j = 0; j < hidden_; ++j) s += w2[static_cast<std::size_t>(c) * hidden_ + j] * hidden[j];
    out[c] = s;
  }
}

template <typename T>
Tensor<T> CbamBlock<T>::forward(const ParamStore<T>& store, const Tensor<T>& x, Trace* trace) const {
  if (x.channels() != channels_) {
    throw ShapeError("CBAM expects " + std::to_string(channels_) + " channels, got " +
                     std::to_string(x.channels()));
  }
  const int batch = x.batch();
  const int c = channels_;
  const std::size_t plane = x.plane_size();

  std::vector<T> avg(static_cast<std::size_t>(batch) * c), mx(avg.size());
  std::vector<std::uint32_t> mx_idx(avg.size());
  std::vector<T> ha(static_cast<std::size_t>(batch) * hidden_), hm(ha.size());
  std::vector<T> gate(avg.size());
  std::vector<T> za(c), zm(c);

  Tensor<T> refined(batch, c, x.height(), x.width());
  for (int n = 0; n < batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      auto p = x.plane(n, ch);
      const std::size_t base = (static_cast<std::size_t>(n) * c + ch) * plane;
      T sum = 0;
      std::size_t best = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        sum += p[i];
        if (p[i] > p[best]) best = i;
      }
      avg[n * c + ch] = sum / static_cast<T>(plane);
      mx[n * c + ch] = p[best];
      mx_idx[n * c + ch] = static_cast<std::uint32_t>(base + best);
    }
    mlp(store, &avg[n * c], &ha[n * hidden_], za.data());
    mlp(store, &mx[n * c], &hm[n * hidden_], zm.data());
    for (int ch = 0; ch < c; ++ch) {
      const T g = ops::sigmoid(za[ch] + zm[ch]);
      gate[n * c + ch] = g;
      auto src = x.plane(n, ch);
      auto dst = refined.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * g;
    }
  }

  Tensor<T> pooled(batch, 2, x.height(), x.width());
  std::vector<std::uint32_t> pooled_arg(static_cast<std::size_t>(batch) * plane);
  for (int n = 0; n < batch; ++n) {
    auto mean_map = pooled.plane(n, 0);
    auto max_map = pooled.plane(n, 1);
    for (std::size_t i = 0; i < plane; ++i) {
      T sum = 0;
      int best = 0;
      T best_v = refined.plane(n, 0)[i];
      for (int ch = 0; ch < c; ++ch) {
        const T v = refined.plane(n, ch)[i];
        sum += v;
        if (v > best_v) {
          best_v = v;
          best = ch;
        }
      }
      mean_map[i] = sum / static_cast<T>(c);
      max_map[i] = best_v;
      pooled_arg[n * plane + i] = static_cast<std::uint32_t>(best);
    }
  }

  Tensor<T> sgate = ops::sigmoid(spatial_.forward(store, pooled));
  Tensor<T> out(batch, c, x.height(), x.width());
  for (int n = 0; n < batch; ++n) {
    auto s = sgate.plane(n, 0);
    for (int ch = 0; ch < c; ++ch) {
      auto src = refined.plane(n, ch);
      auto dst = out.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * s[i];
    }
  }

  if (trace) {
    trace->input = x;
    trace->avg = std::move(avg);
    trace->max = std::move(mx);
    trace->max_index = std::move(mx_idx);
    trace->hidden_avg = std::move(ha);
    trace->hidden_max = std::move(hm);
    trace->channel_gate = std::move(gate);
    trace->refined = std::move(refined);
    trace->pooled = std::move(pooled);
    trace->pooled_argmax = std::move(pooled_arg);
    trace->spatial_gate = std::move(sgate);
  }
  return out;
}

template <typename T>
Tensor<T> CbamBlock<T>::backward(ParamStore<T>& store, const Trace& trace, const Tensor<T>& dy) const {
  const auto& x = trace.input;
  const int batch = x.batch();
  const int c = channels_;
  const std::size_t plane = x.plane_size();

  // out = refined * spatial_gate
  Tensor<T> d_refined(batch, c, x.height(), x.width());
  Tensor<T> d_spre(batch, 1, x.height(), x.width());
  for (int n = 0; n < batch; ++n) {
    auto s = trace.spatial_gate.plane(n, 0);
    auto ds = d_spre.plane(n, 0);
    for (int ch = 0; ch < c; ++ch) {
      auto g = dy.plane(n, ch);
      auto r = trace.refined.plane(n, ch);
      auto dr = d_refined.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) {
        dr[i] = g[i] * s[i];
        ds[i] += g[i] * r[i];
      }
    }
    for (std::size_t i = 0; i < plane; ++i) ds[i] *= s[i] * (T(1) - s[i]);
  }

  Tensor<T> d_pooled = spatial_.backward(store, trace.pooled, d_spre);
  for (int n = 0; n < batch; ++n) {
    auto dmean = d_pooled.plane(n, 0);
    auto dmax = d_pooled.plane(n, 1);
    for (std::size_t i = 0; i < plane; ++i) {
      const T share = dmean[i] / static_cast<T>(c);
      for (int ch = 0; ch < c; ++ch) d_refined.plane(n, ch)[i] += share;
      d_refined.plane(n, static_cast<int>(trace.pooled_argmax[n * plane + i]))[i] += dmax[i];
    }
  }

  // refined = x * channel_gate
  Tensor<T> dx(batch, c, x.height(), x.width());
  auto w1 = std::as_const(store).value(fc1_w_);
  auto w2 = std::as_const(store).value(fc2_w_);
  auto gw1 = store.grad(fc1_w_);
  auto gb1 = store.grad(fc1_b_);
  auto gw2 = store.grad(fc2_w_);
  auto gb2 = store.grad(fc2_b_);
  std::vector<T> dz(c), dh(hidden_), dv(c);

  for (int n = 0; n < batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const T g = trace.channel_gate[n * c + ch];
      auto dr = d_refined.plane(n, ch);
      auto xs = x.plane(n, ch);
      auto dxs = dx.plane(n, ch);
      T dgate = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        dxs[i] = dr[i] * g;
        dgate += dr[i] * xs[i];
      }
      dz[ch] = dgate * g * (T(1) - g);
    }
    // Both descriptor branches share the MLP and receive the same dz.
    for (int branch = 0; branch < 2; ++branch) {
      const T* v = branch == 0 ? &trace.avg[n * c] : &trace.max[n * c];
      const T* h = branch == 0 ? &trace.hidden_avg[n * hidden_] : &trace.hidden_max[n * hidden_];
      for (int ch = 0; ch < c; ++ch) {
        gb2[ch] += dz[ch];
        for (int j = 0; j < hidden_; ++j) gw2[static_cast<std::size_t>(ch) * hidden_ + j] += dz[ch] * h[j];
      }
      for (int j = 0; j < hidden_; ++j) {
        T s = 0;
        for (int ch = 0; ch < c; ++ch) s += w2[static_cast<std::size_t>(ch) * hidden_ + j] * dz[ch];
        dh[j] = h[j] > T(0) ? s : T(0);
        gb1[j] += dh[j];
        for (int ch = 0; ch < c; ++ch) gw1[static_cast<std::size_t>(j) * c + ch] += dh[j] * v[ch];
      }
      for (int ch = 0; ch < c; ++ch) {
        T s = 0;
        for (int j = 0; j < hidden_; ++j) s += w1[static_cast<std::size_t>(j) * c + ch] * dh[j];
        dv[ch] = s;
      }
      for (int ch = 0; ch < c; ++ch) {
        if (branch == 0) {
          const T share = dv[ch] / static_cast<T>(plane);
          for (T& d : dx.plane(n, ch)) d += share;
        } else {
          dx.data()[trace.max_index[n * c + ch]] += dv[ch];
        }
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<T> CbamBlock<T>::channel_gate(const ParamStore<T>& store, const Tensor<T>& x) const {
  Trace trace;
  forward(store, x, &trace);
  return trace.channel_gate;
}

template <typename T>
void CbamBlock<T>::initialize(ParamStore<T>& store, Rng& rng) const {
  fill_uniform(store.value(fc1_w_), 1.0 / std::sqrt(static_cast<double>(channels_)), rng);
  fill_uniform(store.value(fc2_w_), 1.0 / std::sqrt(static_cast<double>(hidden_)), rng);
  for (auto id : {fc1_b_, fc2_b_}) std::fill(store[id].value.begin(), store[id].value.end(), T(0));
  spatial_.initialize(store, rng);
}

// ---------------------------------------------------------------- SRM

template <typename T>
SrmBlock<T>::SrmBlock(ParamStore<T>& store, const std::string& name, int skip_channels,
                      int up_channels)
    : skip_channels_(skip_channels),
      up_channels_(up_channels),
      boost_(store, name + ".boost", skip_channels + up_channels, skip_channels, 3),
      fusion_(store, name + ".fusion", skip_channels + up_channels, skip_channels, 3),
      weaken_(store, name + ".weaken", skip_channels + up_channels, skip_channels, 3) {}

template <typename T>
std::vector<T> SrmBlock<T>::stacked(const ParamStore<T>& store, bool bias) const {
  std::vector<T> out;
  for (const auto* conv : {&boost_, &fusion_, &weaken_}) {
    auto v = store.value(bias ? conv->bias_id() : conv->weight_id());
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

template <typename T>
Tensor<T> SrmBlock<T>::forward(const ParamStore<T>& store, const Tensor<T>& skip, const Tensor<T>& up,
                               Trace* trace) const {
  if (skip.height() != up.height() || skip.width() != up.width() || skip.batch() != up.batch()) {
    throw ShapeError("SRM inputs disagree spatially: " + shape_string(skip.shape()) + " vs " +
                     shape_string(up.shape()));
  }
  if (skip.channels() != skip_channels_ || up.channels() != up_channels_) {
    throw ShapeError("SRM channel mismatch");
  }
  auto joined = ops::concat_channels(skip, up);
  const auto weights = stacked(store, false);
  const auto biases = stacked(store, true);
  auto all = ops::conv2d<T>(joined, weights, biases, 3 * skip_channels_, 3);

  const int c = skip_channels_;
  Tensor<T> out(skip.batch(), c, skip.height(), skip.width());
  Tensor<T> fusion, gate;
  if (trace) {
    fusion = Tensor<T>(skip.batch(), c, skip.height(), skip.width());
    gate = Tensor<T>(skip.batch(), c, skip.height(), skip.width());
  }
  for (int n = 0; n < skip.batch(); ++n) {
    for (int ch = 0; ch < c; ++ch) {
      auto b = all.plane(n, ch);
      auto f = all.plane(n, c + ch);
      auto w = all.plane(n, 2 * c + ch);
      auto o = out.plane(n, ch);
      for (std::size_t i = 0; i < o.size(); ++i) {
        const T g = ops::sigmoid(w[i]);
        o[i] = b[i] + g * f[i];
        if (trace) {
          fusion.plane(n, ch)[i] = f[i];
          gate.plane(n, ch)[i] = g;
        }
      }
    }
  }
  if (trace) {
    trace->joined = std::move(joined);
    trace->fusion = std::move(fusion);
    trace->gate = std::move(gate);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> SrmBlock<T>::backward(ParamStore<T>& store, const Trace& trace,
                                                      const Tensor<T>& dy) const {
  const int c = skip_channels_;
  Tensor<T> dall(dy.batch(), 3 * c, dy.height(), dy.width());
  for (int n = 0; n < dy.batch(); ++n) {
    for (int ch = 0; ch < c; ++ch) {
      auto g = dy.plane(n, ch);
      auto f = trace.fusion.plane(n, ch);
      auto s = trace.gate.plane(n, ch);
      auto db = dall.plane(n, ch);
      auto df = dall.plane(n, c + ch);
      auto dw = dall.plane(n, 2 * c + ch);
      for (std::size_t i = 0; i < g.size(); ++i) {
        db[i] = g[i];
        df[i] = g[i] * s[i];
        dw[i] = g[i] * f[i] * s[i] * (T(1) - s[i]);
      }
    }
  }
  const auto weights = stacked(store, false);
  std::vector<T> dweights(weights.size(), T(0));
  std::vector<T> dbiases(static_cast<std::size_t>(3) * c, T(0));
  Tensor<T> djoined;
  ops::conv2d_backward<T>(trace.joined, weights, dall, 3, &djoined, dweights, dbiases);

  std::size_t woff = 0;
  std::size_t boff = 0;
  for (const auto* conv : {&boost_, &fusion_, &weaken_}) {
    auto gw = store.grad(conv->weight_id());
    auto gb = store.grad(conv->bias_id());
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dweights[woff + i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += dbiases[boff + i];
    woff += gw.size();
    boff += gb.size();
  }
  return ops::split_channels(djoined, skip_channels_);
}

template <typename T>
Tensor<T> SrmBlock<T>::gate(const ParamStore<T>& store, const Tensor<T>& skip, const Tensor<T>& up) const {
  Trace trace;
  forward(store, skip, up, &trace);
  return trace.gate;
}

template <typename T>
void SrmBlock<T>::initialize(ParamStore<T>& store, Rng& rng) const {
  boost_.initialize(store, rng);
  fusion_.initialize(store, rng);
  weaken_.initialize(store, rng);
}

// ---------------------------------------------------------------- Upsample

template <typename T>
UpBlock<T>::UpBlock(ParamStore<T>& store, const std::string& name, int in_channels, int out_channels,
                    ops::ResampleMode mode)
    : mode_(mode), projected_(in_channels != out_channels) {
  if (projected_) proj_ = Conv2d<T>(store, name + ".proj", in_channels, out_channels, 3);
}

template <typename T>
Tensor<T> UpBlock<T>::forward(const ParamStore<T>& store, const Tensor<T>& x, Trace* trace) const {
  auto r = ops::upsample2(x, mode_);
  if (!projected_) return r;
  auto out = proj_.forward(store, r);
  if (trace) trace->resampled = std::move(r);
  return out;
}

template <typename T>
Tensor<T> UpBlock<T>::backward(ParamStore<T>& store, const Trace& trace, const Tensor<T>& dy) const {
  if (!projected_) return ops::upsample2_backward(dy, mode_);
  return ops::upsample2_backward(proj_.backward(store, trace.resampled, dy), mode_);
}

template <typename T>
void UpBlock<T>::initialize(ParamStore<T>& store, Rng& rng) const {
  if (projected_) proj_.initialize(store, rng);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class NdmBlock<float>;
template class NdmBlock<double>;
template class CbamBlock<float>;
template class CbamBlock<double>;
template class SrmBlock<float>;
template class SrmBlock<double>;
template class UpBlock<float>;
template class UpBlock<double>;

}  // namespace mminr
