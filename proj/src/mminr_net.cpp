#include "mminr/mminr_net.hpp"

#include "mminr/errors.hpp"

namespace mminr {

namespace {

std::string stage_name(int stage) { return "stage" + std::to_string(stage + 1); }

template <typename T>
void accumulate(Tensor<T>& acc, const Tensor<T>& t) {
  if (acc.empty()) {
    acc = t;
    return;
  }
  if (!acc.same_shape(t)) throw ShapeError("gradient shape mismatch during backward");
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += t.data()[i];
}

}  // namespace

template <typename T>
MminrNet<T>::MminrNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& ch = config_.stage_channels;
  const int stages = config_.num_stages();
  for (int i = 0; i < stages; ++i) {
    const int in = i == 0 ? config_.n_in : ch[i - 1];
    ndm_.emplace_back(params_, stage_name(i) + ".ndm", in, ch[i]);
    cbam_.emplace_back(params_, stage_name(i) + ".cbam", ch[i], config_.cbam_reduction,
                       config_.cbam_spatial_kernel);
  }
  up_.resize(stages - 1);
  srm_.resize(stages - 1);
  for (int i = stages - 2; i >= 0; --i) {
    up_[i] = UpBlock<T>(params_, stage_name(i) + ".up", ch[i + 1], ch[i], config_.upsample_mode);
    srm_[i] = SrmBlock<T>(params_, stage_name(i) + ".srm", ch[i], ch[i]);
  }
  head_ = Conv2d<T>(params_, "head", ch[0], config_.m_out, 1);
  initialize(config_.seed);
}

template <typename T>
void MminrNet<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (int i = 0; i < num_stages(); ++i) {
    ndm_[i].initialize(params_, rng);
    cbam_[i].initialize(params_, rng);
  }
  for (int i = num_stages() - 2; i >= 0; --i) {
    up_[i].initialize(params_, rng);
    srm_[i].initialize(params_, rng);
  }
  head_.initialize(params_, rng);
}

template <typename T>
void MminrNet<T>::check_input(const Tensor<T>& input) const {
  if (input.channels() != config_.n_in) {
    throw ShapeError("model expects " + std::to_string(config_.n_in) + " input frames, got " +
                     std::to_string(input.channels()));
  }
  if (input.height() != config_.input_size || input.width() != config_.input_size) {
    throw ShapeError("model expects " + std::to_string(config_.input_size) + "x" +
                     std::to_string(config_.input_size) + " frames, got " +
                     std::to_string(input.height()) + "x" + std::to_string(input.width()));
  }
  if (input.batch() < 1) throw ShapeError("empty input batch");
}

template <typename T>
Tensor<T> MminrNet<T>::forward(const Tensor<T>& input, Trace* trace) const {
  check_input(input);
  const int stages = num_stages();
  if (trace) {
    *trace = Trace{};
    trace->ndm.resize(stages);
    trace->cbam.resize(stages);
    trace->pool_index.resize(stages);
    trace->pool_input_shape.resize(stages);
    trace->up.resize(stages - 1);
    trace->srm.resize(stages - 1);
  }

  std::vector<Tensor<T>> feats(stages);
  for (int i = 0; i < stages; ++i) {
    Tensor<T> in;
    if (i == 0) {
      in = input;
    } else {
      if (trace) trace->pool_input_shape[i] = feats[i - 1].shape();
      in = ops::max_pool2(feats[i - 1], trace ? &trace->pool_index[i] : nullptr);
    }
    auto a = ndm_[i].forward(params_, in, trace ? &trace->ndm[i] : nullptr);
    feats[i] = cbam_[i].forward(params_, a, trace ? &trace->cbam[i] : nullptr);
  }

  Tensor<T> d = feats[stages - 1];
  for (int i = stages - 2; i >= 0; --i) {
    auto u = up_[i].forward(params_, d, trace ? &trace->up[i] : nullptr);
    d = srm_[i].forward(params_, feats[i], u, trace ? &trace->srm[i] : nullptr);
  }
  auto out = head_.forward(params_, d);
  if (trace) trace->head_input = std::move(d);
  return out;
}

template <typename T>
void MminrNet<T>::backward(const Trace& trace, const Tensor<T>& grad_output) {
  const int stages = num_stages();
  if (trace.ndm.size() != static_cast<std::size_t>(stages)) {
    throw Error("backward called with a trace from a different forward pass");
  }
  Tensor<T> dd = head_.backward(params_, trace.head_input, grad_output);
  std::vector<Tensor<T>> dfeat(stages);
  for (int i = 0; i <= stages - 2; ++i) {
    auto [dskip, dup] = srm_[i].backward(params_, trace.srm[i], dd);
    accumulate(dfeat[i], dskip);
    dd = up_[i].backward(params_, trace.up[i], dup);
  }
  accumulate(dfeat[stages - 1], dd);

  for (int i = stages - 1; i >= 0; --i) {
    auto g = cbam_[i].backward(params_, trace.cbam[i], dfeat[i]);
    g = ndm_[i].backward(params_, trace.ndm[i], g);
    if (i > 0) {
      accumulate(dfeat[i - 1],
                 ops::max_pool2_backward(g, trace.pool_index[i], trace.pool_input_shape[i]));
    }
  }
}

template <typename T>
std::vector<Tensor<T>> MminrNet<T>::encode(const Tensor<T>& input) const {
  check_input(input);
  std::vector<Tensor<T>> feats;
  for (int i = 0; i < num_stages(); ++i) {
    const Tensor<T> in = i == 0 ? input : downsample(feats.back());
    feats.push_back(cbam_forward(i, ndm_forward(i, in)));
  }
  return feats;
}

template <typename T>
Tensor<T> MminrNet<T>::ndm_forward(int stage, const Tensor<T>& x) const {
  const int expected = stage == 0 ? config_.n_in : config_.stage_channels.at(stage - 1);
  if (x.channels() != expected) {
    throw ConfigError("stage " + std::to_string(stage + 1) + " NDM expects " +
                      std::to_string(expected) + " channels, got " + std::to_string(x.channels()));
  }
  return ndm_.at(stage).forward(params_, x);
}

template <typename T>
Tensor<T> MminrNet<T>::cbam_forward(int stage, const Tensor<T>& x) const {
  return cbam_.at(stage).forward(params_, x);
}

template <typename T>
Tensor<T> MminrNet<T>::downsample(const Tensor<T>& x) {
  return ops::max_pool2(x);
}

template <typename T>
Tensor<T> MminrNet<T>::upsample(int stage, const Tensor<T>& deeper) const {
  return up_.at(stage).forward(params_, deeper);
}

template <typename T>
Tensor<T> MminrNet<T>::srm_forward(int stage, const Tensor<T>& skip, const Tensor<T>& up) const {
  return srm_.at(stage).forward(params_, skip, up);
}

template class MminrNet<float>;
template class MminrNet<double>;

}  // namespace mminr
