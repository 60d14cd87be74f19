#include "doctest.h"
#include "helpers.hpp"
#include "mminr/errors.hpp"
#include "mminr/inference.hpp"
#include "mminr/mminr_net.hpp"

using namespace mminr;
using testing::random_tensor;

namespace {

// Emits the last input frame; also logs every input window it sees.
class LastFrameModel final : public FrameModel<double> {
 public:
  explicit LastFrameModel(int n) : n_(n) {}
  int n_in() const override { return n_; }
  int m_out() const override { return 1; }
  Tensor<double> predict(const Tensor<double>& x) const override {
    windows.push_back(x);
    Tensor<double> y(x.batch(), 1, x.height(), x.width());
    for (int b = 0; b < x.batch(); ++b) {
      auto src = x.plane(b, n_ - 1);
      std::copy(src.begin(), src.end(), y.plane(b, 0).begin());
    }
    return y;
  }
  mutable std::vector<Tensor<double>> windows;

 private:
  int n_;
};

// Emits the mean of its window plus one, so every step is distinguishable.
class MeanPlusOne final : public FrameModel<double> {
 public:
  int n_in() const override { return 3; }
  int m_out() const override { return 1; }
  Tensor<double> predict(const Tensor<double>& x) const override {
    Tensor<double> y(1, 1, x.height(), x.width());
    for (std::size_t p = 0; p < y.size(); ++p) {
      double s = 0;
      for (int c = 0; c < 3; ++c) s += x.plane(0, c)[p];
      y.data()[p] = s / 3 + 1.0;
    }
    return y;
  }
};

}  // namespace

TEST_SUITE("inference") {
  TEST_CASE("call counts") {
    auto cfg = ModelConfig::tiny();
    MminrNet<double> mmi(cfg);
    CountingModel<double> c1(mmi);
    const auto x = random_tensor<double>(1, 2, 16, 16, 1);
    CHECK(predict_mmi(c1, x).channels() == 2);
    CHECK(c1.calls() == 1);

    cfg.m_out = 1;
    MminrNet<double> msi(cfg);
    CountingModel<double> c9(msi);
    CHECK(predict_msi_recurrent(c9, x, 9).channels() == 9);
    CHECK(c9.calls() == 9);
    CHECK_THROWS_AS(predict_msi_recurrent(mmi, x, 3), ConfigError);
  }

  TEST_CASE("horizon 1 recurrent equals mmi bitwise on an m=1 model") {
    auto cfg = ModelConfig::tiny();
    cfg.m_out = 1;
    MminrNet<float> net(cfg);
    const auto x = random_tensor<float>(1, 2, 16, 16, 2);
    CHECK(predict_mmi(net, x).values() == predict_msi_recurrent(net, x, 1).values());
  }

  TEST_CASE("identity model is a fixed point of the rollout") {
    LastFrameModel id(4);
    const auto x = random_tensor<double>(1, 4, 5, 5, 3);
    const auto y = predict_msi_recurrent(id, x, 6);
    for (int k = 0; k < 6; ++k) CHECK(std::vector<double>(y.plane(0, k).begin(), y.plane(0, k).end()) ==
                                      std::vector<double>(x.plane(0, 3).begin(), x.plane(0, 3).end()));
  }

  TEST_CASE("rollout window holds the last n frames of inputs ++ predictions") {
    MeanPlusOne model;
    Tensor<double> x(1, 3, 1, 1);
    x.values() = {0.0, 3.0, 6.0};
    const auto y = predict_msi_recurrent(model, x, 4);
    // hand recurrence: 4, then mean(3,6,4)+1, ...
    std::vector<double> seq{0.0, 3.0, 6.0};
    for (int k = 0; k < 4; ++k) {
      const std::size_t n = seq.size();
      seq.push_back((seq[n - 1] + seq[n - 2] + seq[n - 3]) / 3 + 1.0);
      CHECK(y.values()[k] == doctest::Approx(seq.back()).epsilon(1e-14));
    }

    LastFrameModel logger(3);
    Tensor<double> z(1, 3, 1, 1);
    z.values() = {1.0, 2.0, 3.0};
    predict_msi_recurrent(logger, z, 3);
    REQUIRE(logger.windows.size() == 3);
    CHECK(logger.windows[1].values() == std::vector<double>{2.0, 3.0, 3.0});
  }

  TEST_CASE("feedback clamping only touches fed-back frames") {
    MeanPlusOne model;
    Tensor<double> x(1, 3, 1, 1);
    x.values() = {0.5, 0.9, 0.99};
    const auto raw = predict_msi_recurrent(model, x, 3);
    const auto clamped = predict_msi_recurrent(model, x, 3, RolloutOptions{true});
    CHECK(raw.values()[0] == clamped.values()[0]);
    CHECK(raw.values()[0] > normalized_upper_bound());  // emitted frame not clamped
    CHECK(clamped.values()[1] < raw.values()[1]);
  }

  TEST_CASE("persistence") {
    const auto x = random_tensor<double>(1, 5, 4, 4, 4);
    const auto y = predict_persistence(x, 7);
    CHECK(y.channels() == 7);
    for (int k = 0; k < 7; ++k)
      CHECK(std::vector<double>(y.plane(0, k).begin(), y.plane(0, k).end()) ==
            std::vector<double>(x.plane(0, 4).begin(), x.plane(0, 4).end()));
    CHECK(strategy_from_string("msi-recurrent") == Strategy::kMsiRecurrent);
    CHECK(to_string(Strategy::kPersistence) == "persistence");
    CHECK_THROWS(strategy_from_string("beam"));
  }

  TEST_CASE("persistence loses to the exact advection oracle on noise-free data") {
    SyntheticConfig cfg;
    cfg.noise_rate = 0.0;
    cfg.seed = 3;
    const auto seq = generate_synthetic(cfg, 10, 48);
    const auto& last = seq.frames[8];
    const auto& truth = seq.frames[9];
    const auto shifted = advect_bilinear(last.grid, 48, 48, cfg.advection_velocity.first, cfg.advection_velocity.second);
    double e_persist = 0, e_oracle = 0;
    for (std::size_t i = 0; i < truth.grid.size(); ++i) {
      e_persist += std::pow(last.grid[i] - truth.grid[i], 2);
      e_oracle += std::pow(shifted[i] - truth.grid[i], 2);
    }
    CHECK(e_oracle < e_persist);
  }
}
