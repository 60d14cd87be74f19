#include <cmath>
#include <functional>

#include "doctest.h"
#include "helpers.hpp"
#include "mminr/errors.hpp"
#include "mminr/ops.hpp"

using namespace mminr;
using testing::random_tensor;

namespace {

// Checks dL/dx of L = sum(g * f(x)) for a fixed random g.
void check_input_grad(const Tensor<double>& x0, const std::function<Tensor<double>(const Tensor<double>&)>& f,
                      const std::function<Tensor<double>(const Tensor<double>&, const Tensor<double>&)>& back,
                      double tol = 1e-6) {
  const Tensor<double> y = f(x0);
  const auto g = random_tensor<double>(y.batch(), y.channels(), y.height(), y.width(), 77);
  const Tensor<double> dx = back(x0, g);
  Tensor<double> x = x0;
  for (std::size_t i = 0; i < x.size(); i += 5) {
    const double keep = x.data()[i], h = 1e-6;
    x.data()[i] = keep + h;
    const auto up = f(x);
    x.data()[i] = keep - h;
    const auto dn = f(x);
    x.data()[i] = keep;
    double num = 0.0;
    for (std::size_t k = 0; k < up.size(); ++k) num += g.data()[k] * (up.data()[k] - dn.data()[k]);
    num /= 2 * h;
    CHECK(std::abs(num - dx.data()[i]) <= tol * std::max(1.0, std::abs(num)));
  }
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("conv2d against a direct loop") {
    const auto x = random_tensor<double>(2, 3, 5, 6, 1);
    std::vector<double> w(4 * 3 * 3 * 3), b(4);
    Rng rng(2);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const auto y = ops::conv2d<double>(x, w, b, 4, 3);
    REQUIRE(y.shape() == std::array<int, 4>{2, 4, 5, 6});
    for (int n = 0; n < 2; ++n)
      for (int o = 0; o < 4; ++o)
        for (int yy = 0; yy < 5; ++yy)
          for (int xx = 0; xx < 6; ++xx) {
            double s = b[o];
            for (int c = 0; c < 3; ++c)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = yy + ky - 1, ix = xx + kx - 1;
                  if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
                  s += w[((o * 3 + c) * 3 + ky) * 3 + kx] * x.at(n, c, iy, ix);
                }
            CHECK(std::abs(s - y.at(n, o, yy, xx)) < 1e-12);
          }
  }

  TEST_CASE("conv2d gradients") {
    for (int k : {1, 3, 7}) {
      const auto x = random_tensor<double>(1, 2, 8, 8, 3);
      std::vector<double> w(3 * 2 * k * k), b(3, 0.1);
      Rng rng(4);
      for (auto& v : w) v = rng.uniform(-1, 1);
      check_input_grad(
          x, [&](const Tensor<double>& in) { return ops::conv2d<double>(in, w, b, 3, k); },
          [&](const Tensor<double>& in, const Tensor<double>& dy) {
            Tensor<double> dx;
            std::vector<double> dw(w.size()), db(b.size());
            ops::conv2d_backward<double>(in, w, dy, k, &dx, dw, db);
            return dx;
          });
    }
  }

  TEST_CASE("max pool") {
    Tensor<double> x(1, 1, 2, 4);
    x.values() = {1, 5, 2, 0, 3, 4, 8, 7};
    std::vector<std::uint32_t> idx;
    const auto y = ops::max_pool2(x, &idx);
    CHECK(y.values() == std::vector<double>{5, 8});
    Tensor<double> dy(1, 1, 1, 2);
    dy.values() = {1.0, 2.0};
    const auto dx = ops::max_pool2_backward(dy, idx, x.shape());
    CHECK(dx.values() == std::vector<double>{0, 1, 0, 0, 0, 0, 2, 0});
    CHECK_THROWS_AS(ops::max_pool2(Tensor<double>(1, 8, 7, 7)), ShapeError);
  }

  TEST_CASE("upsampling") {
    Tensor<double> c(1, 2, 3, 3, 4.25);
    for (auto mode : {ops::ResampleMode::kNearest, ops::ResampleMode::kBilinear}) {
      const auto u = ops::upsample2(c, mode);
      CHECK(u.shape() == std::array<int, 4>{1, 2, 6, 6});
      for (double v : u.values()) CHECK(v == doctest::Approx(4.25));
      const auto x = random_tensor<double>(1, 2, 4, 5, 9);
      check_input_grad(
          x, [&](const Tensor<double>& in) { return ops::upsample2(in, mode); },
          [&](const Tensor<double>&, const Tensor<double>& dy) { return ops::upsample2_backward(dy, mode); });
    }
  }

  TEST_CASE("group norm statistics and gradient") {
    const auto x = random_tensor<double>(2, 4, 5, 5, 10, -3, 7);
    std::vector<double> gamma{1.0, 0.5, 2.0, 1.5}, beta{0.0, 0.1, -0.2, 0.3};
    std::vector<double> ones(4, 1.0), zeros(4, 0.0);
    const auto y = ops::group_norm<double>(x, 2, ones, zeros, 1e-5, nullptr);
    for (int n = 0; n < 2; ++n)
      for (int g = 0; g < 2; ++g) {
        double mean = 0, var = 0;
        for (int c = 2 * g; c < 2 * g + 2; ++c)
          for (double v : y.plane(n, c)) mean += v;
        mean /= 50;
        for (int c = 2 * g; c < 2 * g + 2; ++c)
          for (double v : y.plane(n, c)) var += (v - mean) * (v - mean);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var / 50 == doctest::Approx(1.0).epsilon(1e-4));
      }
    check_input_grad(
        x, [&](const Tensor<double>& in) { return ops::group_norm<double>(in, 2, gamma, beta, 1e-5, nullptr); },
        [&](const Tensor<double>& in, const Tensor<double>& dy) {
          ops::GroupNormCache<double> cache;
          ops::group_norm<double>(in, 2, gamma, beta, 1e-5, &cache);
          std::vector<double> dg(4), db(4);
          return ops::group_norm_backward<double>(dy, cache, gamma, dg, db);
        });
  }

  TEST_CASE("activations and channel plumbing") {
    CHECK(ops::sigmoid(0.0) == 0.5);
    CHECK(ops::sigmoid(-800.0) >= 0.0);
    CHECK(ops::sigmoid(800.0) <= 1.0);
    Tensor<double> x(1, 1, 1, 3);
    x.values() = {-1.0, 0.0, 2.0};
    CHECK(ops::relu(x).values() == std::vector<double>{0.0, 0.0, 2.0});
    const auto a = random_tensor<double>(1, 2, 3, 3, 1), b = random_tensor<double>(1, 3, 3, 3, 2);
    const auto cat = ops::concat_channels(a, b);
    CHECK(cat.channels() == 5);
    const auto [l, r] = ops::split_channels(cat, 2);
    CHECK(l.values() == a.values());
    CHECK(r.values() == b.values());
  }
}
