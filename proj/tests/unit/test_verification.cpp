#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "mminr/verification.hpp"

using namespace mminr;

namespace {
ContingencyTable brute_force(const RainField& p, const RainField& o, double thr) {
  ContingencyTable t;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      const bool pe = p.at(y, x) >= thr, oe = o.at(y, x) >= thr;
      if (pe && oe) ++t.tp;
      else if (pe) ++t.fp;
      else if (oe) ++t.fn;
      else ++t.tn;
    }
  return t;
}

RadarSequence seq_of(std::vector<RainField> frames, std::string id = "s") {
  RadarSequence s;
  s.frames = std::move(frames);
  s.id = std::move(id);
  return s;
}
}  // namespace

TEST_SUITE("verification") {
  TEST_CASE("contingency matches brute force, boundary counts as event") {
    for (int k = 0; k < 20; ++k) {
      const auto p = testing::random_field(16, 16, 100 + k, 12.0);
      const auto o = testing::random_field(16, 16, 200 + k, 12.0);
      for (double thr : kDefaultThresholds) CHECK(contingency(p, o, thr) == brute_force(p, o, thr));
    }
    RainField a(1, 1, 0.5f), b(1, 1, 0.5f);
    CHECK(contingency(a, b, 0.5).tp == 1);
  }

  TEST_CASE("simple tables") {
    RainField pred(2, 2, 5.0f), obs(2, 2, 0.0f);
    const auto t = contingency(pred, obs, 1.0);
    CHECK(t.fp == 4);
    CHECK(t.total() == 4);
    const auto perfect = contingency(pred, pred, 1.0);
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);
  }

  TEST_CASE("csi and hss formulas") {
    CHECK(*csi({2, 1, 1, 0}) == 0.5);
    CHECK(*csi({5, 0, 0, 3}) == 1.0);
    CHECK_FALSE(csi({0, 0, 0, 9}).has_value());
    CHECK(*hss({5, 0, 0, 3}) == 1.0);
    CHECK_FALSE(hss({0, 0, 0, 0}).has_value());
    // tp*tn == fn*fp -> no skill
    CHECK(*hss({2, 4, 1, 2}) == 0.0);
  }

  TEST_CASE("hss of an independent checkerboard vs stripes is zero") {
    RainField checker(4, 4), stripes(4, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        checker.at(y, x) = ((x + y) % 2) ? 5.0f : 0.0f;
        stripes.at(y, x) = (y % 2) ? 5.0f : 0.0f;
      }
    const auto t = contingency(checker, stripes, 1.0);
    CHECK(t.tp * t.tn == t.fn * t.fp);
    CHECK(*hss(t) == 0.0);
  }

  TEST_CASE("hss matches the closed form on random pairs") {
    for (int k = 0; k < 10; ++k) {
      const auto t = contingency(testing::random_field(16, 16, k), testing::random_field(16, 16, 50 + k), 5.0);
      const double tp = t.tp, fp = t.fp, fn = t.fn, tn = t.tn;
      const double ref = 2 * (tp * tn - fn * fp) / ((tp + fn) * (fn + tn) + (tp + fp) * (fp + tn));
      CHECK(std::abs(*hss(t) - ref) < 1e-12);
      CHECK(*hss(t) >= -1.0);
      CHECK(*hss(t) <= 1.0);
    }
  }

  TEST_CASE("csi is monotone in true positives") {
    ContingencyTable t{3, 2, 4, 10};
    double prev = *csi(t);
    for (int i = 0; i < 5; ++i) {
      ++t.tp;
      CHECK(*csi(t) >= prev);
      prev = *csi(t);
    }
  }

  TEST_CASE("pooling over partitions equals the whole") {
    const auto p = testing::random_field(8, 8, 1), o = testing::random_field(8, 8, 2);
    RainField p1(4, 8), p2(4, 8), o1(4, 8), o2(4, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        (y < 4 ? p1 : p2).at(y % 4, x) = p.at(y, x);
        (y < 4 ? o1 : o2).at(y % 4, x) = o.at(y, x);
      }
    auto sum = contingency(p1, o1, 2.0);
    sum += contingency(p2, o2, 2.0);
    CHECK(sum == contingency(p, o, 2.0));
  }

  TEST_CASE("permutation invariance") {
    const auto p = testing::random_field(6, 6, 3), o = testing::random_field(6, 6, 4);
    RainField pp = p, oo = o;
    std::vector<int> perm(36);
    std::iota(perm.begin(), perm.end(), 0);
    Rng(7).shuffle(perm.begin(), perm.end());
    for (int i = 0; i < 36; ++i) {
      pp.grid[i] = p.grid[perm[i]];
      oo.grid[i] = o.grid[perm[i]];
    }
    const auto a = evaluate({seq_of({p})}, {seq_of({o})});
    const auto b = evaluate({seq_of({pp})}, {seq_of({oo})});
    CHECK(a.b_mse == doctest::Approx(b.b_mse).epsilon(1e-12));
    CHECK(a.b_mae == doctest::Approx(b.b_mae).epsilon(1e-12));
    for (std::size_t i = 0; i < a.per_threshold.size(); ++i)
      CHECK(a.per_threshold[i].table == b.per_threshold[i].table);
  }

  TEST_CASE("evaluate: perfect forecast and composition") {
    const auto f = testing::random_field(10, 10, 11, 15.0);
    const auto r = evaluate({seq_of({f, f})}, {seq_of({f, f})});
    for (const auto& t : r.per_threshold) CHECK(*t.csi == 1.0);
    CHECK(r.b_mse == 0.0);
    CHECK(r.b_mae == 0.0);

    const auto p = testing::random_field(10, 10, 12), o = testing::random_field(10, 10, 13);
    EvaluateOptions opts;
    opts.thresholds = {2.0};
    const auto one = evaluate({seq_of({p})}, {seq_of({o})}, opts);
    const auto t = contingency(p, o, 2.0);
    CHECK(one.per_threshold[0].table == t);
    CHECK(*one.per_threshold[0].csi == *csi(t));
    CHECK(*one.per_threshold[0].hss == *hss(t));
    CHECK(*one.per_threshold[0].csi_frame_mean == *csi(t));
  }

  TEST_CASE("evaluate: balanced errors in physical space with observation weights") {
    RainField p(1, 2), o(1, 2);
    p.grid = {1.0f, 12.0f};
    o.grid = {0.0f, 10.0f};
    const auto r = evaluate({seq_of({p})}, {seq_of({o})});
    CHECK(r.b_mse == doctest::Approx((1.0 * 1 + 30.0 * 4) / 2));
    CHECK(r.b_mae == doctest::Approx((1.0 * 1 + 30.0 * 2) / 2));
  }

  TEST_CASE("evaluate: per lead time and errors") {
    std::vector<RainField> fr;
    for (int t = 0; t < 9; ++t) fr.push_back(testing::random_field(8, 8, 30 + t));
    std::vector<RainField> ob;
    for (int t = 0; t < 9; ++t) ob.push_back(testing::random_field(8, 8, 60 + t));
    EvaluateOptions opts;
    opts.per_lead_time = true;
    const auto r = evaluate({seq_of(fr)}, {seq_of(ob)}, opts);
    REQUIRE(r.per_lead_time.size() == 9);
    CHECK(r.per_lead_time[0].lead == 1);
    CHECK(r.per_lead_time[4].per_threshold[1].table == contingency(fr[4], ob[4], 2.0));

    CHECK_THROWS_AS(evaluate({seq_of(fr)}, {seq_of(ob), seq_of(ob)}), ShapeError);
    CHECK_THROWS_AS(evaluate({seq_of(fr)}, {seq_of({ob[0]})}), ShapeError);
  }

  TEST_CASE("reports") {
    const auto f = testing::random_field(10, 10, 11, 15.0);
    RainField zero(10, 10);
    const auto r = evaluate({seq_of({zero})}, {seq_of({zero})});
    const auto kv = format_key_values(r);
    CHECK(kv.find("csi@0.5=nan") != std::string::npos);
    const auto table = format_table(evaluate({seq_of({f})}, {seq_of({f})}), "MMINR");
    for (const char* col : {"CSI", "HSS", "B-MSE", "B-MAE", "r>=0.5", "r>=2", "r>=5", "r>=10", "MMINR"})
      CHECK(table.find(col) != std::string::npos);
  }
}
