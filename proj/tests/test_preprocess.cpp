#include <cmath>

#include <doctest.h>

#include "g4ap/errors.hpp"
#include "g4ap/preprocess.hpp"
#include "test_util.hpp"

using namespace g4ap;
using namespace g4ap::testing;

TEST_SUITE("preprocess.normalize") {
  TEST_CASE("constant column collapses to zero with sigma = eps") {
    std::vector<double> window(4 * 2);
    for (std::size_t t = 0; t < 4; ++t) {
      window[t * 2 + 0] = 3.5;                         // constant
      window[t * 2 + 1] = static_cast<double>(t) * 2;  // varying
    }
    const NormalizedWindow n = normalize_window(window, 4, 2, 1e-5);
    for (std::size_t t = 0; t < 4; ++t) CHECK(n.at(t, 0) == 0.0);
    CHECK(n.sigma[0] == 1e-5);
    CHECK(n.sigma[1] > 1e-5);
  }

  TEST_CASE("closed-form z-score of a two-point column") {
    // Column [0, 2]: mu = 1, population sigma = 1.
    const NormalizedWindow n = normalize_window({0, 2}, 2, 1, 1e-9);
    CHECK(n.mu[0] == 1.0);
    CHECK(n.sigma[0] == doctest::Approx(1.0 + 1e-9).epsilon(1e-15));
    CHECK(n.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(n.at(1, 0) == doctest::Approx(1.0).epsilon(1e-8));
  }

  TEST_CASE("column statistics: mean ~0, population std ~1") {
    Rng rng(9);
    const std::size_t lookback = 36, d = 10;
    const auto window = random_values(lookback * d, rng, 4.0);
    const NormalizedWindow n = normalize_window(window, lookback, d);
    for (std::size_t v = 0; v < d; ++v) {
      double mean = 0.0;
      for (std::size_t t = 0; t < lookback; ++t) mean += n.at(t, v);
      mean /= lookback;
      CHECK(std::abs(mean) < 1e-9);
      double var = 0.0;
      for (std::size_t t = 0; t < lookback; ++t) var += n.at(t, v) * n.at(t, v);
      var /= lookback;
      CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-4);  // eps-shifted divisor
    }
  }

  TEST_CASE("round trip restores the original window") {
    Rng rng(10);
    const auto window = random_values(36 * 10, rng, 7.0);
    const NormalizedWindow n = normalize_window(window, 36, 10);
    for (std::size_t t = 0; t < 36; ++t)
      for (std::size_t v = 0; v < 10; ++v) {
        const double restored = n.at(t, v) * n.sigma[v] + n.mu[v];
        CHECK(restored == doctest::Approx(window[t * 10 + v]).epsilon(1e-9));
      }
  }

  TEST_CASE("statistics come only from the lookback window") {
    Rng rng(12);
    auto window = random_values(36 * 10, rng);
    const NormalizedWindow before = normalize_window(window, 36, 10);
    // Anything outside the window (e.g. future targets) cannot matter: the
    // API only sees the window, so perturb a copy's tail row and compare a
    // shortened view instead.
    auto window2 = window;
    window2.resize(35 * 10);
    const NormalizedWindow shorter = normalize_window(window2, 35, 10);
    CHECK(before.mu != shorter.mu);  // the 36th row genuinely contributed
  }

  TEST_CASE("non-finite input is a numeric error") {
    std::vector<double> w(4, 1.0);
    w[2] = std::nan("");
    CHECK_THROWS_AS(normalize_window(w, 2, 2), NumericError);
  }
}

TEST_SUITE("preprocess.denormalize") {
  TEST_CASE("zeros map back to mu") {
    NormalizedWindow stats;
    stats.mu = {10, 0};
    stats.sigma = {2, 1};
    stats.pm25_channel = 0;
    const auto out = denormalize_pm25({0, 0, 0}, stats);
    for (double v : out) CHECK(v == 10.0);
  }

  TEST_CASE("affine arithmetic") {
    NormalizedWindow stats;
    stats.mu = {10};
    stats.sigma = {2};
    const auto out = denormalize_pm25({1, -1}, stats);
    CHECK(out[0] == 12.0);
    CHECK(out[1] == 8.0);
  }

  TEST_CASE("normalize/denormalize composition is identity") {
    Rng rng(14);
    const auto window = random_values(36 * 10, rng, 5.0);
    const NormalizedWindow stats = normalize_window(window, 36, 10);
    const auto target = random_values(24, rng, 5.0);
    const auto back = denormalize_pm25(normalize_pm25(target, stats), stats);
    for (std::size_t i = 0; i < target.size(); ++i)
      CHECK(back[i] == doctest::Approx(target[i]).epsilon(1e-9));
  }
}

TEST_SUITE("preprocess.patchify") {
  TEST_CASE("token counts from the floor formula") {
    CHECK(patch_count(36, 24, 12) == 2);
    CHECK(patch_count(36, 24, 4) == 4);
    CHECK(patch_count(36, 36, 5) == 1);  // T == P regardless of stride
    CHECK_THROWS_AS(patch_count(36, 48, 4), ContractError);
    CHECK_THROWS_AS(patch_count(36, 24, 0), ContractError);
  }

  TEST_CASE("patch-count law vs brute-force start enumeration, T<=128") {
    std::size_t mismatches = 0;
    for (std::size_t t = 1; t <= 128; ++t) {
      for (std::size_t p = 1; p <= t; ++p) {
        for (std::size_t s = 1; s <= t; ++s) {
          std::size_t brute = 0;
          for (std::size_t start = 0; start + p <= t; start += s) ++brute;
          if (patch_count(t, p, s) != brute) ++mismatches;
        }
      }
    }
    CHECK(mismatches == 0);
  }

  TEST_CASE("T=36, P=24, s=4 patches start at rows 0,4,8,12") {
    Rng rng(4);
    const auto raw = random_values(36 * 10, rng);
    const NormalizedWindow n = normalize_window(raw, 36, 10);
    const PatchSequence seq = patchify(n, 24, 4);
    REQUIRE(seq.num_patches == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t start = i * 4;
      for (std::size_t t = 0; t < 24; ++t)
        for (std::size_t v = 0; v < 10; ++v)
          CHECK(seq.tokens_raw[i * 240 + t * 10 + v] == n.at(start + t, v));
    }
  }

  TEST_CASE("un-flattening a patch reproduces the exact sub-window") {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t t = 2 + rng.below(40);
      const std::size_t p = 1 + rng.below(t);
      const std::size_t s = 1 + rng.below(t);
      const std::size_t d = 1 + rng.below(6);
      const auto raw = random_values(t * d, rng);
      const NormalizedWindow n = normalize_window(raw, t, d);
      const PatchSequence seq = patchify(n, p, s);
      CHECK(seq.num_patches == patch_count(t, p, s));
      for (std::size_t i = 0; i < seq.num_patches; ++i)
        for (std::size_t row = 0; row < p; ++row)
          for (std::size_t v = 0; v < d; ++v)
            CHECK(seq.tokens_raw[(i * p + row) * d + v] == n.at(i * s + row, v));
    }
  }
}

TEST_SUITE("preprocess.project") {
  TEST_CASE("paper dimensions: flattened width 240 projects to [N x 768]") {
    Rng rng(6);
    const auto raw = random_values(36 * 10, rng);
    const NormalizedWindow n = normalize_window(raw, 36, 10);
    const PatchSequence seq = patchify(n, 24, 12);
    CHECK(seq.patch_len * seq.num_vars == 240);
    Tensor w = Tensor::gaussian({240, 768}, 0.02, rng);
    Tensor out = project(seq, w);
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 768);
  }

  TEST_CASE("zero weight and bias give zero tokens") {
    Rng rng(6);
    const NormalizedWindow n = normalize_window(random_values(8 * 2, rng), 8, 2);
    const PatchSequence seq = patchify(n, 4, 2);
    Tensor out = project(seq, Tensor::zeros({8, 3}), Tensor::zeros({3}));
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);
  }

  TEST_CASE("all-ones column reduces a single patch to its sum") {
    Rng rng(16);
    const auto raw = random_values(6 * 2, rng);
    const NormalizedWindow n = normalize_window(raw, 6, 2);
    const PatchSequence seq = patchify(n, 6, 1);
    REQUIRE(seq.num_patches == 1);
    Tensor out = project(seq, Tensor::full({12, 1}, 1.0));
    double sum = 0.0;
    for (double v : seq.tokens_raw) sum += v;
    CHECK(out.at(0, 0) == doctest::Approx(sum).epsilon(1e-12));
  }
}
