#include <cmath>

#include <doctest.h>

#include "g4ap/errors.hpp"
#include "g4ap/tensor.hpp"
#include "test_util.hpp"

using namespace g4ap;
using namespace g4ap::testing;

TEST_SUITE("tensor.basics") {
  TEST_CASE("shape and data invariants") {
    Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);
    CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor::zeros({0, 2}), DimensionError);
  }

  TEST_CASE("requires_grad=false tensors never accumulate gradient") {
    Tensor frozen = Tensor::from_values({2}, {1, 2});
    Tensor live = Tensor::from_values({2}, {3, 4}).set_requires_grad(true);
    ComputeTape tape;
    {
      TapeScope scope(tape);
      Tensor loss = sum_all(mul(frozen, live));
      tape.backward(loss);
    }
    CHECK(live.has_grad());
    CHECK_FALSE(frozen.has_grad());
    CHECK(live.grad_at(0) == 1.0);
    CHECK(live.grad_at(1) == 2.0);
  }

  TEST_CASE("f32 tensors hold exactly float-representable values") {
    Tensor t = Tensor::from_values({2}, {0.1, 0.3}, DType::f32);
    CHECK(t.at(0) == static_cast<double>(static_cast<float>(0.1)));
    Tensor sum = add(t, t);
    CHECK(sum.at(1) == static_cast<double>(static_cast<float>(t.at(1) + t.at(1))));
    CHECK_THROWS_AS(add(t, Tensor::from_values({2}, {1, 2})), ContractError);
  }
}

TEST_SUITE("tensor.matmul") {
  TEST_CASE("identity case") {
    Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor c = matmul(a, eye);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c.at(i) == a.at(i));
  }

  TEST_CASE("2x2 product matches the naive oracle") {
    const std::vector<double> av{1, 2, 3, 4}, bv{5, 6, 7, 8};
    const auto expect = naive_matmul(av, bv, 2, 2, 2);
    CHECK(expect == std::vector<double>{19, 22, 43, 50});
    Tensor c = matmul(Tensor::from_values({2, 2}, av), Tensor::from_values({2, 2}, bv));
    for (std::size_t i = 0; i < 4; ++i) CHECK(c.at(i) == expect[i]);
  }

  TEST_CASE("zero matrix annihilates") {
    Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor z = Tensor::zeros({3, 2});
    Tensor c = matmul(a, z);
    for (std::size_t i = 0; i < c.numel(); ++i) CHECK(c.at(i) == 0.0);
  }

  TEST_CASE("random shapes match the oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
      const auto av = random_values(m * k, rng);
      const auto bv = random_values(k * n, rng);
      const auto expect = naive_matmul(av, bv, m, k, n);
      Tensor c = matmul(Tensor::from_values({m, k}, av), Tensor::from_values({k, n}, bv));
      for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(c.at(i) == doctest::Approx(expect[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("shape mismatch names both operands") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
  }
}

TEST_SUITE("tensor.elementwise") {
  TEST_CASE("additive identity") {
    Tensor out = add(Tensor::from_values({2}, {1, 2}), Tensor::from_values({2}, {0, 0}));
    CHECK(out.at(0) == 1.0);
    CHECK(out.at(1) == 2.0);
  }

  TEST_CASE("scale is linear") {
    Tensor out = scale(Tensor::from_values({2}, {1, -2}), 0.5);
    CHECK(out.at(0) == 0.5);
    CHECK(out.at(1) == -1.0);
  }

  TEST_CASE("pointwise multiply matches hand oracle") {
    Tensor out = mul(Tensor::from_values({2}, {2, 3}), Tensor::from_values({2}, {4, 5}));
    CHECK(out.at(0) == 8.0);
    CHECK(out.at(1) == 15.0);
  }

  TEST_CASE("row-vector broadcast over matrix rows") {
    Tensor m = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor v = Tensor::from_values({3}, {10, 20, 30});
    Tensor out = add(m, v);
    CHECK(out.at(0, 0) == 11.0);
    CHECK(out.at(1, 2) == 36.0);
    CHECK_THROWS_AS(add(m, Tensor::from_values({2}, {1, 2})), DimensionError);
  }

  TEST_CASE("scalar overloads") {
    Tensor out = sub(Tensor::from_values({2}, {5, 7}), 2.0);
    CHECK(out.at(0) == 3.0);
    CHECK(out.at(1) == 5.0);
  }
}

TEST_SUITE("tensor.softmax") {
  TEST_CASE("symmetry") {
    Tensor out = softmax_rows(Tensor::from_values({1, 2}, {0, 0}));
    CHECK(out.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(out.at(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
  }

  TEST_CASE("shift invariance avoids overflow") {
    Tensor out = softmax_rows(Tensor::from_values({1, 2}, {1000, 1000}));
    CHECK(out.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  }

  TEST_CASE("closed form ln2") {
    Tensor out = softmax_rows(Tensor::from_values({1, 2}, {std::log(2.0), 0.0}));
    CHECK(out.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(out.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }

  TEST_CASE("rows sum to one within 1e-12 and shifts cancel") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t m = 1 + rng.below(8), n = 1 + rng.below(8);
      const auto v = random_values(m * n, rng, 3.0);
      Tensor out = softmax_rows(Tensor::from_values({m, n}, v));
      auto shifted = v;
      const double c = rng.normal();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) shifted[i * n + j] += c;
      Tensor out2 = softmax_rows(Tensor::from_values({m, n}, shifted));
      for (std::size_t i = 0; i < m; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += out.at(i, j);
        CHECK(std::abs(row - 1.0) < 1e-12);
      }
      for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out.at(i) - out2.at(i)) < 1e-12);
    }
  }

  TEST_CASE("NaN input raises a numeric error") {
    Tensor bad = Tensor::from_values({1, 2}, {std::nan(""), 0.0});
    CHECK_THROWS_AS(softmax_rows(bad), NumericError);
  }
}

TEST_SUITE("tensor.layer_norm") {
  TEST_CASE("constant row collapses to zero") {
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    Tensor out = layer_norm(Tensor::full({2, 3}, 5.0), gamma, beta, 1e-5);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);
  }

  TEST_CASE("already-normalized row is a fixed point as eps vanishes") {
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor out = layer_norm(Tensor::from_values({1, 2}, {1, -1}), gamma, beta, 1e-12);
    CHECK(out.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-9));
  }

  TEST_CASE("gamma=0 collapses to beta") {
    Tensor gamma = Tensor::zeros({2});
    Tensor beta = Tensor::full({2}, 7.5);
    Tensor out = layer_norm(Tensor::from_values({2, 2}, {3, 1, -2, 9}), gamma, beta, 1e-5);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 7.5);
  }
}

TEST_SUITE("tensor.gelu") {
  TEST_CASE("odd point and asymptote") {
    CHECK(gelu(Tensor::scalar(0.0)).value() == 0.0);
    CHECK(gelu(Tensor::scalar(10.0)).value() == doctest::Approx(10.0).epsilon(1e-6));
  }

  TEST_CASE("exact-erf value at 1 from the x*Phi(x) oracle") {
    // Phi(1) = 0.5 * (1 + erf(1/sqrt(2)))
    const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(phi1 == doctest::Approx(0.8413447460685429).epsilon(1e-15));
    CHECK(gelu(Tensor::scalar(1.0)).value() == doctest::Approx(1.0 * phi1).epsilon(1e-15));
  }

  TEST_CASE("tanh approximation stays close to the exact form") {
    Tensor x = Tensor::from_values({5}, {-2.0, -0.5, 0.3, 1.0, 2.5});
    Tensor exact = gelu(x, GeluKind::exact_erf);
    Tensor approx = gelu(x, GeluKind::tanh_approx);
    CHECK(approx.at(3) == doctest::Approx(0.841192).epsilon(1e-5));
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(std::abs(exact.at(i) - approx.at(i)) < 5e-4);
  }
}

TEST_SUITE("tensor.reduce") {
  TEST_CASE("column means match arithmetic oracle") {
    Tensor out = reduce_mean(Tensor::from_values({2, 2}, {1, 3, 5, 7}), 0);
    CHECK(out.at(0) == 3.0);
    CHECK(out.at(1) == 5.0);
  }

  TEST_CASE("sum of zeros is zero") {
    CHECK(sum_all(Tensor::zeros({4, 4})).value() == 0.0);
  }

  TEST_CASE("mean of a single row is that row") {
    Tensor out = reduce_mean(Tensor::from_values({1, 3}, {2, 4, 8}), 0);
    CHECK(out.at(0) == 2.0);
    CHECK(out.at(1) == 4.0);
    CHECK(out.at(2) == 8.0);
  }

  TEST_CASE("axis out of range") {
    CHECK_THROWS_AS(reduce_mean(Tensor::zeros({2, 2}), 2), DimensionError);
  }
}

TEST_SUITE("tensor.shape_ops") {
  TEST_CASE("slice and concat are inverse") {
    Rng rng(3);
    Tensor m = Tensor::from_values({3, 6}, random_values(18, rng));
    Tensor left = slice_cols(m, 0, 2);
    Tensor mid = slice_cols(m, 2, 3);
    Tensor right = slice_cols(m, 5, 1);
    Tensor back = concat_cols({left, mid, right});
    for (std::size_t i = 0; i < m.numel(); ++i) CHECK(back.at(i) == m.at(i));
  }

  TEST_CASE("stack_rows collects vectors") {
    Tensor a = Tensor::from_values({2}, {1, 2});
    Tensor b = Tensor::from_values({2}, {3, 4});
    Tensor s = stack_rows({a, b});
    CHECK(s.rows() == 2);
    CHECK(s.at(1, 0) == 3.0);
  }

  TEST_CASE("slice_rows picks a row band") {
    Tensor m = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor band = slice_rows(m, 1, 2);
    CHECK(band.rows() == 2);
    CHECK(band.at(0, 0) == 3.0);
    CHECK(band.at(1, 1) == 6.0);
  }
}

TEST_SUITE("tensor.backward") {
  TEST_CASE("sum of squares gradient") {
    Tensor x = Tensor::from_values({2}, {1, -2}).set_requires_grad(true);
    ComputeTape tape;
    {
      TapeScope scope(tape);
      Tensor loss = sum_all(mul(x, x));
      tape.backward(loss);
    }
    CHECK(x.grad_at(0) == 2.0);
    CHECK(x.grad_at(1) == -4.0);
  }

  TEST_CASE("non-scalar loss is rejected") {
    Tensor x = Tensor::from_values({2}, {1, 2}).set_requires_grad(true);
    ComputeTape tape;
    TapeScope scope(tape);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }

  TEST_CASE("frozen tensors in the graph stay grad-free") {
    Tensor w = Tensor::from_values({2, 2}, {1, 2, 3, 4});  // frozen
    Tensor x = Tensor::from_values({2, 2}, {1, 0, 0, 1}).set_requires_grad(true);
    ComputeTape tape;
    {
      TapeScope scope(tape);
      Tensor loss = sum_all(matmul(x, w));
      tape.backward(loss);
    }
    CHECK_FALSE(w.has_grad());
    CHECK(x.has_grad());
  }

  TEST_CASE("backward on an all-frozen graph leaves every gradient absent") {
    Tensor w = Tensor::from_values({2}, {1, 2});
    Tensor v = Tensor::from_values({2}, {3, 4});
    ComputeTape tape;
    TapeScope scope(tape);
    Tensor loss = sum_all(mul(w, v));
    CHECK_THROWS_AS(tape.backward(loss), ContractError);  // not connected to the tape
    CHECK_FALSE(w.has_grad());
    CHECK_FALSE(v.has_grad());
  }

  TEST_CASE("two identical passes are bitwise identical") {
    Rng rng(11);
    const auto xv = random_values(6, rng);
    const auto wv = random_values(6, rng);
    auto run = [&] {
      Tensor x = Tensor::from_values({2, 3}, xv).set_requires_grad(true);
      Tensor w = Tensor::from_values({3, 2}, wv).set_requires_grad(true);
      ComputeTape tape;
      std::vector<double> out;
      {
        TapeScope scope(tape);
        Tensor loss = sum_all(gelu(matmul(x, w)));
        tape.backward(loss);
        out.push_back(loss.value());
      }
      auto g = x.grad();
      out.insert(out.end(), g.begin(), g.end());
      auto g2 = w.grad();
      out.insert(out.end(), g2.begin(), g2.end());
      return out;
    };
    CHECK(run() == run());
  }
}

TEST_SUITE("tensor.gradcheck") {
  TEST_CASE("every differentiable op passes central finite differences") {
    Rng rng(77);
    GradCheckResult total;
    auto merge = [&total](const GradCheckResult& r) {
      total.checks += r.checks;
      total.max_rel_err = std::max(total.max_rel_err, r.max_rel_err);
    };

    for (int trial = 0; trial < 12; ++trial) {
      const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
      Tensor a = Tensor::from_values({m, k}, random_values(m * k, rng)).set_requires_grad(true);
      Tensor b = Tensor::from_values({k, n}, random_values(k * n, rng)).set_requires_grad(true);
      merge(check_gradients([&] { return sum_all(gelu(matmul(a, b))); }, {a, b}));
      merge(check_gradients([&] { return sum_all(softmax_rows(matmul(a, b))); }, {a, b}));
      merge(check_gradients([&] { return sum_all(transpose(matmul(a, b))); }, {a, b}));
    }
    for (int trial = 0; trial < 8; ++trial) {
      const std::size_t m = 1 + rng.below(6), n = 2 + rng.below(6);
      Tensor a = Tensor::from_values({m, n}, random_values(m * n, rng)).set_requires_grad(true);
      Tensor g = Tensor::from_values({n}, random_values(n, rng)).set_requires_grad(true);
      Tensor bta = Tensor::from_values({n}, random_values(n, rng)).set_requires_grad(true);
      merge(check_gradients([&] { return sum_all(layer_norm(a, g, bta, 1e-5)); }, {a, g, bta}));
      merge(check_gradients([&] { return reduce_sum(reduce_mean(mul(a, a), 0), 0); }, {a}));
      merge(check_gradients([&] { return sum_all(mul(sub(a, g), add(a, g))); }, {a, g}));
      merge(check_gradients(
          [&] { return sum_all(concat_cols({slice_cols(a, 0, 1), scale(slice_cols(a, n - 2, 2), 1.5)})); },
          {a}));
      merge(check_gradients([&] { return sum_all(slice_rows(a, 0, m)); }, {a}));
    }
    for (int trial = 0; trial < 5; ++trial) {
      Tensor r1 = Tensor::from_values({4}, random_values(4, rng)).set_requires_grad(true);
      Tensor r2 = Tensor::from_values({4}, random_values(4, rng)).set_requires_grad(true);
      merge(check_gradients([&] { return sum_all(mul(stack_rows({r1, r2}), stack_rows({r2, r1}))); },
                            {r1, r2}));
      Tensor mask = make_dropout_mask({4}, 0.5, rng);
      merge(check_gradients([&] { return sum_all(mul(gelu(r1, GeluKind::tanh_approx), mask)); },
                            {r1}));
    }
    INFO("checks: ", total.checks, " max rel err: ", total.max_rel_err);
    CHECK(total.checks >= 100);
    CHECK(total.max_rel_err < 1e-4);
  }
}
