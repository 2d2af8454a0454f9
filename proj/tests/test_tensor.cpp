#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tensor.hpp"
#include "test_util.hpp"

using namespace convrec;
using convrec::test::fd_check;
using convrec::test::named;

TEST_CASE("softmax symmetry and normalization") {
  Tensor x = Tensor::from({1, 2}, {0.0, 0.0});
  Tensor y = softmax_rows(x);
  CHECK(y.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.values()[1] == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor r = Tensor::randn({3, 5}, rng, 2.0);
    Tensor s = softmax_rows(r);
    for (int i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 5; ++j) sum += s.at(i, j);
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
    // invariance to adding a constant to all logits
    Tensor shifted = add_scalar(r, 3.25);
    Tensor s2 = softmax_rows(shifted);
    for (size_t k = 0; k < s.values().size(); ++k)
      CHECK(std::fabs(s.values()[k] - s2.values()[k]) < 1e-9);
  }
}

TEST_CASE("matmul identity") {
  Rng rng(3);
  Tensor a = Tensor::randn({3, 3}, rng, 1.0);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor out = matmul(eye, a);
  for (size_t k = 0; k < a.values().size(); ++k)
    CHECK(out.values()[k] == a.values()[k]);
}

TEST_CASE("layer_norm maps constant rows to zeros") {
  Tensor x = Tensor::from({2, 4}, {3, 3, 3, 3, -1, -1, -1, -1});
  Tensor y = layer_norm(x);
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("analytic gradient of sum(w*w)") {
  Tensor w = Tensor::from({1, 2}, {1.0, 2.0}, true);
  Tensor loss = sum_all(mul(w, w));
  loss.backward();
  CHECK(w.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(w.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("analytic softmax cross-entropy gradient") {
  Tensor logits = Tensor::from({1, 2}, {0.0, 0.0}, true);
  Tensor loss = cross_entropy_logits(logits, {0});
  CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  loss.backward();
  CHECK(logits.grad()[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(logits.grad()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("per-op finite-difference checks") {
  Rng rng(11);
  Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor b = Tensor::randn({4, 2}, rng, 1.0, true);
  Tensor rowvec = Tensor::randn({1, 4}, rng, 1.0, true);
  Tensor m = Tensor::randn({5, 3}, rng, 1.0, true);

  auto check = [&](const char* name, const std::function<Tensor()>& f,
                   std::vector<std::pair<std::string, Tensor>> ps) {
    auto rep = fd_check(f, ps);
    INFO(name << " worst: " << rep.worst);
    CHECK(rep.max_rel_err < 1e-4);
  };

  check("matmul", [&] { return sum_all(matmul(a, b)); },
        named({{"a", a}, {"b", b}}));
  check("transpose", [&] { return sum_all(mul(transpose(a), transpose(a))); },
        named({{"a", a}}));
  check("add_row_broadcast", [&] { return sum_all(mul(add(a, rowvec), a)); },
        named({{"a", a}, {"rowvec", rowvec}}));
  check("sub", [&] { return sum_all(mul(sub(a, rowvec), a)); },
        named({{"a", a}, {"rowvec", rowvec}}));
  check("mul", [&] { return sum_all(mul(a, a)); }, named({{"a", a}}));
  check("scale", [&] { return sum_all(scale(a, -2.5)); }, named({{"a", a}}));
  check("gather", [&] { return sum_all(mul(gather_rows(m, {0, 2, 2, 4}),
                                           gather_rows(m, {1, 3, 3, 0}))); },
        named({{"m", m}}));
  check("concat_rows",
        [&] {
          Tensor c = concat_rows({a, scale(a, 2.0)});
          return sum_all(mul(c, c));
        },
        named({{"a", a}}));
  check("concat_cols",
        [&] {
          Tensor c = concat_cols({a, scale(a, -1.0)});
          return sum_all(mul(c, c));
        },
        named({{"a", a}}));
  check("slice_rows", [&] { return sum_all(mul(slice_rows(a, 1, 2),
                                               slice_rows(a, 0, 2))); },
        named({{"a", a}}));
  check("slice_cols", [&] { return sum_all(mul(slice_cols(a, 1, 2),
                                               slice_cols(a, 2, 2))); },
        named({{"a", a}}));
  check("softmax", [&] { return sum_all(mul(softmax_rows(a), a)); },
        named({{"a", a}}));
  check("layer_norm", [&] { return sum_all(mul(layer_norm(a), a)); },
        named({{"a", a}}));
  check("gelu", [&] { return sum_all(gelu(a)); }, named({{"a", a}}));
  check("relu", [&] { return sum_all(mul(relu(a), a)); }, named({{"a", a}}));
  check("mean_rows", [&] { return sum_all(mul(mean_rows(a), rowvec)); },
        named({{"a", a}, {"rowvec", rowvec}}));
  check("mean_all", [&] { return mean_all(mul(a, a)); }, named({{"a", a}}));
  check("cross_entropy",
        [&] { return cross_entropy_logits(matmul(a, b), {1, 0, 1}); },
        named({{"a", a}, {"b", b}}));
}

TEST_CASE("shape errors name the op and both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,5)") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(concat_rows({a, b}), ShapeError);
  CHECK_THROWS_AS(slice_rows(a, 1, 5), ShapeError);
  CHECK_THROWS_AS(gather_rows(a, {7}), ShapeError);
  CHECK_THROWS_AS(cross_entropy_logits(a, {0}), ShapeError);
}

TEST_CASE("backward contract: scalar only, single use") {
  Tensor w = Tensor::from({1, 2}, {1.0, 2.0}, true);
  Tensor y = mul(w, w);
  CHECK_THROWS_AS(y.backward(), NumericError);  // non-scalar

  Tensor loss = sum_all(y);
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), NumericError);  // second pass without reset

  // a fresh graph differentiates fine and grads restart from zero
  Tensor loss2 = sum_all(mul(w, w));
  loss2.backward();
  CHECK(w.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("gradients accumulate within one pass across shared uses") {
  Tensor w = Tensor::from({1, 2}, {3.0, -1.0}, true);
  Tensor loss = add(sum_all(mul(w, w)), sum_all(scale(w, 2.0)));
  loss.backward();
  CHECK(w.grad()[0] == doctest::Approx(2.0 * 3.0 + 2.0));
  CHECK(w.grad()[1] == doctest::Approx(2.0 * -1.0 + 2.0));
}

TEST_CASE("forward ops stay finite on finite inputs") {
  Rng rng(5);
  Tensor big = Tensor::randn({4, 6}, rng, 100.0);
  for (const Tensor& t : {softmax_rows(big), layer_norm(big), gelu(big)})
    for (double v : t.values()) CHECK(std::isfinite(v));
  Tensor ce = cross_entropy_logits(big, {0, 1, 2, 3});
  CHECK(std::isfinite(ce.item()));
}

TEST_CASE("dropout: zero rate is identity, masks rescale") {
  Rng rng(9);
  Tensor a = Tensor::randn({2, 8}, rng, 1.0);
  Tensor same = dropout(a, 0.0, rng);
  CHECK(same.node_.get() == a.node_.get());
  Tensor dropped = dropout(a, 0.5, rng);
  for (size_t k = 0; k < a.values().size(); ++k) {
    double v = dropped.values()[k];
    CHECK((v == 0.0 || v == doctest::Approx(a.values()[k] * 2.0)));
  }
  CHECK_THROWS_AS(dropout(a, 1.0, rng), NumericError);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  Tensor w = Tensor::from({1, 2}, {1.0, 2.0}, true);
  NoGradGuard ng;
  Tensor y = sum_all(mul(w, w));
  CHECK_FALSE(y.requires_grad());
}
