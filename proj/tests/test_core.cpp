#include "suites.hpp"

#include <doctest.h>

using namespace m4s;

TEST_SUITE("core") {
  TEST_CASE("matmul by identity returns the input") {
    Tape t;
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    const Var c = ad::matmul(t.leaf(a), t.leaf(Matrix::Identity(2, 2)));
    CHECK(c.value() == a);
  }

  TEST_CASE("matmul matches a triple loop") {
    std::mt19937_64 rng(3);
    const Matrix a = suites::random_matrix(3, 4, rng), b = suites::random_matrix(4, 2, rng);
    Tape t;
    const Var c = ad::matmul(t.leaf(a), t.leaf(b));
    CHECK((c.value() - oracle::matmul(a, b)).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("shape mismatch names the op and both shapes") {
    Tape t;
    const Var a = t.leaf(Matrix::Zero(3, 4)), b = t.leaf(Matrix::Zero(3, 2));
    try {
      ad::matmul(a, b);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("matmul") != std::string::npos);
      CHECK(msg.find("3x4") != std::string::npos);
      CHECK(msg.find("3x2") != std::string::npos);
    }
  }

  TEST_CASE("tanh of zeros is zeros") {
    Tape t;
    CHECK(ad::tanh(t.leaf(Matrix::Zero(2, 3))).value().isZero(0.0));
  }

  TEST_CASE("logsumexp hand values") {
    CHECK(logsumexp(Vector::Zero(2)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    for (double c : {-700.0, -2.5, 0.0, 3.0, 900.0}) CHECK(logsumexp(Vector::Constant(1, c)) == c);
    Vector big(2);
    big << 1000.0, 1000.0;
    CHECK(std::isfinite(logsumexp(big)));
    CHECK(logsumexp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS(logsumexp(Vector(0)));
  }

  TEST_CASE("log rejects nonpositive inputs") {
    Tape t;
    CHECK_THROWS_AS(ad::log(t.leaf(Matrix::Zero(1, 1))), std::domain_error);
  }

  TEST_CASE("d/dx of x*x at 3 is 6") {
    Tape t;
    const Var x = t.leaf(Matrix::Constant(1, 1, 3.0));
    const Gradients g = t.backward(ad::mul(x, x));
    CHECK(g[x](0, 0) == 6.0);
  }

  TEST_CASE("disconnected leaves and later nodes get zero gradients") {
    Tape t;
    const Var x = t.leaf(Matrix::Constant(2, 2, 1.5));
    const Var unused = t.leaf(Matrix::Constant(3, 1, 2.0));
    const Var out = ad::sum(ad::tanh(x));
    const Var after = ad::sum(ad::mul(x, x));
    (void)after;
    const Gradients g = t.backward(out);
    CHECK(g[unused].isZero(0.0));
    CHECK(g[unused].rows() == 3);
    CHECK(g[after].isZero(0.0));
  }

  TEST_CASE("backward requires a scalar output") {
    Tape t;
    const Var x = t.leaf(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(x), ShapeError);
  }

  TEST_CASE("tape order is topological and each node is swept once") {
    Tape t;
    const Var x = t.leaf(Matrix::Constant(1, 1, 2.0));
    const Var y = ad::add(ad::mul(x, x), ad::mul(x, x));
    for (std::size_t id = 0; id < t.size(); ++id)
      for (std::size_t in : t.inputs(id)) CHECK(in < id);
    int calls = 0;
    t.override_backward(y, [&](const Tape&, std::vector<Matrix>& g, std::size_t self) {
      ++calls;
      for (std::size_t in : t.inputs(self)) g[in] += g[self];
    });
    const Gradients g = t.backward(y);
    CHECK(calls == 1);
    CHECK(g[x](0, 0) == doctest::Approx(8.0));
  }

  TEST_CASE("sum(relu(W x)) gradient matches central differences") {
    std::mt19937_64 rng(11);
    const Matrix w = suites::random_matrix(5, 4, rng), x = suites::random_matrix(4, 1, rng);
    const auto rep = grad_check(
        [&](Tape& t, std::span<const Var> l) { return ad::sum(ad::relu(ad::matmul(l[0], l[1]))); },
        {{"w", w}, {"x", x}}, 1e-5, 1e-4);
    CHECK(rep.passed);
    CHECK(rep.coordinates == 24);
  }

  TEST_CASE("every primitive passes grad_check") {
    std::mt19937_64 rng(17);
    const Matrix a = suites::random_matrix(3, 4, rng), b = suites::random_matrix(3, 4, rng);
    const Matrix row = suites::random_matrix(1, 4, rng), pos = suites::random_matrix(3, 4, rng).cwiseAbs().array() + 0.5;
    const Matrix sq = suites::random_matrix(4, 3, rng);
    using Op = std::function<Var(Tape&, std::span<const Var>)>;
    const std::vector<std::pair<std::string, Op>> ops = {
        {"matmul", [](Tape&, std::span<const Var> l) { return ad::sum(ad::tanh(ad::matmul(l[0], l[3]))); }},
        {"add/sub", [](Tape&, std::span<const Var> l) { return ad::sum(ad::tanh(ad::sub(ad::add(l[0], l[1]), l[1]))); }},
        {"mul", [](Tape&, std::span<const Var> l) { return ad::sum(ad::mul(l[0], l[1])); }},
        {"row broadcast", [](Tape&, std::span<const Var> l) { return ad::sum(ad::tanh(ad::mul_row(ad::add_row(l[0], l[2]), l[2]))); }},
        {"scale/add_scalar", [](Tape&, std::span<const Var> l) { return ad::sum(ad::tanh(ad::add_scalar(ad::scale(l[0], 0.7), 0.3))); }},
        {"sigmoid/exp/log", [](Tape&, std::span<const Var> l) { return ad::sum(ad::log(ad::add(ad::exp(l[0]), ad::sigmoid(l[4])))); }},
        {"mean/mean_rows", [](Tape&, std::span<const Var> l) { return ad::add(ad::mean(ad::tanh(l[0])), ad::sum(ad::tanh(ad::mean_rows(l[1])))); }},
        {"logsumexp", [](Tape&, std::span<const Var> l) { return ad::logsumexp(l[0]); }},
        {"concat/slice", [](Tape&, std::span<const Var> l) {
           const Var parts[] = {l[0], l[1]};
           const Var r = ad::concat_rows(parts);
           const Var c = ad::concat_cols(parts);
           return ad::add(ad::sum(ad::tanh(ad::slice_rows(r, 2, 3))), ad::sum(ad::tanh(ad::slice_cols(c, 3, 2))));
         }},
        {"transpose", [](Tape&, std::span<const Var> l) { return ad::sum(ad::tanh(ad::matmul(ad::transpose(l[3]), ad::transpose(l[0])))); }},
        {"softmax_rows", [](Tape&, std::span<const Var> l) { return ad::sum(ad::mul(ad::softmax_rows(l[0]), l[1])); }},
        {"layer_norm_rows", [](Tape&, std::span<const Var> l) { return ad::sum(ad::mul(ad::layer_norm_rows(l[0], l[2], l[2]), l[1])); }},
    };
    for (const auto& [name, op] : ops) {
      CAPTURE(name);
      const auto rep = grad_check(op, {{"a", a}, {"b", b}, {"row", row}, {"sq", sq}, {"pos", pos}}, 1e-6, 1e-6);
      CHECK(rep.passed);
    }
  }

  TEST_CASE("layer norm maps constant rows to zero with zero gradient") {
    Tape t;
    const Var x = t.leaf(Matrix::Constant(2, 4, 3.0));
    const Var g = t.leaf(Matrix::Ones(1, 4)), b = t.leaf(Matrix::Zero(1, 4));
    const Var y = ad::layer_norm_rows(x, g, b);
    CHECK(y.value().isZero(0.0));
    const Gradients gr = t.backward(ad::sum(ad::mul(y, y)));
    CHECK(gr[x].isZero(0.0));
  }

  TEST_CASE("relu subgradient at zero is zero") {
    Tape t;
    const Var x = t.leaf(Matrix::Zero(1, 3));
    CHECK(t.backward(ad::sum(ad::relu(x)))[x].isZero(0.0));
  }

  TEST_CASE("sigmoid is finite for extreme inputs") {
    Tape t;
    Matrix m(1, 2);
    m << -1000.0, 1000.0;
    const Var s = ad::sigmoid(t.leaf(m));
    CHECK(s.value()(0, 0) == 0.0);
    CHECK(s.value()(0, 1) == 1.0);
  }

  TEST_CASE("grad_check on a quadratic passes at 1e-6") {
    std::mt19937_64 rng(5);
    const Matrix theta = suites::random_matrix(4, 3, rng);
    const auto rep = grad_check([](Tape&, const Var& th) { return ad::sum(ad::mul(th, th)); }, theta, 1e-5, 1e-6);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-6);
  }

  TEST_CASE("grad_check localizes a corrupted backward rule") {
    std::mt19937_64 rng(8);
    const Matrix theta = suites::random_matrix(3, 3, rng);
    const auto rep = grad_check(
        [](Tape& t, const Var& th) {
          const Var sq = ad::mul(th, th);
          // Drop the gradient flowing into coordinate (1, 2).
          t.override_backward(sq, [](const Tape& tp, std::vector<Matrix>& g, std::size_t self) {
            const std::size_t in = tp.inputs(self)[0];
            Matrix local = 2.0 * tp.value(in).cwiseProduct(g[self]);
            local(1, 2) = 0.0;
            g[in] += local;
          });
          return ad::sum(sq);
        },
        theta, 1e-5, 1e-4);
    CHECK_FALSE(rep.passed);
    CHECK(rep.worst_param == "theta");
    CHECK(rep.worst_row == 1);
    CHECK(rep.worst_col == 2);
    CHECK(rep.worst_analytic == 0.0);
  }

  TEST_CASE("grad_check reports non-finite objectives with the coordinate") {
    // exp overflows just above 709.78, so only the forward probe blows up.
    const Matrix theta = Matrix::Constant(1, 1, 0.7097);
    try {
      grad_check([](Tape&, const Var& th) { return ad::sum(ad::exp(ad::scale(th, 1000.0))); }, theta, 1e-4, 1e-4);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("theta(0,0)") != std::string::npos);
    }
    CHECK_THROWS(grad_check([](Tape&, const Var& th) { return ad::sum(th); }, theta, 1.0, 1e-4));
  }

  TEST_CASE("gradient suite on a few seeds") {
    const auto out = suites::gradient_suite(3);
    INFO(out.detail);
    CHECK(out.passed);
  }
}
