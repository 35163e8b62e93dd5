#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "battbench/errors.hpp"
#include "battbench/nn.hpp"
#include "battbench/nn_io.hpp"
#include "battbench/rng.hpp"

using namespace battbench;
using namespace battbench::nn;

namespace {

Matrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * rng.uniform() - 1.0;
  return m;
}

double weighted_output(const Mlp<double>& net, const Matrix<double>& x, const Matrix<double>& c) {
  return (net.forward(x).array() * c.array()).sum();
}

template <typename F>
void for_each_parameter(MlpParams<double>& p, F&& f) {
  for (auto& w : p.weights)
    for (Eigen::Index i = 0; i < w.size(); ++i) f(w.data()[i]);
  for (auto& b : p.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) f(b.data()[i]);
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("zero network with softmax head is uniform") {
  const Mlp<double> net({6, 8, 3}, Head::Softmax);
  const Matrix<double> x = Matrix<double>::Constant(6, 2, 0.7);
  const auto p = net.forward(x);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p.data()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("identity linear layer") {
  Mlp<double> net({3, 3}, Head::Linear);
  net.mutable_params().weights[0].setIdentity();
  Matrix<double> x(3, 1);
  x << 1.0, -2.0, 3.5;
  CHECK(net.forward(x) == x);
}

TEST_CASE("single neuron gradient") {
  Mlp<double> net({1, 1}, Head::Linear);
  net.mutable_params().weights[0](0, 0) = 0.3;
  net.mutable_params().biases[0][0] = -0.2;
  Tape<double> tape;
  Matrix<double> x(1, 1);
  x(0, 0) = 2.0;
  net.forward(x, &tape);
  const auto g = net.backward(tape, Matrix<double>::Ones(1, 1));
  CHECK(g.weights[0](0, 0) == 2.0);
  CHECK(g.biases[0][0] == 1.0);
}

TEST_CASE("seeded initialization is deterministic") {
  Rng a(3), b(3);
  const auto n1 = Mlp<double>::xavier({6, 16, 16, 3}, Head::Softmax, a);
  const auto n2 = Mlp<double>::xavier({6, 16, 16, 3}, Head::Softmax, b);
  for (std::size_t l = 0; l < n1.layer_count(); ++l) CHECK(n1.params().weights[l] == n2.params().weights[l]);
  CHECK(n1.parameter_count() == 6 * 16 + 16 + 16 * 16 + 16 + 16 * 3 + 3);
}

TEST_CASE("softmax: normalization, extremes, log identity") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix<double> z = 10.0 * random_matrix(3, 4, rng);
    const auto p = softmax(z);
    const auto lp = log_softmax(z);
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      CHECK(p.col(c).sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (Eigen::Index r = 0; r < 3; ++r) {
        const double lse = std::log(z.col(c).array().exp().sum());
        CHECK(lp(r, c) == doctest::Approx(z(r, c) - lse).epsilon(1e-6));
      }
    }
  }
  Matrix<double> extreme(3, 1);
  extreme << 1000.0, -1000.0, 0.0;
  const auto p = softmax(extreme);
  CHECK(p.allFinite());
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(log_softmax(extreme).allFinite());
}

TEST_CASE("gradient of log softmax through the softmax head") {
  // d log p_a / d z = onehot(a) - p
  Rng rng(4);
  Mlp<double> net({2, 3}, Head::Softmax);
  net.mutable_params().weights[0] = random_matrix(3, 2, rng);
  Matrix<double> x(2, 1);
  x << 0.4, -1.1;
  for (int a = 0; a < 3; ++a) {
    Tape<double> tape;
    const auto p = net.forward(x, &tape);
    Matrix<double> upstream = Matrix<double>::Zero(3, 1);
    upstream(a, 0) = 1.0 / p(a, 0);
    const auto g = net.backward(tape, upstream);
    for (int r = 0; r < 3; ++r) {
      const double dz = (r == a ? 1.0 : 0.0) - p(r, 0);
      CHECK(g.biases[0][r] == doctest::Approx(dz).epsilon(1e-12));
    }
  }
}

TEST_CASE("backprop matches central finite differences on 50 random networks") {
  Rng rng(12345);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int in = 1 + static_cast<int>(rng.below(6));
    const int hidden = 1 + static_cast<int>(rng.below(8));
    const int out = 1 + static_cast<int>(rng.below(4));
    const Head head = trial % 2 == 0 ? Head::Linear : Head::Softmax;
    std::vector<int> widths{in, hidden};
    if (trial % 3 == 0) widths.push_back(1 + static_cast<int>(rng.below(5)));
    widths.push_back(out);
    auto net = Mlp<double>::xavier(widths, head, rng);
    const Eigen::Index batch = 1 + static_cast<Eigen::Index>(rng.below(4));
    const Matrix<double> x = random_matrix(in, batch, rng);
    const Matrix<double> c = random_matrix(out, batch, rng);

    Tape<double> tape;
    net.forward(x, &tape);
    auto analytic = net.backward(tape, c);

    std::vector<double> grads;
    for_each_parameter(analytic, [&](double& g) { grads.push_back(g); });
    std::size_t k = 0;
    const double h = 1e-5;
    for_each_parameter(net.mutable_params(), [&](double& w) {
      const double saved = w;
      w = saved + h;
      const double up = weighted_output(net, x, c);
      w = saved - h;
      const double down = weighted_output(net, x, c);
      w = saved;
      const double fd = (up - down) / (2.0 * h);
      const double g = grads[k++];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6});
      CHECK(rel <= 1e-4);
      ++checked;
    });
  }
  CHECK(checked > 500);
}

TEST_CASE("tape misuse and bad inputs") {
  Rng rng(2);
  auto net = Mlp<double>::xavier({2, 4, 1}, Head::Linear, rng);
  const Matrix<double> x = Matrix<double>::Ones(2, 1);
  const Matrix<double> up = Matrix<double>::Ones(1, 1);

  Tape<double> tape;
  net.forward(x, &tape);
  net.backward(tape, up);
  CHECK(kind_of([&] { net.backward(tape, up); }) == ErrorKind::State);

  Tape<double> stale;
  net.forward(x, &stale);
  net.mutable_params().biases[0][0] += 0.1;
  CHECK(kind_of([&] { net.backward(stale, up); }) == ErrorKind::State);

  Tape<double> foreign;
  const auto other = Mlp<double>::xavier({2, 4, 1}, Head::Linear, rng);
  other.forward(x, &foreign);
  CHECK(kind_of([&] { net.backward(foreign, up); }) == ErrorKind::State);

  CHECK(kind_of([&] { net.forward(Matrix<double>::Ones(3, 1)); }) == ErrorKind::Shape);
  Matrix<double> bad = x;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK(kind_of([&] { net.forward(bad); }) == ErrorKind::Numeric);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Rng rng(8);
    auto net = Mlp<double>::xavier({3, 5, 2}, Head::Linear, rng);
    const auto before = net.params();
    Adam<double> opt(net);
    for (int i = 0; i < 5; ++i) opt.step(net, net.zeros_like(), 0.1);
    for (std::size_t l = 0; l < net.layer_count(); ++l) CHECK(net.params().weights[l] == before.weights[l]);
  }
  SUBCASE("first step moves each parameter by about lr against the gradient sign") {
    Mlp<double> net({1, 1}, Head::Linear);
    Adam<double> opt(net);
    auto g = net.zeros_like();
    g.weights[0](0, 0) = 5.0;
    g.biases[0][0] = -0.01;
    opt.step(net, g, 0.01);
    CHECK(net.params().weights[0](0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(net.params().biases[0][0] == doctest::Approx(0.01).epsilon(1e-4));
  }
  SUBCASE("quadratic descent follows the reference recursion") {
    Mlp<double> net({1, 1}, Head::Linear);
    Adam<double> opt(net);
    double w = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 200; ++t) {
      const double wn = net.params().biases[0][0];
      auto g = net.zeros_like();
      g.biases[0][0] = 2.0 * (wn - 3.0);
      opt.step(net, g, 0.1);

      const double gr = 2.0 * (w - 3.0);
      m = 0.9 * m + 0.1 * gr;
      v = 0.999 * v + 0.001 * gr * gr;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(net.params().biases[0][0] == doctest::Approx(w).epsilon(1e-12));
    }
    CHECK(std::abs(w - 3.0) < 0.05);
  }
  SUBCASE("non-finite gradient is rejected") {
    Mlp<double> net({1, 1}, Head::Linear);
    Adam<double> opt(net);
    auto g = net.zeros_like();
    g.biases[0][0] = std::numeric_limits<double>::infinity();
    CHECK(kind_of([&] { opt.step(net, g, 0.1); }) == ErrorKind::Numeric);
    CHECK(net.params().biases[0][0] == 0.0);
  }
}

TEST_CASE("gradient norm clipping") {
  Mlp<double> net({1, 2}, Head::Linear);
  auto g = net.zeros_like();
  g.biases[0] << 3.0, 4.0;
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(std::sqrt(g.squared_norm()) == doctest::Approx(1.0));
  CHECK(g.biases[0][0] == doctest::Approx(0.6));
}

TEST_CASE("checkpoint round trip is byte-identical") {
  Rng rng(21);
  const auto net = Mlp<double>::xavier({6, 16, 16, 3}, Head::Softmax, rng);
  std::ostringstream out;
  save_mlp(net, out);
  std::istringstream in(out.str());
  const auto back = load_mlp(in);
  std::ostringstream again;
  save_mlp(back, again);
  CHECK(again.str() == out.str());
  const Matrix<double> x = random_matrix(6, 3, rng);
  CHECK(back.forward(x) == net.forward(x));

  std::istringstream truncated(out.str().substr(0, out.str().size() / 2));
  CHECK_THROWS_AS(load_mlp(truncated), Error);
}

TEST_CASE("templated scalar: long double network agrees with double") {
  Rng a(5), b(5);
  const auto nd = Mlp<double>::xavier({3, 4, 2}, Head::Softmax, a);
  const auto nl = Mlp<long double>::xavier({3, 4, 2}, Head::Softmax, b);
  Matrix<double> x(3, 1);
  x << 0.1, 0.2, -0.3;
  const auto pd = nd.forward(x);
  const auto pl = nl.forward(x.cast<long double>());
  for (int i = 0; i < 2; ++i) CHECK(static_cast<double>(pl(i, 0)) == doctest::Approx(pd(i, 0)).epsilon(1e-12));
}
