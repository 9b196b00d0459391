#include <cmath>
#include <sstream>
#include <vector>

#include "crrl/nn.hpp"
#include "crrl/rng.hpp"
#include "doctest.h"

using namespace crrl;
using nn::MlpSpec;

namespace {

// Straightforward re-implementation of the forward map used as an oracle:
// nested vectors, no shared code with the flat-parameter version.
std::vector<double> naive_forward(const MlpSpec& spec, const std::vector<double>& params,
                                  std::vector<double> x) {
  std::size_t k = 0;
  const int L = spec.layer_count();
  for (int l = 0; l < L; ++l) {
    const int n_in = spec.widths[l];
    const int n_out = spec.widths[l + 1];
    std::vector<std::vector<double>> w(n_out, std::vector<double>(n_in));
    for (int j = 0; j < n_out; ++j)
      for (int i = 0; i < n_in; ++i) w[j][i] = params[k++];
    std::vector<double> b(n_out);
    for (int j = 0; j < n_out; ++j) b[j] = params[k++];
    std::vector<double> y(n_out);
    for (int j = 0; j < n_out; ++j) {
      double z = b[j];
      for (int i = 0; i < n_in; ++i) z += w[j][i] * x[i];
      y[j] = (l + 1 < L && z < 0.0) ? 0.0 : z;
    }
    x = std::move(y);
  }
  return x;
}

MlpSpec random_spec(Rng& rng) {
  MlpSpec spec;
  const int hidden_layers = 1 + static_cast<int>(rng.index(2));
  spec.widths.push_back(1 + static_cast<int>(rng.index(5)));
  for (int l = 0; l < hidden_layers; ++l)
    spec.widths.push_back(2 + static_cast<int>(rng.index(6)));
  spec.widths.push_back(1 + static_cast<int>(rng.index(3)));
  return spec;
}

}  // namespace

TEST_CASE("forward: zero parameters give zero output") {
  MlpSpec spec{{3, 8, 2}};
  std::vector<double> params(nn::param_count(spec), 0.0);
  const auto out = nn::forward(spec, params, std::vector<double>{0.3, -0.2, 1.0});
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("forward: identity weights echo the input through a linear path") {
  // single hidden layer wide enough to pass positives straight through
  MlpSpec spec{{2, 2, 2}};
  std::vector<double> params(nn::param_count(spec), 0.0);
  // layer 0: W = I, b = 0; layer 1: W = I, b = 0
  params[0] = 1.0;  // W0[0,0]
  params[3] = 1.0;  // W0[1,1]
  params[6] = 1.0;  // W1[0,0]
  params[9] = 1.0;  // W1[1,1]
  const auto out = nn::forward(spec, params, std::vector<double>{0.7, 0.4});
  CHECK(out[0] == doctest::Approx(0.7));
  CHECK(out[1] == doctest::Approx(0.4));
}

TEST_CASE("forward matches an independent re-implementation") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const MlpSpec spec = random_spec(rng);
    std::vector<double> params = nn::init_params(spec, rng);
    std::vector<double> x(spec.input_dim());
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    const auto got = nn::forward(spec, params, x);
    const auto want = naive_forward(spec, params, x);
    for (int i = 0; i < spec.output_dim(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects shape mismatches") {
  MlpSpec spec{{3, 4, 1}};
  std::vector<double> params(nn::param_count(spec), 0.1);
  CHECK_THROWS(nn::forward(spec, params, std::vector<double>{1.0, 2.0}));
  std::vector<double> bad_params(3, 0.1);
  CHECK_THROWS(nn::forward(spec, bad_params, std::vector<double>{1.0, 2.0, 3.0}));
}

TEST_CASE("backward: zero cotangent, linear closed form") {
  MlpSpec spec{{2, 3, 1}};
  Rng rng(22);
  auto params = nn::init_params(spec, rng);
  nn::Workspace ws;
  const std::vector<double> x{0.4, -1.1};
  nn::forward_cached(spec, params, x, ws);

  std::vector<double> grad(params.size(), 0.0);
  const double zero = 0.0;
  nn::backward(spec, params, ws, {&zero, 1}, grad);
  for (double g : grad) CHECK(g == 0.0);

  // single linear layer: dL/dW = cot (outer) input, dL/db = cot
  MlpSpec lin{{3, 4, 2}};
  std::vector<double> lparams(nn::param_count(lin), 0.0);
  // make hidden pre-activations positive so ReLU is the identity on them
  for (int j = 0; j < 4; ++j) lparams[3 * 4 + j] = 5.0;  // b0 = 5
  nn::Workspace wl;
  const std::vector<double> xin{0.5, -0.25, 1.5};
  nn::forward_cached(lin, lparams, xin, wl);
  std::vector<double> lgrad(lparams.size(), 0.0);
  const std::vector<double> cot{2.0, -1.0};
  nn::backward(lin, lparams, wl, cot, lgrad);
  // layer-1 weight gradient = outer(cot, hidden activations)
  const std::size_t off1 = 3 * 4 + 4;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 4; ++i)
      CHECK(lgrad[off1 + j * 4 + i] == doctest::Approx(cot[j] * wl.acts[1][i]).epsilon(1e-12));
  // layer-1 bias gradient = cot
  CHECK(lgrad[off1 + 8] == doctest::Approx(2.0));
  CHECK(lgrad[off1 + 9] == doctest::Approx(-1.0));
}

TEST_CASE("gradient check against central finite differences") {
  Rng rng(23);
  double max_rel = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const MlpSpec spec = random_spec(rng);
    std::vector<double> params = nn::init_params(spec, rng);
    std::vector<double> x(spec.input_dim());
    for (auto& v : x) v = rng.uniform(-1.5, 1.5);
    std::vector<double> cot(spec.output_dim());
    for (auto& v : cot) v = rng.uniform(-1.0, 1.0);

    nn::Workspace ws;
    nn::forward_cached(spec, params, x, ws);
    std::vector<double> grad(params.size(), 0.0);
    std::vector<double> dx(x.size(), 0.0);
    nn::backward(spec, params, ws, cot, grad, dx);

    const auto scalar = [&](const std::vector<double>& p, const std::vector<double>& in) {
      const auto out = nn::forward(spec, p, in);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += cot[i] * out[i];
      return s;
    };
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto pp = params, pm = params;
      pp[i] += h;
      pm[i] -= h;
      const double fd = (scalar(pp, x) - scalar(pm, x)) / (2.0 * h);
      const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (scalar(params, xp) - scalar(params, xm)) / (2.0 * h);
      const double rel = std::abs(fd - dx[i]) / std::max({std::abs(fd), std::abs(dx[i]), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("adam: zero gradient leaves parameters, first step closed form") {
  std::vector<double> params{1.0, -2.0, 0.5};
  nn::AdamState opt(params.size(), 0.01);

  SUBCASE("zero gradient") {
    const auto before = params;
    const std::vector<double> g(3, 0.0);
    nn::adam_step(params, g, opt);
    CHECK(params == before);
    CHECK(opt.step == 1);
  }

  SUBCASE("first step is -lr g / (|g| + eps)") {
    const std::vector<double> g{0.3, -4.0, 1e-3};
    const auto before = params;
    nn::adam_step(params, g, opt);
    for (int i = 0; i < 3; ++i) {
      const double want = before[i] - opt.lr * g[i] / (std::abs(g[i]) + opt.eps);
      CHECK(params[i] == doctest::Approx(want).epsilon(1e-9));
    }
  }

  SUBCASE("non-finite gradients are rejected") {
    const std::vector<double> g{0.1, std::nan(""), 0.2};
    CHECK_THROWS(nn::adam_step(params, g, opt));
  }
}

TEST_CASE("adam converges on a convex toy") {
  // scalar quadratic f(w) = (w - w*)^2, tolerance frozen from the oracle run
  const double wstar = 0.731;
  std::vector<double> w{wstar + 1.0};
  nn::AdamState opt(1, 0.05);
  for (int i = 0; i < 2000; ++i) {
    const double g = 2.0 * (w[0] - wstar);
    nn::adam_step(w, {&g, 1}, opt);
  }
  CHECK(std::abs(w[0] - wstar) < 1e-6);
}

TEST_CASE("init is deterministic per seed") {
  MlpSpec spec{{4, 16, 16, 2}};
  Rng a(99), b(99), c(100);
  const auto pa = nn::init_params(spec, a);
  const auto pb = nn::init_params(spec, b);
  const auto pc = nn::init_params(spec, c);
  CHECK(pa == pb);
  CHECK(pa != pc);
  // fan-in bound respected
  for (double v : pa) CHECK(std::abs(v) <= 0.5);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  MlpSpec spec{{3, 8, 2}};
  Rng rng(7);
  const auto params = nn::init_params(spec, rng);
  std::stringstream buf;
  nn::save_params(buf, spec, params);
  MlpSpec spec2;
  std::vector<double> params2;
  nn::load_params(buf, spec2, params2);
  CHECK(spec2.widths == spec.widths);
  REQUIRE(params2.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params2[i] == params[i]);
}
