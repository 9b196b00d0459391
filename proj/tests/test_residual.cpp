#include <cmath>

#include "crrl/residual.hpp"
#include "crrl/rng.hpp"
#include "doctest.h"

using namespace crrl;
using residual::Config;
using residual::Mode;

namespace {

Config relative_cfg(double beta = 0.2, bool scaled = true) {
  Config c;
  c.mode = Mode::Relative;
  c.beta = beta;
  c.scale_during_training = scaled;
  return c;
}

Config absolute_cfg(double beta = 0.2, bool scaled = true) {
  Config c = relative_cfg(beta, scaled);
  c.mode = Mode::Absolute;
  return c;
}

}  // namespace

TEST_CASE("feature map basics") {
  Config c = relative_cfg();
  c.omega_norm = 4.0 * M_PI;  // tracking 60 rpm: 2 * omega_d_max

  SUBCASE("rest at zero angle") {
    const auto f = residual::feature_map(0.0, 0.0, 0.3, c);
    CHECK(f.dim == 3);
    CHECK(f.omega() == 0.0);
    CHECK(f.sin_psi() == 0.0);
    CHECK(f.cos_psi() == 1.0);
  }

  SUBCASE("angle wraps through sin/cos") {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
      const double psi = rng.uniform(-40.0, 40.0);
      const auto a = residual::feature_map(psi, 1.0, 0.0, c);
      const auto b = residual::feature_map(psi + 2.0 * M_PI, 1.0, 0.0, c);
      CHECK(a.sin_psi() == doctest::Approx(b.sin_psi()).epsilon(1e-9));
      CHECK(a.cos_psi() == doctest::Approx(b.cos_psi()).epsilon(1e-9));
      CHECK(a.sin_psi() * a.sin_psi() + a.cos_psi() * a.cos_psi() ==
            doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("default normalization at the 60 rpm operating point") {
    const auto f = residual::feature_map(0.7, 2.0 * M_PI, 0.0, c);
    CHECK(f.omega() == doctest::Approx(0.5).epsilon(1e-14));
  }

  SUBCASE("unscaled training appends the normalized base output") {
    Config u = relative_cfg(0.2, false);
    u.torque_norm = 4.0;
    const auto f = residual::feature_map(0.1, 1.0, 2.0, u);
    CHECK(f.dim == 4);
    CHECK(f.u_base() == doctest::Approx(0.5));
  }
}

TEST_CASE("absolute composition") {
  CHECK(residual::compose_absolute(1.0, 0.0, 0.2) == 1.0);
  CHECK(residual::compose_absolute(1.0, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(residual::compose_absolute(1.0, -1.0, 0.2) == doctest::Approx(0.8));
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double u = rng.uniform(-3.0, 3.0);
    const double pi = rng.uniform(-1.0, 1.0);
    const double beta = rng.uniform(0.01, 1.0);
    CHECK(std::abs(residual::compose_absolute(u, pi, beta) - u) <= beta + 1e-15);
  }
}

TEST_CASE("relative composition") {
  CHECK(residual::compose_relative(0.0, 0.73, 0.2) == 0.0);
  CHECK(residual::compose_relative(0.0, -1.0, 5.0) == 0.0);
  CHECK(residual::compose_relative(2.0, -1.0, 0.2) == doctest::Approx(1.6));
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const double u = rng.uniform(-3.0, 3.0);
    const double pi = rng.uniform(-1.0, 1.0);
    const double beta = rng.uniform(0.01, 0.99);
    const double total = residual::compose_relative(u, pi, beta);
    // sign preserved while beta < 1
    if (u != 0.0) CHECK(total * u >= 0.0);
    // containment with interval orientation following the sign of u
    const auto tube = residual::tube_bounds(u, relative_cfg(beta));
    CHECK(total >= tube.lo - 1e-15);
    CHECK(total <= tube.hi + 1e-15);
  }
}

TEST_CASE("relative is absolute with a state-dependent width") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-3.0, 3.0);
    const double pi = rng.uniform(-1.0, 1.0);
    const double beta = rng.uniform(0.0, 1.5);
    // same map up to the sign of u carried into the policy direction
    const double reflected = (u < 0 ? -1.0 : 1.0) * pi;
    CHECK(residual::compose_relative(u, pi, beta) ==
          doctest::Approx(residual::compose_absolute(u, reflected, beta * std::abs(u)))
              .epsilon(1e-12));
    // and identical admissible intervals
    Config rel = relative_cfg(std::max(beta, 1e-9));
    Config abs = absolute_cfg(std::max(beta, 1e-9) * std::abs(u));
    const auto tr = residual::tube_bounds(u, rel);
    const auto ta = residual::tube_bounds(u, abs);
    CHECK(tr.lo == doctest::Approx(ta.lo).epsilon(1e-12));
    CHECK(tr.hi == doctest::Approx(ta.hi).epsilon(1e-12));
  }
}

TEST_CASE("training action and round trip") {
  SUBCASE("scaled relative stores the residual torque") {
    const Config c = relative_cfg(0.2, true);
    CHECK(residual::training_action(2.0, 0.5, c) == doctest::Approx(0.2).epsilon(1e-14));
  }
  SUBCASE("unscaled stores the raw policy output") {
    const Config c = relative_cfg(0.2, false);
    CHECK(residual::training_action(2.0, 0.5, c) == 0.5);
  }
  SUBCASE("both variants reconstruct the same total for random tuples") {
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
      const double u = rng.uniform(-3.0, 3.0);
      const double pi = rng.uniform(-1.0, 1.0);
      const double beta = rng.uniform(0.01, 0.9);
      for (const Mode mode : {Mode::Relative, Mode::Absolute}) {
        Config scaled = relative_cfg(beta, true);
        scaled.mode = mode;
        Config unscaled = relative_cfg(beta, false);
        unscaled.mode = mode;
        const double want = residual::compose(u, pi, scaled);
        const double via_scaled =
            residual::reconstruct_total(u, residual::training_action(u, pi, scaled), scaled);
        const double via_unscaled = residual::reconstruct_total(
            u, residual::training_action(u, pi, unscaled), unscaled);
        CHECK(via_scaled == doctest::Approx(want).epsilon(1e-12));
        CHECK(via_unscaled == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("beta = 0 degenerates both modes to the base controller") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double u = rng.uniform(-3.0, 3.0);
    const double pi = rng.uniform(-1.0, 1.0);
    CHECK(residual::compose_relative(u, pi, 0.0) == u);
    CHECK(residual::compose_absolute(u, pi, 0.0) == u);
  }
}

TEST_CASE("config validation") {
  Config c = relative_cfg(-0.1);
  CHECK_THROWS(c.validate());
  c.beta = 0.2;
  c.omega_norm = 0.0;
  CHECK_THROWS(c.validate());
}
