#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cald/fem.hpp"
#include "cald/hilbert.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace cald;

namespace {
constexpr double kPi = std::numbers::pi;

BoundaryFunction random_function(int K, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd c(modes_for_order(K));
  for (int i = 0; i < c.size(); ++i) c[i] = normal(gen);
  return BoundaryFunction(c);
}
}  // namespace

TEST_CASE("h_half_norm closed form") {
  CHECK(h_half_norm(BoundaryFunction::zero(5)) == 0.0);

  BoundaryFunction cosine = BoundaryFunction::zero(3);
  cosine.coeffs[1] = 1.0;  // cos(theta)
  CHECK(h_half_norm(cosine) == doctest::Approx(std::sqrt(kPi * std::sqrt(2.0))).epsilon(1e-14));

  BoundaryFunction constant = BoundaryFunction::zero(3);
  constant.coeffs[0] = 1.0;
  CHECK(h_half_norm(constant) == doctest::Approx(std::sqrt(2.0 * kPi)).epsilon(1e-14));

  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    const BoundaryFunction g = random_function(8, gen);
    const double c = std::normal_distribution<double>()(gen);
    BoundaryFunction scaled(c * g.coeffs);
    CHECK(h_half_norm(scaled) ==
          doctest::Approx(std::abs(c) * h_half_norm(g)).epsilon(1e-12));
  }
}

TEST_CASE("h_minus_half_norm and duality") {
  CHECK(h_minus_half_norm(BoundaryFunctional::zero(4)) == 0.0);

  BoundaryFunctional single = BoundaryFunctional::zero(4);
  single.coeffs[3] = 1.0;  // 2c slot
  CHECK(h_minus_half_norm(single) ==
        doctest::Approx(1.0 / std::sqrt(kPi * std::sqrt(5.0))).epsilon(1e-14));

  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const BoundaryFunction f = random_function(8, gen);
    const BoundaryFunctional F = riesz_inverse(random_function(8, gen));
    CHECK(std::abs(pairing(F, f)) <=
          h_minus_half_norm(F) * h_half_norm(f) * (1.0 + 1e-12));
    // Sharp at the Riesz representative.
    CHECK(pairing(F, riesz_map(F)) ==
          doctest::Approx(h_minus_half_norm(F) * h_minus_half_norm(F)).epsilon(1e-10));
  }
}

TEST_CASE("riesz map is an isometric coefficient rescale") {
  CHECK(riesz_map(BoundaryFunctional::zero(3)).coeffs.norm() == 0.0);

  BoundaryFunctional F = BoundaryFunctional::zero(3);
  F.coeffs[1] = h_half_weight(1);
  CHECK(riesz_map(F).coeffs[1] == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const BoundaryFunctional G = riesz_inverse(random_function(10, gen));
    CHECK(std::abs(h_half_norm(riesz_map(G)) - h_minus_half_norm(G)) <= 1e-12);
    const BoundaryFunctional back = riesz_inverse(riesz_map(G));
    CHECK((back.coeffs - G.coeffs).cwiseAbs().maxCoeff() <=
          1e-14 * (1.0 + G.coeffs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("project and extend are orthonormal coordinates") {
  const OrthoBasis basis = make_circle_basis(8);

  Eigen::VectorXd a(3);
  a << 1.0, 2.0, 3.0;
  const Eigen::VectorXd x = extend(a, basis, 3);
  const Eigen::VectorXd p = project(x, basis, 2);
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(2.0).epsilon(1e-12));

  // Third basis member has coordinates (0,0,1,0,0).
  Eigen::VectorXd e3 = Eigen::VectorXd::Zero(3);
  e3[2] = 1.0;
  const Eigen::VectorXd member = extend(e3, basis, 3);
  const Eigen::VectorXd coords = project(member, basis, 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(coords[i] == doctest::Approx(i == 2 ? 1.0 : 0.0).epsilon(1e-12));
  }

  CHECK(extend(Eigen::VectorXd::Zero(4), basis, 4).norm() == 0.0);
  CHECK_THROWS_AS(project(x, basis, basis.size + 1), std::invalid_argument);
  CHECK_THROWS_AS(extend(a, basis, 2), std::invalid_argument);

  std::mt19937_64 gen(4);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd m(basis.size);
    for (int i = 0; i < m.size(); ++i) m[i] = normal(gen);
    // Parseval round trip at full dimension.
    const Eigen::VectorXd back = extend(project(m, basis, basis.size), basis, basis.size);
    CHECK((back - m).cwiseAbs().maxCoeff() <= 1e-12);
    // Orthonormal expansion preserves the Euclidean norm.
    Eigen::VectorXd coeffs(7);
    for (int i = 0; i < 7; ++i) coeffs[i] = normal(gen);
    CHECK(space_norm(extend(coeffs, basis, 7), basis) ==
          doctest::Approx(coeffs.norm()).epsilon(1e-12));
    // Linearity under random combinations.
    Eigen::VectorXd m2(basis.size);
    for (int i = 0; i < m2.size(); ++i) m2[i] = normal(gen);
    const double s = normal(gen), t = normal(gen);
    const Eigen::VectorXd lhs = project(s * m + t * m2, basis, 9);
    const Eigen::VectorXd rhs = s * project(m, basis, 9) + t * project(m2, basis, 9);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("dual coordinates mirror the primal ones through the Riesz map") {
  const OrthoBasis basis = make_circle_basis(6);
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const BoundaryFunctional F = riesz_inverse(random_function(6, gen));
    const Eigen::VectorXd dual = project_dual(F, basis, basis.size);
    CHECK(dual.norm() == doctest::Approx(h_minus_half_norm(F)).epsilon(1e-12));
    const BoundaryFunctional back = extend_dual(dual, basis, basis.size);
    CHECK((back.coeffs - F.coeffs).cwiseAbs().maxCoeff() <=
          1e-12 * (1.0 + F.coeffs.cwiseAbs().maxCoeff()));
    // Pairing with a basis member reads off the dual coordinate.
    Eigen::VectorXd e(Eigen::VectorXd::Zero(3));
    e[2] = 1.0;
    CHECK(pairing(F, BoundaryFunction(extend(e, basis, 3))) ==
          doctest::Approx(dual[2]).epsilon(1e-12));
  }
}

TEST_CASE("projection tail error") {
  const OrthoBasis basis = make_circle_basis(8);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(1);
  e1[0] = 1.0;
  CHECK(projection_tail_error(extend(e1, basis, 1), basis, 1) == 0.0);

  Eigen::VectorXd mix = Eigen::VectorXd::Zero(5);
  mix[0] = 1.0;
  mix[4] = 1.0;  // g_1 + g_5
  CHECK(projection_tail_error(extend(mix, basis, 5), basis, 4) ==
        doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 100; ++trial) {
    const BoundaryFunction f = random_function(8, gen);
    double prev = std::numeric_limits<double>::infinity();
    for (int d = 1; d <= basis.size; d += 4) {
      const double err = projection_tail_error(f.coeffs, basis, d);
      CHECK(err <= prev * (1.0 + 1e-12) + 1e-15);
      prev = err;
    }
  }
}

TEST_CASE("circle basis is orthonormal") {
  const OrthoBasis basis = make_circle_basis(16);
  CHECK(orthonormality_defect(basis) <= 1e-10);

  // The trig family behind it is L2-orthogonal; trapezoid quadrature check.
  const int n = 8192;
  for (int i = 0; i < 7; ++i) {
    for (int j = i; j < 7; ++j) {
      BoundaryFunction bi = BoundaryFunction::zero(3), bj = BoundaryFunction::zero(3);
      bi.coeffs[i] = 1.0;
      bj.coeffs[j] = 1.0;
      double quad = 0.0;
      for (int q = 0; q < n; ++q) {
        const double theta = 2.0 * kPi * q / n;
        quad += bi(theta) * bj(theta);
      }
      quad *= 2.0 * kPi / n;
      const double expected = i != j ? 0.0 : (i == 0 ? 2.0 * kPi : kPi);
      CHECK(quad == doctest::Approx(expected).epsilon(1e-10).scale(1.0));
    }
  }
}

TEST_CASE("domain bases are orthonormal under the mesh quadrature") {
  const Mesh mesh = generate_mesh(0.2);
  const OrthoBasis kl = make_domain_basis(mesh, 12);
  CHECK(kl.size == 12);
  CHECK(orthonormality_defect(kl) <= 1e-10);

  const OrthoBasis shells = make_radial_shell_basis(mesh, {0.5});
  CHECK(shells.size == 2);
  CHECK(orthonormality_defect(shells) <= 1e-10);

  // Two-layer nodal fields lie exactly in the shell span.
  const ConductivityField a = radial_two_layer(mesh, 3.0, 1.0, 0.5);
  const Eigen::VectorXd back =
      extend(project(a.nodal_values, shells, 2), shells, 2);
  CHECK((back - a.nodal_values).cwiseAbs().maxCoeff() <= 1e-12 * 3.0);
}
