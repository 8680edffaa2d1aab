#include <cmath>

#include "doctest.h"
#include "mjscc/gradcheck.hpp"
#include "mjscc/gssm.hpp"
#include "mjscc/macs.hpp"
#include "mjscc/ops.hpp"
#include "test_util.hpp"

using namespace mjscc;
using namespace mjscc::gssm;
using mjscc::testing::max_abs;
using mjscc::testing::max_abs_diff;
using mjscc::testing::random_values;

namespace {

Eigen::MatrixXd random_invertible(Rng& rng, std::size_t T) {
  Eigen::MatrixXd r(T, T);
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) r(i, j) = rng.uniform(-1.0, 1.0);
  r += 2.0 * static_cast<double>(T) * Eigen::MatrixXd::Identity(T, T) / 4.0;
  return r;
}

ScanScheme random_permutation(Rng& rng, std::size_t T) {
  std::vector<std::size_t> order(T);
  for (std::size_t i = 0; i < T; ++i) order[i] = i;
  for (std::size_t i = T; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return ScanScheme::permutation(order);
}

ssm::SsmDirectionParams direction(Rng& rng, std::size_t N) { return ssm::init_direction(N, 2, rng); }

std::vector<double> eigen_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Unrolled two-direction recurrence written without ScanScheme or ssm_scan.
std::vector<double> unrolled_dual(const ssm::SsmDirectionParams& p1, const ssm::SsmDirectionParams& p2,
                                  const std::vector<double>& z, std::size_t interval, double snr) {
  const std::size_t T = z.size();
  std::vector<double> u(T, 0.0);
  for (int dir = 0; dir < 2; ++dir) {
    const auto& p = dir == 0 ? p1 : p2;
    const std::size_t N = p.state_dim();
    double w = 0.0;
    for (std::size_t o = 0; o < p.g.size(); ++o) w += p.g[o] * p.h_d[o];
    std::vector<double> h(N, 0.0);
    h[0] = snr;
    for (std::size_t t = 1; t <= T; ++t) {
      const std::size_t pos = dir == 0 ? t - 1 : T - t;  // position in z read at step t
      const double xt = z[pos];
      const double delta = std::log1p(std::exp(xt * w + p.delta_bias));
      for (std::size_t n = 0; n < N; ++n) h[n] = std::exp(delta * p.a_tilde[n]) * h[n] + delta * p.h_b[n] * xt * xt;
      if (t % interval == 0) h[0] = snr;
      double y = 0.0;
      for (std::size_t n = 0; n < N; ++n) y += p.h_c[n] * xt * h[n];
      u[pos] += y;
    }
  }
  return u;
}

}  // namespace

TEST_CASE("scan exchange and recovery examples") {
  const std::vector<double> z{1, 2, 3};
  CHECK(scan_exchange(z, ScanScheme::reversal(3)) == std::vector<double>{3, 2, 1});
  CHECK(scan_exchange(z, ScanScheme::identity(3)) == z);
  CHECK(scan_recover(z, ScanScheme::identity(3)) == z);
  CHECK(scan_recover(scan_exchange(z, ScanScheme::reversal(3)), ScanScheme::reversal(3)) == z);

  const ScanScheme doubling = ScanScheme::general(2.0 * Eigen::MatrixXd::Identity(2, 2));
  CHECK(scan_exchange(std::vector<double>{1, 1}, doubling) == std::vector<double>{2, 2});
  CHECK(scan_recover(std::vector<double>{2, 4}, doubling) == std::vector<double>{1, 2});

  const Eigen::MatrixXd rev = ScanScheme::reversal(4).matrix();
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(rev(i, j) == ((i + 1) + (j + 1) == 5 ? 1.0 : 0.0));

  CHECK_THROWS_AS(scan_exchange(z, ScanScheme::reversal(4)), DimensionError);
  CHECK_THROWS_AS(ScanScheme::permutation({0, 0, 1}), ContractError);
  CHECK_THROWS_AS(ScanScheme::general(Eigen::MatrixXd::Zero(3, 3)), ContractError);
}

TEST_CASE("round trip is exact for permutations and tight for general schemes") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + rng.below(40);
    const std::vector<double> z = random_values(rng, T);
    const ScanScheme perm = random_permutation(rng, T);
    CHECK(scan_recover(scan_exchange(z, perm), perm) == z);
    CHECK((perm.matrix() * perm.inverse_matrix() - Eigen::MatrixXd::Identity(T, T)).isZero(0.0));

    const ScanScheme general = ScanScheme::general(random_invertible(rng, T));
    CHECK(max_abs_diff(scan_recover(scan_exchange(z, general), general), z) <= 1e-10);
    CHECK((general.matrix() * general.inverse_matrix() - Eigen::MatrixXd::Identity(T, T))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
  }
}

TEST_CASE("gssm_apply examples") {
  Rng rng(21);
  const std::size_t T = 6, N = 3;
  const auto params = direction(rng, N);
  const std::vector<double> z = random_values(rng, T);
  const std::vector<double> h0(N, 0.0);

  const GssmModule ident{params, ScanScheme::identity(T)};
  const auto direct = ssm::ssm_scan(ssm::generate_step_params(params, z), z, {h0, 0}).y;
  CHECK(gssm_apply(ident, z, h0) == direct);

  // Reversal: reverse, scan with parameters generated from the reversed input, reverse back.
  const GssmModule rev{params, ScanScheme::reversal(T)};
  std::vector<double> zr(z.rbegin(), z.rend());
  auto yr = ssm::ssm_scan(ssm::generate_step_params(params, zr), zr, {h0, 0}).y;
  std::reverse(yr.begin(), yr.end());
  CHECK(gssm_apply(rev, z, h0) == yr);

  // Zero input, h0 = e1: the recovered first column of the zero-input operator.
  std::vector<double> e1(N, 0.0);
  e1[0] = 1.0;
  const std::vector<double> x_zero(T, 0.0);
  const ssm::StepParams sp = ssm::generate_step_params(params, x_zero);
  const Eigen::VectorXd column = ssm::zero_input_oracle(sp).col(0);
  CHECK(max_abs_diff(gssm_apply(rev, x_zero, e1), scan_recover(eigen_vec(column), rev.scheme)) <= 1e-15);
}

TEST_CASE("GSSM is the similarity transform of the SSM matrix") {
  Rng rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = 1 + rng.below(24);
    const std::size_t N = 1 + rng.below(6);
    const auto params = direction(rng, N);
    const std::vector<double> z = random_values(rng, T, -1.5, 1.5);
    const Eigen::Map<const Eigen::VectorXd> zv(z.data(), T);
    for (const ScanScheme& scheme : {ScanScheme::identity(T), ScanScheme::reversal(T),
                                     ScanScheme::general(random_invertible(rng, T))}) {
      const GssmModule module{params, scheme};
      const std::vector<double> y = gssm_apply(module, z, std::vector<double>(N, 0.0));
      const Eigen::VectorXd uz = gssm_matrix(module, z) * zv;
      CHECK(max_abs_diff(y, eigen_vec(uz)) <= 1e-9 * (1 + max_abs(y)));
    }
  }
}

TEST_CASE("reversed-direction matrix entries follow the mirrored index formula") {
  Rng rng(44);
  const std::size_t T = 8, N = 3;
  const auto params = direction(rng, N);
  const std::vector<double> z = random_values(rng, T);
  const GssmModule module{params, ScanScheme::reversal(T)};
  const Eigen::MatrixXd u = gssm_matrix(module, z);
  const ssm::StepParams sp = ssm::generate_step_params(params, scan_exchange(z, module.scheme));
  for (std::size_t i = 1; i <= T; ++i) {
    for (std::size_t j = 1; j <= T; ++j) {
      const std::size_t ri = T + 1 - i, rj = T + 1 - j;
      double expected = 0.0;
      if (ri >= rj) {
        const std::vector<double> a = ssm::transition_product(sp, ri, rj);
        for (std::size_t n = 0; n < N; ++n) expected += sp.c_at(ri, n) * a[n] * sp.b_at(rj, n);
      }
      CHECK(std::abs(u(i - 1, j - 1) - expected) <= 1e-12);
    }
  }
}

TEST_CASE("dual GSSM with CSI-ReST examples") {
  Rng rng(5);
  const std::size_t N = 3;
  const CsiRestConfig on{true, 2, 1.0};
  const CsiRestConfig off{false, 2, 1.0};

  const std::size_t T = 4;
  const GssmModule m1{direction(rng, N), ScanScheme::identity(T)};
  const GssmModule m2{direction(rng, N), ScanScheme::reversal(T)};
  const std::vector<double> zeros(T, 0.0);
  CHECK(dual_gssm_csi(m1, m2, zeros, off, 10.0) == zeros);
  // C_t is proportional to x_t, so a silent input reads nothing out of the state.
  CHECK(max_abs(dual_gssm_csi(m1, m2, zeros, on, 10.0)) == 0.0);

  const std::vector<double> z = random_values(rng, T);
  const std::vector<double> u = dual_gssm_csi(m1, m2, z, on, 10.0);
  CHECK(max_abs_diff(u, unrolled_dual(m1.params, m2.params, z, 2, 10.0)) <= 1e-12);

  // Length one: both directions are the same single-step SSM on z.
  const GssmModule s1{m1.params, ScanScheme::identity(1)};
  const GssmModule s2{m2.params, ScanScheme::reversal(1)};
  const std::vector<double> one{0.8};
  const std::vector<double> h0(N, 0.0);
  const double expected = gssm_apply(s1, one, h0)[0] + gssm_apply(s2, one, h0)[0];
  CHECK(dual_gssm_csi(s1, s2, one, off, 3.0)[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("CSI influence exists only when CSI-ReST is enabled") {
  Rng rng(6);
  const std::size_t T = 16, N = 4;
  const GssmModule m1{direction(rng, N), ScanScheme::identity(T)};
  const GssmModule m2{direction(rng, N), ScanScheme::reversal(T)};
  const std::vector<double> z = random_values(rng, T);
  const CsiRestConfig on{true, 4, 1.0};
  const CsiRestConfig off{false, 4, 1.0};
  const auto a = dual_gssm_csi(m1, m2, z, on, 5.0);
  const auto b = dual_gssm_csi(m1, m2, z, on, 5.001);
  CHECK(max_abs_diff(a, b) > 0.0);
  CHECK(dual_gssm_csi(m1, m2, z, off, 5.0) == dual_gssm_csi(m1, m2, z, off, 17.0));
}

TEST_CASE("receptive fields: triangular per direction, full for the pair") {
  Rng rng(16);
  const std::size_t T = 16, N = 4;
  const GssmModule m1{direction(rng, N), ScanScheme::identity(T)};
  const GssmModule m2{direction(rng, N), ScanScheme::reversal(T)};
  const std::vector<double> z = random_values(rng, T);
  const std::vector<double> h0(N, 0.0);
  const Eigen::MatrixXd s1 = receptive_field_map([&](auto v) { return gssm_apply(m1, v, h0); }, z);
  const Eigen::MatrixXd s2 = receptive_field_map([&](auto v) { return gssm_apply(m2, v, h0); }, z);
  const CsiRestConfig csi{true, 64, 1.0};
  const Eigen::MatrixXd s = receptive_field_map([&](auto v) { return dual_gssm_csi(m1, m2, v, csi, 10.0); }, z);
  for (Eigen::Index t = 0; t < 16; ++t) {
    for (Eigen::Index k = 0; k < 16; ++k) {
      CHECK((s1(t, k) > 1e-12) == (k <= t));
      CHECK((s2(t, k) > 1e-12) == (k >= t));
      CHECK(s(t, k) > 1e-12);
    }
  }
}

TEST_CASE("differentiable dual GSSM matches the reference per channel") {
  Rng rng(90);
  const std::size_t C = 4, T = 10, N = 3, O = 2;
  const ssm::SsmBank b1 = ssm::SsmBank::init(C, N, O, rng);
  const ssm::SsmBank b2 = ssm::SsmBank::init(C, N, O, rng);
  const Tensor z = mjscc::testing::random_tensor(rng, {C, T}, false);
  for (bool enabled : {false, true}) {
    const CsiRestConfig csi{enabled, 3, 1.0};
    const Tensor u = dual_gssm_forward(z, b1, b2, csi, 12.0);
    for (std::size_t c = 0; c < C; ++c) {
      const std::vector<double> row(z.data().begin() + c * T, z.data().begin() + (c + 1) * T);
      const GssmModule m1{b1.channel(c), ScanScheme::identity(T)};
      const GssmModule m2{b2.channel(c), ScanScheme::reversal(T)};
      const auto ref = dual_gssm_csi(m1, m2, row, csi, 12.0);
      CHECK(max_abs_diff(std::span<const double>(u.data().data() + c * T, T), ref) <= 1e-13);
    }
  }

  // General schemes route through a dense product in the differentiable path.
  const ScanScheme general = ScanScheme::general(random_invertible(rng, T));
  const Tensor y = gssm_forward(z, b1, general, {});
  const std::vector<double> row0(z.data().begin(), z.data().begin() + T);
  const auto ref0 = gssm_apply({b1.channel(0), general}, row0, std::vector<double>(N, 0.0));
  CHECK(max_abs_diff(std::span<const double>(y.data().data(), T), ref0) <= 1e-12);
}

TEST_CASE("CSI-ReST adds no multiply-accumulates") {
  Rng rng(91);
  const ssm::SsmBank b1 = ssm::SsmBank::init(6, 4, 2, rng);
  const ssm::SsmBank b2 = ssm::SsmBank::init(6, 4, 2, rng);
  const Tensor z = mjscc::testing::random_tensor(rng, {6, 20}, false);
  MacCounter with, without;
  {
    macs::Recording rec(with);
    dual_gssm_forward(z, b1, b2, {true, 4, 1.0}, 13.0);
  }
  {
    macs::Recording rec(without);
    dual_gssm_forward(z, b1, b2, {false, 4, 1.0}, 13.0);
  }
  CHECK(with == without);
  CHECK(with.total() == 2ull * 6 * 20 * ssm::scan_step_macs(4, 2));
}

TEST_CASE("dual GSSM gradients") {
  Rng rng(92);
  const std::size_t C = 2, T = 7, N = 3, O = 2;
  const ssm::SsmBank b1 = ssm::SsmBank::init(C, N, O, rng);
  const ssm::SsmBank b2 = ssm::SsmBank::init(C, N, O, rng);
  Tensor z = mjscc::testing::random_tensor(rng, {C, T});
  const Tensor w = mjscc::testing::random_tensor(rng, {C, T}, false, 0.5, 1.5);
  const CsiRestConfig csi{true, 3, 0.1};
  auto loss = [&] { return ops::sum(ops::mul(dual_gssm_forward(z, b1, b2, csi, 10.0), w)); };
  std::vector<Tensor> params = b1.tensors();
  for (const Tensor& t : b2.tensors()) params.push_back(t);
  params.push_back(z);
  CHECK(grad_check_params(loss, params) <= 1e-4);
}
