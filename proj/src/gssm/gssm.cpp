#include "mjscc/gssm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mjscc/ops.hpp"

namespace mjscc::gssm {

namespace {

void check_length(std::size_t got, const ScanScheme& scheme, const char* op) {
  if (got != scheme.length()) {
    throw DimensionError(std::string(op) + ": sequence length " + std::to_string(got) +
                         " vs scheme length " + std::to_string(scheme.length()));
  }
}

std::vector<double> apply_dense(const Eigen::MatrixXd& m, std::span<const double> v) {
  const Eigen::Map<const Eigen::VectorXd> in(v.data(), static_cast<Eigen::Index>(v.size()));
  const Eigen::VectorXd out = m * in;
  return {out.data(), out.data() + out.size()};
}

Tensor dense_tensor(const Eigen::MatrixXd& m) {
  std::vector<double> values(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      values[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return Tensor::from({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                      std::move(values));
}

// Row-wise gather of a [C x T] tensor: out[c, i] = z[c, order[i]].
Tensor permute_rows(const Tensor& z, const std::vector<std::size_t>& order) {
  const std::size_t C = z.dim(0), T = z.dim(1);
  std::vector<std::size_t> index(C * T);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < T; ++i) index[c * T + i] = c * T + order[i];
  return ops::gather(z, index, {C, T});
}

}  // namespace

ScanScheme ScanScheme::identity(std::size_t length) {
  std::vector<std::size_t> order(length);
  std::iota(order.begin(), order.end(), 0);
  return permutation(std::move(order));
}

ScanScheme ScanScheme::reversal(std::size_t length) {
  std::vector<std::size_t> order(length);
  for (std::size_t i = 0; i < length; ++i) order[i] = length - 1 - i;
  return permutation(std::move(order));
}

ScanScheme ScanScheme::permutation(std::vector<std::size_t> order) {
  std::vector<bool> seen(order.size(), false);
  for (std::size_t v : order) {
    if (v >= order.size() || seen[v]) throw ContractError("ScanScheme: order is not a permutation");
    seen[v] = true;
  }
  ScanScheme s;
  s.kind_ = Kind::permutation;
  s.length_ = order.size();
  s.order_ = std::move(order);
  return s;
}

ScanScheme ScanScheme::general(Eigen::MatrixXd r) {
  if (r.rows() != r.cols() || r.rows() == 0) throw ContractError("ScanScheme: R must be square");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(r);
  if (!lu.isInvertible()) throw ContractError("ScanScheme: R is singular");
  ScanScheme s;
  s.kind_ = Kind::general;
  s.length_ = static_cast<std::size_t>(r.rows());
  s.r_inv_ = lu.inverse();
  s.r_ = std::move(r);
  return s;
}

const std::vector<std::size_t>& ScanScheme::order() const {
  if (kind_ != Kind::permutation) throw ContractError("ScanScheme: order() on a general scheme");
  return order_;
}

std::vector<std::size_t> ScanScheme::inverse_order() const {
  const auto& fwd = order();
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
  return inv;
}

Eigen::MatrixXd ScanScheme::matrix() const {
  if (kind_ == Kind::general) return r_;
  const auto T = static_cast<Eigen::Index>(length_);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(T, T);
  for (std::size_t i = 0; i < length_; ++i)
    r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(order_[i])) = 1.0;
  return r;
}

Eigen::MatrixXd ScanScheme::inverse_matrix() const {
  if (kind_ == Kind::general) return r_inv_;
  return matrix().transpose();
}

std::vector<double> scan_exchange(std::span<const double> z, const ScanScheme& scheme) {
  check_length(z.size(), scheme, "scan_exchange");
  if (scheme.kind() == ScanScheme::Kind::general) return apply_dense(scheme.matrix(), z);
  const auto& order = scheme.order();
  std::vector<double> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[order[i]];
  return x;
}

std::vector<double> scan_recover(std::span<const double> y, const ScanScheme& scheme) {
  check_length(y.size(), scheme, "scan_recover");
  if (scheme.kind() == ScanScheme::Kind::general) return apply_dense(scheme.inverse_matrix(), y);
  const auto& order = scheme.order();
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[order[i]] = y[i];
  return out;
}

void CsiRestConfig::validate() const {
  if (interval == 0) throw ContractError("CSI-ReST interval l_s must be >= 1");
  if (!std::isfinite(snr_scale)) throw ContractError("CSI-ReST snr_scale must be finite");
}

ssm::CsiInjection CsiRestConfig::injection(double snr_db) const {
  return {enabled, interval, snr_scale * snr_db};
}

std::vector<double> gssm_apply(const GssmModule& module, std::span<const double> z,
                               std::span<const double> h0, const ssm::StateEdit& edit) {
  const std::vector<double> x = scan_exchange(z, module.scheme);
  const ssm::StepParams steps = ssm::generate_step_params(module.params, x);
  const ssm::HiddenState initial{std::vector<double>(h0.begin(), h0.end()), 0};
  const ssm::ScanOutput out = ssm::ssm_scan(steps, x, initial, edit);
  return scan_recover(out.y, module.scheme);
}

Eigen::MatrixXd gssm_matrix(const GssmModule& module, std::span<const double> z) {
  const std::vector<double> x = scan_exchange(z, module.scheme);
  const Eigen::MatrixXd m = ssm::ssm_matrix_oracle(ssm::generate_step_params(module.params, x));
  return module.scheme.inverse_matrix() * m * module.scheme.matrix();
}

std::vector<double> dual_gssm_csi(const GssmModule& first, const GssmModule& second,
                                  std::span<const double> z, const CsiRestConfig& csi,
                                  double snr_db) {
  csi.validate();
  if (!std::isfinite(snr_db)) throw ContractError("dual_gssm_csi: SNR must be finite");
  const double value = csi.snr_scale * snr_db;
  std::vector<double> u(z.size(), 0.0);
  for (const GssmModule* module : {&first, &second}) {
    std::vector<double> h0(module->params.state_dim(), 0.0);
    ssm::StateEdit edit;
    if (csi.enabled) {
      h0[0] = value;
      edit = ssm::csi_refresh(csi.interval, value);
    }
    const std::vector<double> y = gssm_apply(*module, z, h0, edit);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += y[i];
  }
  return u;
}

Eigen::MatrixXd receptive_field_map(const SequenceMap& forward, std::span<const double> z,
                                    double eps) {
  const auto T = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(T, T);
  std::vector<double> probe(z.begin(), z.end());
  for (std::size_t col = 0; col < z.size(); ++col) {
    probe[col] = z[col] + eps;
    const std::vector<double> plus = forward(probe);
    probe[col] = z[col] - eps;
    const std::vector<double> minus = forward(probe);
    probe[col] = z[col];
    for (std::size_t row = 0; row < z.size(); ++row) {
      s(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
          std::abs(plus[row] - minus[row]) / (2.0 * eps);
    }
  }
  return s;
}

Tensor scan_exchange(const Tensor& z, const ScanScheme& scheme) {
  check_length(z.dim(1), scheme, "scan_exchange");
  if (scheme.kind() == ScanScheme::Kind::general) {
    return ops::matmul(z, dense_tensor(scheme.matrix().transpose()));
  }
  return permute_rows(z, scheme.order());
}

Tensor scan_recover(const Tensor& y, const ScanScheme& scheme) {
  check_length(y.dim(1), scheme, "scan_recover");
  if (scheme.kind() == ScanScheme::Kind::general) {
    return ops::matmul(y, dense_tensor(scheme.inverse_matrix().transpose()));
  }
  return permute_rows(y, scheme.inverse_order());
}

Tensor gssm_forward(const Tensor& z, const ssm::SsmBank& bank, const ScanScheme& scheme,
                    const ssm::CsiInjection& csi) {
  return scan_recover(ssm::selective_scan(scan_exchange(z, scheme), bank, csi), scheme);
}

Tensor dual_gssm_forward(const Tensor& z, const ssm::SsmBank& forward_bank,
                         const ssm::SsmBank& reverse_bank, const CsiRestConfig& csi,
                         double snr_db) {
  csi.validate();
  const std::size_t T = z.dim(1);
  const ssm::CsiInjection injection = csi.injection(snr_db);
  const Tensor forward = ssm::selective_scan(z, forward_bank, injection);
  const Tensor reverse = gssm_forward(z, reverse_bank, ScanScheme::reversal(T), injection);
  return ops::add(forward, reverse);
}

}  // namespace mjscc::gssm
