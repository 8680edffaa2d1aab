#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mjscc/ssm.hpp"
#include "mjscc/tensor.hpp"

namespace mjscc::gssm {

/// Invertible reordering/transformation of a length-T sequence: x = R z.
///
/// Permutation schemes store an index order with x[i] = z[order[i]] and never
/// materialize R. General schemes hold a dense invertible R and its inverse;
/// they exist for checking the matrix identities, not for the network.
class ScanScheme {
 public:
  enum class Kind { permutation, general };

  static ScanScheme identity(std::size_t length);
  /// R[i, j] = 1 iff i + j = T + 1 (1-based).
  static ScanScheme reversal(std::size_t length);
  static ScanScheme permutation(std::vector<std::size_t> order);
  /// Throws ContractError if R is singular (or not square).
  static ScanScheme general(Eigen::MatrixXd r);

  Kind kind() const { return kind_; }
  std::size_t length() const { return length_; }
  const std::vector<std::size_t>& order() const;
  std::vector<std::size_t> inverse_order() const;

  Eigen::MatrixXd matrix() const;
  Eigen::MatrixXd inverse_matrix() const;

 private:
  ScanScheme() = default;
  Kind kind_ = Kind::permutation;
  std::size_t length_ = 0;
  std::vector<std::size_t> order_;
  Eigen::MatrixXd r_;
  Eigen::MatrixXd r_inv_;
};

/// x = R z.
std::vector<double> scan_exchange(std::span<const double> z, const ScanScheme& scheme);
/// y_kappa = R^{-1} y (the transpose permutation for permutation schemes).
std::vector<double> scan_recover(std::span<const double> y, const ScanScheme& scheme);

/// Periodic SNR injection into state coordinate 0.
struct CsiRestConfig {
  bool enabled = true;
  std::size_t interval = 64;  // l_s
  double snr_scale = 1.0;     // injected value = snr_scale * snr_db

  void validate() const;
  ssm::CsiInjection injection(double snr_db) const;
};

struct GssmModule {
  ssm::SsmDirectionParams params;
  ScanScheme scheme;
};

/// R^{-1} ssm(R z) with step parameters generated from R z in scan order.
/// `edit` runs after each state update (see ssm::ssm_scan).
std::vector<double> gssm_apply(const GssmModule& module, std::span<const double> z,
                               std::span<const double> h0, const ssm::StateEdit& edit = {});

/// U = R^{-1} M R where M is the SSM matrix for the parameters generated from R z.
Eigen::MatrixXd gssm_matrix(const GssmModule& module, std::span<const double> z);

/// Two GSSM directions with CSI-ReST: u = R1^{-1} y1 + R2^{-1} y2. With
/// csi.enabled = false no state is ever written (plain dual GSSM).
std::vector<double> dual_gssm_csi(const GssmModule& first, const GssmModule& second,
                                  std::span<const double> z, const CsiRestConfig& csi,
                                  double snr_db);

using SequenceMap = std::function<std::vector<double>(std::span<const double>)>;

/// S[t, s] = |d u_t / d z_s| by central differences around `z`.
Eigen::MatrixXd receptive_field_map(const SequenceMap& forward, std::span<const double> z,
                                    double eps = 1e-5);

// ---------------------------------------------------------------------------
// Differentiable versions over C channels (rows of a [C x T] tensor).

Tensor scan_exchange(const Tensor& z, const ScanScheme& scheme);
Tensor scan_recover(const Tensor& y, const ScanScheme& scheme);

/// Per-channel GSSM: scan_recover(selective_scan(scan_exchange(z))).
Tensor gssm_forward(const Tensor& z, const ssm::SsmBank& bank, const ScanScheme& scheme,
                    const ssm::CsiInjection& csi);

/// Identity direction plus reversal direction, summed in that order.
Tensor dual_gssm_forward(const Tensor& z, const ssm::SsmBank& forward_bank,
                         const ssm::SsmBank& reverse_bank, const CsiRestConfig& csi,
                         double snr_db);

}  // namespace mjscc::gssm
