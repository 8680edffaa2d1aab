#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mjscc/rng.hpp"
#include "mjscc/tensor.hpp"

// Selective state-space operator for a single scalar sequence.
//
// Step indices follow the recurrence convention: step t = 1..T consumes x[t-1],
// h_0 is the initial state. The state matrix is diagonal, so A_t is stored as
// its N diagonal entries.
namespace mjscc::ssm {

/// The six learnable quantities generating (A_t, B_t, C_t) for one direction of
/// one feature channel:
///   delta_t = softplus(x_t * (g . h_d) + delta_bias)
///   A_t = exp(delta_t * a_tilde), B_t = delta_t * h_b * x_t, C_t = (h_c * x_t)^T
struct SsmDirectionParams {
  std::vector<double> a_tilde;  // N, diagonal of the state matrix
  std::vector<double> g;        // O
  std::vector<double> h_d;      // O
  double delta_bias = 0.0;
  std::vector<double> h_b;  // N
  std::vector<double> h_c;  // N

  std::size_t state_dim() const { return a_tilde.size(); }
  std::size_t gen_dim() const { return g.size(); }
  /// Throws DimensionError on inconsistent sizes.
  void validate() const;
};

/// a_tilde[n] = -(n+1); softplus(delta_bias) log-uniform in [1e-3, 1e-1];
/// g, h_d, h_b, h_c uniform in +-1/sqrt(fan_in).
SsmDirectionParams init_direction(std::size_t state_dim, std::size_t gen_dim, Rng& rng);

struct StepParams {
  std::size_t length = 0;
  std::size_t state_dim = 0;
  std::vector<double> a;  // [T x N], diagonal of A_t
  std::vector<double> b;  // [T x N]
  std::vector<double> c;  // [T x N]

  double a_at(std::size_t t, std::size_t n) const { return a[(t - 1) * state_dim + n]; }
  double b_at(std::size_t t, std::size_t n) const { return b[(t - 1) * state_dim + n]; }
  double c_at(std::size_t t, std::size_t n) const { return c[(t - 1) * state_dim + n]; }
};

struct HiddenState {
  std::vector<double> h;
  std::size_t t = 0;
};

/// Called after h_t is computed and before y_t is read.
using StateEdit = std::function<void(std::size_t t, std::span<double> h)>;

/// Sets h[0] = value whenever t % interval == 0 (the periodic CSI refresh).
StateEdit csi_refresh(std::size_t interval, double value);

struct ScanOutput {
  std::vector<double> y;
  HiddenState final_state;
};

StepParams generate_step_params(const SsmDirectionParams& params, std::span<const double> x);

/// h_t = A_t h_{t-1} + B_t x_t, edit(t, h_t), y_t = C_t h_t.
ScanOutput ssm_scan(const StepParams& steps, std::span<const double> x, const HiddenState& h0,
                    const StateEdit& edit = {});

inline constexpr std::size_t kOracleMaxLength = 512;

class OracleLimitError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Cumulative product A_i ... A_{j+1} (diagonal) for i >= j; identity for i == j.
std::vector<double> transition_product(const StepParams& steps, std::size_t i, std::size_t j);

/// Dense M with M(i-1, j-1) = C_i A^x_{i:j} B_j, so y = M x when h_0 = 0.
Eigen::MatrixXd ssm_matrix_oracle(const StepParams& steps);

/// Row t-1 holds C_t A^x_{t:0}; the zero-input response is rows * h_0.
Eigen::MatrixXd zero_input_oracle(const StepParams& steps);

// ---------------------------------------------------------------------------
// Differentiable multi-channel scan used by the network.

/// Direction parameters for C independent channels, stacked row-wise.
struct SsmBank {
  Tensor a_tilde;     // [C x N]
  Tensor g;           // [C x O]
  Tensor h_d;         // [C x O]
  Tensor delta_bias;  // [C]
  Tensor h_b;         // [C x N]
  Tensor h_c;         // [C x N]

  std::size_t channels() const { return a_tilde.dim(0); }
  std::size_t state_dim() const { return a_tilde.dim(1); }
  std::size_t gen_dim() const { return g.dim(1); }
  SsmDirectionParams channel(std::size_t c) const;
  std::vector<Tensor> tensors() const { return {a_tilde, g, h_d, delta_bias, h_b, h_c}; }

  static SsmBank init(std::size_t channels, std::size_t state_dim, std::size_t gen_dim, Rng& rng);
};

/// State-coordinate-0 injection: h_{0,0} = value and h_{t,0} = value whenever
/// t % interval == 0. Disabled means h_0 = 0 and no edits.
struct CsiInjection {
  bool enabled = false;
  std::size_t interval = 64;
  double value = 0.0;
};

/// Runs every row of x [C x T] through its own channel of `bank`. Parameter
/// generation, recurrence and injection happen in one graph node with a
/// hand-written adjoint.
Tensor selective_scan(const Tensor& x, const SsmBank& bank, const CsiInjection& csi);

/// MACs of one scan step for one channel: N (A h) + N (B x) + N (C h) + O + 1.
inline std::uint64_t scan_step_macs(std::size_t state_dim, std::size_t gen_dim) {
  return 3 * state_dim + gen_dim + 1;
}

}  // namespace mjscc::ssm
