#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mjscc/channel.hpp"
#include "mjscc/codec.hpp"
#include "mjscc/macs.hpp"

namespace mjscc::train {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState zeros(const std::vector<Tensor>& params);
  codec::OptimizerBlob blob() const { return {step, m, v}; }
  static AdamState from_blob(const codec::OptimizerBlob& b) { return {b.step, b.m, b.v}; }
};

/// One bias-corrected Adam update of `params` in place from `grads`.
void adam_step(const std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const AdamOptions& opt);

enum class LossKind { mse, msssim };

LossKind parse_loss(const std::string& name);
std::string loss_name(LossKind kind);

struct TrainOptions {
  std::size_t steps = 2000;
  std::size_t batch_size = 4;
  AdamOptions adam;
  LossKind loss = LossKind::mse;
  /// SNR is drawn uniformly from [snr_lo, snr_hi] dB per step; equal bounds fix it.
  double snr_lo = 10.0;
  double snr_hi = 10.0;
  channel::ChannelKind channel = channel::ChannelKind::awgn;
  std::size_t block_len = 0;
  std::uint64_t seed = 1;
};

struct StepLog {
  std::size_t step = 0;  // 1-based
  double loss = 0.0;
  double snr_db = 0.0;
  double lr = 0.0;
};

/// `step, loss, snr_db, lr`
std::string format_log_line(const StepLog& s);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Continues from `state.step`; every draw for step s comes from a stream
/// derived from (seed, s), so a resumed run matches an uninterrupted one.
/// Calls `on_step` after each update. Throws DivergenceError on a non-finite loss.
void train(const codec::CodecParams& model, const std::vector<Tensor>& images,
           const TrainOptions& opt, AdamState& state,
           const std::function<void(const StepLog&)>& on_step = {});

/// Loss for one image through encode -> channel -> equalize -> decode.
Tensor image_loss(const codec::CodecParams& model, const Tensor& image,
                  const channel::ChannelRealization& realization, LossKind loss);

/// encode -> channel -> equalize -> decode with no graph, clamped to [0,1].
/// Both ends are told `inject_snr_db` when given, else the true SNR.
Tensor transmit_image(const codec::CodecParams& model, const Tensor& image,
                      const channel::ChannelRealization& realization,
                      std::optional<double> inject_snr_db = std::nullopt);

struct SweepOptions {
  std::vector<double> snrs;
  channel::ChannelKind channel = channel::ChannelKind::awgn;
  std::size_t block_len = 0;
  std::size_t trials = 1;
  std::optional<double> inject_snr_db;
  std::uint64_t seed = 1;
};

/// Means over images x trials at one SNR.
struct SweepRow {
  double snr_db = 0.0;
  double mse = 0.0;
  double psnr_db = 0.0;
  double msssim = 0.0;
  double msssim_db = 0.0;
  std::size_t transmissions = 0;
};

/// The channel draw for (SNR index s, image i, trial k) comes from
/// Rng(seed).fork(s).fork(i * trials + k), independent of the injected value.
std::vector<SweepRow> evaluate_sweep(const codec::CodecParams& model,
                                     const std::vector<Tensor>& images, const SweepOptions& opt);

std::string format_sweep_csv(const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Complexity accounting.

/// Closed-form MACs per module for one encode + decode of one image.
MacCounter analytic_macs(const codec::ModelConfig& cfg);
/// MACs tallied by the kernels while running encode + decode once.
MacCounter instrumented_macs(const codec::CodecParams& model, double snr_db);
/// Closed-form trainable scalar count.
std::size_t analytic_param_count(const codec::ModelConfig& cfg);

}  // namespace mjscc::train
