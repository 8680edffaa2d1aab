#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "mjscc/rng.hpp"
#include "mjscc/tensor.hpp"

// Complex baseband signals are std::vector<std::complex<double>>; in-graph
// signals are [k x 2] tensors of (re, im) pairs.
namespace mjscc::channel {

using Complex = std::complex<double>;
using Signal = std::vector<Complex>;

enum class ChannelKind { identity, awgn, rayleigh };

ChannelKind parse_kind(const std::string& name);
std::string kind_name(ChannelKind kind);

/// sigma^2 = 10^(-snr_db/10) for unit signal power; +inf dB gives 0.
double noise_variance(double snr_db);

/// r = q + n with n ~ CN(0, sigma^2). Warns on stderr when q is not
/// unit-power (the realized SNR would then differ from snr_db).
Signal awgn(const Signal& q, double snr_db, Rng& rng);

struct FadedSignal {
  Signal r;
  Signal h;  // per symbol
};

/// r_i = h_i q_i + n_i, h ~ CN(0,1) held constant over blocks of block_len
/// symbols (0 means one coefficient for the whole frame).
FadedSignal rayleigh(const Signal& q, double snr_db, Rng& rng, std::size_t block_len = 0);

/// conj(h) r / (|h|^2 + sigma^2).
Signal mmse_equalize(const Signal& r, const Signal& h, double noise_var);

/// Everything the receiver and CSI-ReST consume for one frame.
struct ChannelRealization {
  ChannelKind kind = ChannelKind::identity;
  double snr_db = 0.0;
  double noise_var = 0.0;
  Signal h;      // per symbol; empty unless Rayleigh
  Signal noise;  // per symbol; empty for identity
};

ChannelRealization sample_realization(ChannelKind kind, double snr_db, std::size_t symbols,
                                      Rng& rng, std::size_t block_len = 0);

/// Channel plus MMSE equalizer applied in-graph to q [k x 2]. Gradients flow
/// to q; the realization is a constant.
Tensor transmit(const Tensor& q, const ChannelRealization& channel);

Signal to_signal(const Tensor& pairs);
Tensor from_signal(const Signal& s);

/// mean |q_i|^2.
double mean_power(const Signal& q);

}  // namespace mjscc::channel
