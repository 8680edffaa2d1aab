#include "mjscc/channel.hpp"

#include <cmath>
#include <iostream>

#include "mjscc/ops.hpp"

namespace mjscc::channel {

namespace {

Complex complex_normal(Rng& rng, double variance) {
  const double s = std::sqrt(variance / 2.0);
  const double re = rng.normal();
  const double im = rng.normal();
  return {s * re, s * im};
}

void warn_if_unnormalized(const Signal& q) {
  if (q.empty()) return;
  const double p = mean_power(q);
  if (std::abs(p - 1.0) > 1e-6) {
    std::cerr << "warning: channel input power " << p << " is not 1; realized SNR will differ\n";
  }
}

}  // namespace

ChannelKind parse_kind(const std::string& name) {
  if (name == "identity") return ChannelKind::identity;
  if (name == "awgn") return ChannelKind::awgn;
  if (name == "rayleigh") return ChannelKind::rayleigh;
  throw ContractError("unknown channel '" + name + "' (expected identity, awgn or rayleigh)");
}

std::string kind_name(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::identity: return "identity";
    case ChannelKind::awgn: return "awgn";
    case ChannelKind::rayleigh: return "rayleigh";
  }
  return "?";
}

double noise_variance(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  if (std::isnan(snr_db)) throw ContractError("noise_variance: SNR is NaN");
  return std::pow(10.0, -snr_db / 10.0);
}

double mean_power(const Signal& q) {
  double p = 0.0;
  for (const Complex& v : q) p += std::norm(v);
  return q.empty() ? 0.0 : p / static_cast<double>(q.size());
}

Signal awgn(const Signal& q, double snr_db, Rng& rng) {
  warn_if_unnormalized(q);
  const double var = noise_variance(snr_db);
  Signal r(q);
  if (var == 0.0) return r;
  for (Complex& v : r) v += complex_normal(rng, var);
  return r;
}

FadedSignal rayleigh(const Signal& q, double snr_db, Rng& rng, std::size_t block_len) {
  warn_if_unnormalized(q);
  const double var = noise_variance(snr_db);
  const std::size_t block = block_len == 0 ? q.size() : block_len;
  FadedSignal out{Signal(q.size()), Signal(q.size())};
  Complex h;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (i % block == 0) h = complex_normal(rng, 1.0);
    out.h[i] = h;
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    out.r[i] = out.h[i] * q[i];
    if (var > 0.0) out.r[i] += complex_normal(rng, var);
  }
  return out;
}

Signal mmse_equalize(const Signal& r, const Signal& h, double noise_var) {
  if (r.size() != h.size()) throw DimensionError("mmse_equalize: r and h differ in length");
  Signal out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double denom = std::norm(h[i]) + noise_var;
    out[i] = denom > 0.0 ? std::conj(h[i]) * r[i] / denom : Complex{};
  }
  return out;
}

ChannelRealization sample_realization(ChannelKind kind, double snr_db, std::size_t symbols,
                                      Rng& rng, std::size_t block_len) {
  ChannelRealization c;
  c.kind = kind;
  c.snr_db = snr_db;
  if (kind == ChannelKind::identity) return c;
  c.noise_var = noise_variance(snr_db);
  if (kind == ChannelKind::rayleigh) {
    const std::size_t block = block_len == 0 ? symbols : block_len;
    c.h.resize(symbols);
    Complex h;
    for (std::size_t i = 0; i < symbols; ++i) {
      if (i % block == 0) h = complex_normal(rng, 1.0);
      c.h[i] = h;
    }
  }
  c.noise.resize(symbols);
  for (Complex& n : c.noise) n = c.noise_var > 0.0 ? complex_normal(rng, c.noise_var) : Complex{};
  return c;
}

Tensor transmit(const Tensor& q, const ChannelRealization& channel) {
  if (channel.kind == ChannelKind::identity) return q;
  if (q.numel() != 2 * channel.noise.size()) {
    throw DimensionError("transmit: " + std::to_string(q.numel() / 2) + " symbols vs realization of " +
                         std::to_string(channel.noise.size()));
  }
  if (channel.kind == ChannelKind::awgn) {
    return ops::add(q, ops::reshape(from_signal(channel.noise), q.shape()));
  }
  // g (h q + n) with the MMSE gain g = conj(h) / (|h|^2 + sigma^2).
  std::vector<double> gain_h(q.numel());
  Signal gain_n(channel.noise.size());
  for (std::size_t i = 0; i < channel.h.size(); ++i) {
    const double denom = std::norm(channel.h[i]) + channel.noise_var;
    const Complex g = denom > 0.0 ? std::conj(channel.h[i]) / denom : Complex{};
    const Complex gh = g * channel.h[i];
    gain_h[2 * i] = gh.real();
    gain_h[2 * i + 1] = gh.imag();
    gain_n[i] = g * channel.noise[i];
  }
  return ops::add(ops::complex_mul_const(q, gain_h), ops::reshape(from_signal(gain_n), q.shape()));
}

Signal to_signal(const Tensor& pairs) {
  if (pairs.numel() % 2 != 0) throw DimensionError("to_signal: odd number of reals");
  const auto v = pairs.data();
  Signal s(v.size() / 2);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = {v[2 * i], v[2 * i + 1]};
  return s;
}

Tensor from_signal(const Signal& s) {
  std::vector<double> v(2 * s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    v[2 * i] = s[i].real();
    v[2 * i + 1] = s[i].imag();
  }
  return Tensor::from({s.size(), 2}, std::move(v));
}

}  // namespace mjscc::channel
