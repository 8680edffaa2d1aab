#include "mjscc/ssm.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "mjscc/macs.hpp"

namespace mjscc::ssm {

namespace {

double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

// out[n] = exp(delta * a[n]), vectorized.
void gates(double delta, const double* a, std::size_t n, double* out) {
  using Array = Eigen::Array<double, Eigen::Dynamic, 1>;
  const auto size = static_cast<Eigen::Index>(n);
  Eigen::Map<Array>(out, size) = (delta * Eigen::Map<const Array>(a, size)).exp();
}

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_oracle_length(std::size_t length) {
  if (length > kOracleMaxLength) {
    throw OracleLimitError("oracle supports T <= " + std::to_string(kOracleMaxLength) + ", got " +
                           std::to_string(length));
  }
}

// softplus^{-1}(y) = y + log(-expm1(-y))
double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

}  // namespace

void SsmDirectionParams::validate() const {
  const std::size_t n = a_tilde.size();
  if (n == 0 || g.empty()) throw DimensionError("ssm params: N and O must be >= 1");
  if (h_d.size() != g.size()) throw DimensionError("ssm params: g and h_d lengths differ");
  if (h_b.size() != n || h_c.size() != n) throw DimensionError("ssm params: h_b/h_c must have N entries");
}

SsmDirectionParams init_direction(std::size_t state_dim, std::size_t gen_dim, Rng& rng) {
  SsmDirectionParams p;
  p.a_tilde.resize(state_dim);
  for (std::size_t n = 0; n < state_dim; ++n) p.a_tilde[n] = -static_cast<double>(n + 1);
  const double step = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
  p.delta_bias = inverse_softplus(step);
  const double gen_bound = 1.0 / std::sqrt(static_cast<double>(gen_dim));
  p.g.resize(gen_dim);
  p.h_d.resize(gen_dim);
  for (double& v : p.g) v = rng.uniform(-1.0, 1.0);
  for (double& v : p.h_d) v = rng.uniform(-gen_bound, gen_bound);
  p.h_b.resize(state_dim);
  p.h_c.resize(state_dim);
  for (double& v : p.h_b) v = rng.uniform(-1.0, 1.0);
  for (double& v : p.h_c) v = rng.uniform(-1.0, 1.0);
  return p;
}

StateEdit csi_refresh(std::size_t interval, double value) {
  if (interval == 0) throw ContractError("csi_refresh: interval must be >= 1");
  return [interval, value](std::size_t t, std::span<double> h) {
    if (t % interval == 0) h[0] = value;
  };
}

StepParams generate_step_params(const SsmDirectionParams& params, std::span<const double> x) {
  params.validate();
  const std::size_t n_state = params.state_dim();
  const double w = dot(params.g, params.h_d);
  StepParams sp;
  sp.length = x.size();
  sp.state_dim = n_state;
  sp.a.resize(x.size() * n_state);
  sp.b.resize(x.size() * n_state);
  sp.c.resize(x.size() * n_state);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = softplus(x[i] * w + params.delta_bias);
    for (std::size_t n = 0; n < n_state; ++n) {
      sp.a[i * n_state + n] = std::exp(delta * params.a_tilde[n]);
      sp.b[i * n_state + n] = delta * params.h_b[n] * x[i];
      sp.c[i * n_state + n] = params.h_c[n] * x[i];
    }
  }
  return sp;
}

ScanOutput ssm_scan(const StepParams& steps, std::span<const double> x, const HiddenState& h0,
                    const StateEdit& edit) {
  if (x.size() != steps.length) {
    throw DimensionError("ssm_scan: sequence length " + std::to_string(x.size()) +
                         " vs step params " + std::to_string(steps.length));
  }
  if (h0.h.size() != steps.state_dim) throw DimensionError("ssm_scan: h0 has wrong state size");
  const std::size_t n_state = steps.state_dim;
  ScanOutput out;
  out.y.resize(steps.length);
  std::vector<double> h = h0.h;
  for (std::size_t t = 1; t <= steps.length; ++t) {
    const double xt = x[t - 1];
    for (std::size_t n = 0; n < n_state; ++n) h[n] = steps.a_at(t, n) * h[n] + steps.b_at(t, n) * xt;
    if (edit) edit(t, h);
    double yt = 0.0;
    for (std::size_t n = 0; n < n_state; ++n) yt += steps.c_at(t, n) * h[n];
    out.y[t - 1] = yt;
  }
  out.final_state = {std::move(h), steps.length};
  return out;
}

std::vector<double> transition_product(const StepParams& steps, std::size_t i, std::size_t j) {
  std::vector<double> prod(steps.state_dim, 1.0);
  if (i < j) {
    std::fill(prod.begin(), prod.end(), 0.0);
    return prod;
  }
  for (std::size_t k = j + 1; k <= i; ++k)
    for (std::size_t n = 0; n < steps.state_dim; ++n) prod[n] *= steps.a_at(k, n);
  return prod;
}

Eigen::MatrixXd ssm_matrix_oracle(const StepParams& steps) {
  check_oracle_length(steps.length);
  const auto T = static_cast<Eigen::Index>(steps.length);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(T, T);
  for (std::size_t i = 1; i <= steps.length; ++i) {
    for (std::size_t j = 1; j <= i; ++j) {
      const std::vector<double> a = transition_product(steps, i, j);
      double v = 0.0;
      for (std::size_t n = 0; n < steps.state_dim; ++n) v += steps.c_at(i, n) * a[n] * steps.b_at(j, n);
      m(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) = v;
    }
  }
  return m;
}

Eigen::MatrixXd zero_input_oracle(const StepParams& steps) {
  check_oracle_length(steps.length);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(steps.length),
                    static_cast<Eigen::Index>(steps.state_dim));
  for (std::size_t t = 1; t <= steps.length; ++t) {
    const std::vector<double> a = transition_product(steps, t, 0);
    for (std::size_t n = 0; n < steps.state_dim; ++n) {
      v(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(n)) = steps.c_at(t, n) * a[n];
    }
  }
  return v;
}

// ---------------------------------------------------------------------------

SsmDirectionParams SsmBank::channel(std::size_t c) const {
  const std::size_t n = state_dim();
  const std::size_t o = gen_dim();
  auto row = [](const Tensor& t, std::size_t r, std::size_t width) {
    const auto d = t.data();
    return std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(r * width),
                               d.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
  };
  SsmDirectionParams p;
  p.a_tilde = row(a_tilde, c, n);
  p.g = row(g, c, o);
  p.h_d = row(h_d, c, o);
  p.delta_bias = delta_bias.at(c);
  p.h_b = row(h_b, c, n);
  p.h_c = row(h_c, c, n);
  return p;
}

SsmBank SsmBank::init(std::size_t channels, std::size_t state_dim, std::size_t gen_dim, Rng& rng) {
  std::vector<double> a, g, hd, delta, hb, hc;
  for (std::size_t c = 0; c < channels; ++c) {
    const SsmDirectionParams p = init_direction(state_dim, gen_dim, rng);
    a.insert(a.end(), p.a_tilde.begin(), p.a_tilde.end());
    g.insert(g.end(), p.g.begin(), p.g.end());
    hd.insert(hd.end(), p.h_d.begin(), p.h_d.end());
    delta.push_back(p.delta_bias);
    hb.insert(hb.end(), p.h_b.begin(), p.h_b.end());
    hc.insert(hc.end(), p.h_c.begin(), p.h_c.end());
  }
  SsmBank bank;
  bank.a_tilde = Tensor::from({channels, state_dim}, std::move(a), true);
  bank.g = Tensor::from({channels, gen_dim}, std::move(g), true);
  bank.h_d = Tensor::from({channels, gen_dim}, std::move(hd), true);
  bank.delta_bias = Tensor::from({channels}, std::move(delta), true);
  bank.h_b = Tensor::from({channels, state_dim}, std::move(hb), true);
  bank.h_c = Tensor::from({channels, state_dim}, std::move(hc), true);
  return bank;
}

Tensor selective_scan(const Tensor& x, const SsmBank& bank, const CsiInjection& csi) {
  if (x.rank() != 2 || x.dim(0) != bank.channels()) {
    throw DimensionError("selective_scan: x " + shape_str(x.shape()) + " vs " +
                         std::to_string(bank.channels()) + " channels");
  }
  if (csi.enabled && csi.interval == 0) throw ContractError("selective_scan: interval must be >= 1");
  const std::size_t C = bank.channels(), T = x.dim(1), N = bank.state_dim(), O = bank.gen_dim();
  const auto xv = x.data();
  const auto av = bank.a_tilde.data();
  const auto gv = bank.g.data();
  const auto hdv = bank.h_d.data();
  const auto dbv = bank.delta_bias.data();
  const auto hbv = bank.h_b.data();
  const auto hcv = bank.h_c.data();

  bool tracked = grad_enabled() && x.requires_grad();
  for (const Tensor& t : bank.tensors()) tracked = tracked || (grad_enabled() && t.requires_grad());
  if (!tracked) {
    std::vector<double> y(C * T), h(N), gate(N);
    for (std::size_t c = 0; c < C; ++c) {
      double w = 0.0;
      for (std::size_t o = 0; o < O; ++o) w += gv[c * O + o] * hdv[c * O + o];
      std::fill(h.begin(), h.end(), 0.0);
      if (csi.enabled) h[0] = csi.value;
      const double* a_row = &av[c * N];
      const double* hb_row = &hbv[c * N];
      const double* hc_row = &hcv[c * N];
      for (std::size_t t = 1; t <= T; ++t) {
        const double xt = xv[c * T + t - 1];
        const double delta = softplus(xt * w + dbv[c]);
        gates(delta, a_row, N, gate.data());
        for (std::size_t n = 0; n < N; ++n) h[n] = gate[n] * h[n] + delta * hb_row[n] * xt * xt;
        if (csi.enabled && t % csi.interval == 0) h[0] = csi.value;
        double yt = 0.0;
        for (std::size_t n = 0; n < N; ++n) yt += hc_row[n] * xt * h[n];
        y[c * T + t - 1] = yt;
      }
    }
    macs::tally(static_cast<std::uint64_t>(C) * T * scan_step_macs(N, O));
    return Tensor::make_result({C, T}, std::move(y), {}, nullptr);
  }

  std::vector<double> y(C * T);
  std::vector<double> pre(C * T);
  std::vector<double> states(C * (T + 1) * N, 0.0);  // h_t after any injection
  std::vector<double> weight(C), gate(N);
  for (std::size_t c = 0; c < C; ++c) {
    double w = 0.0;
    for (std::size_t o = 0; o < O; ++o) w += gv[c * O + o] * hdv[c * O + o];
    weight[c] = w;
    double* h = &states[c * (T + 1) * N];
    if (csi.enabled) h[0] = csi.value;
    for (std::size_t t = 1; t <= T; ++t) {
      const double xt = xv[c * T + t - 1];
      const double p = xt * w + dbv[c];
      const double delta = softplus(p);
      pre[c * T + t - 1] = p;
      const double* prev = h + (t - 1) * N;
      double* cur = h + t * N;
      gates(delta, &av[c * N], N, gate.data());
      for (std::size_t n = 0; n < N; ++n) {
        cur[n] = gate[n] * prev[n] + delta * hbv[c * N + n] * xt * xt;
      }
      if (csi.enabled && t % csi.interval == 0) cur[0] = csi.value;
      double yt = 0.0;
      for (std::size_t n = 0; n < N; ++n) yt += hcv[c * N + n] * xt * cur[n];
      y[c * T + t - 1] = yt;
    }
  }
  macs::tally(static_cast<std::uint64_t>(C) * T * scan_step_macs(N, O));

  std::vector<Tensor> inputs{x};
  for (const Tensor& t : bank.tensors()) inputs.push_back(t);
  return Tensor::make_result(
      {C, T}, std::move(y), std::move(inputs),
      [C, T, N, O, csi, pre = std::move(pre), states = std::move(states),
       weight = std::move(weight)](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pa = *self.parents[1];
        detail::Node& pg = *self.parents[2];
        detail::Node& phd = *self.parents[3];
        detail::Node& pdb = *self.parents[4];
        detail::Node& phb = *self.parents[5];
        detail::Node& phc = *self.parents[6];
        std::vector<double> dx(C * T, 0.0), da(C * N, 0.0), dg(C * O, 0.0), dhd(C * O, 0.0),
            ddb(C, 0.0), dhb(C * N, 0.0), dhc(C * N, 0.0);
        std::vector<double> gh(N), gate(N);
        for (std::size_t c = 0; c < C; ++c) {
          std::fill(gh.begin(), gh.end(), 0.0);
          const double* h = &states[c * (T + 1) * N];
          const double* a_row = &pa.data[c * N];
          const double* hb_row = &phb.data[c * N];
          const double* hc_row = &phc.data[c * N];
          double dw = 0.0;
          for (std::size_t t = T; t >= 1; --t) {
            const std::size_t i = c * T + t - 1;
            const double gy = self.grad[i];
            const double xt = px.data[i];
            const double* cur = h + t * N;
            const double* prev = h + (t - 1) * N;
            for (std::size_t n = 0; n < N; ++n) {
              dhc[c * N + n] += gy * cur[n] * xt;
              dx[i] += gy * hc_row[n] * cur[n];
              gh[n] += gy * hc_row[n] * xt;
            }
            if (csi.enabled && t % csi.interval == 0) gh[0] = 0.0;
            const double delta = softplus(pre[i]);
            double ddelta = 0.0;
            gates(delta, a_row, N, gate.data());
            for (std::size_t n = 0; n < N; ++n) {
              const double a = gate[n];
              const double d_a = gh[n] * prev[n];
              ddelta += d_a * a * a_row[n];
              da[c * N + n] += d_a * a * delta;
              ddelta += gh[n] * hb_row[n] * xt * xt;
              dhb[c * N + n] += gh[n] * delta * xt * xt;
              dx[i] += gh[n] * delta * hb_row[n] * 2.0 * xt;
              gh[n] *= a;
            }
            const double dpre = ddelta * sigmoid(pre[i]);
            dx[i] += dpre * weight[c];
            dw += dpre * xt;
            ddb[c] += dpre;
          }
          for (std::size_t o = 0; o < O; ++o) {
            dg[c * O + o] += dw * phd.data[c * O + o];
            dhd[c * O + o] += dw * pg.data[c * O + o];
          }
        }
        auto flush = [](detail::Node& p, const std::vector<double>& d) {
          if (!p.requires_grad) return;
          auto& g = p.grad_buffer();
          for (std::size_t k = 0; k < d.size(); ++k) g[k] += d[k];
        };
        flush(px, dx);
        flush(pa, da);
        flush(pg, dg);
        flush(phd, dhd);
        flush(pdb, ddb);
        flush(phb, dhb);
        flush(phc, dhc);
      });
}

}  // namespace mjscc::ssm
