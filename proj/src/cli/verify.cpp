#include "mjscc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "mjscc/channel.hpp"
#include "mjscc/codec.hpp"
#include "mjscc/gradcheck.hpp"
#include "mjscc/ops.hpp"
#include "mjscc/ssm.hpp"
#include "mjscc/vssm_ca.hpp"

namespace mjscc::verify {

namespace {

using gssm::ScanScheme;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string list(std::span<const double> v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + "]";
}

std::string direction_str(const ssm::SsmDirectionParams& p) {
  return "a_tilde=" + list(p.a_tilde) + " g=" + list(p.g) + " h_d=" + list(p.h_d) +
         " delta_bias=" + num(p.delta_bias) + " h_b=" + list(p.h_b) + " h_c=" + list(p.h_c);
}

std::vector<double> values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// max |a - b| / max(max |b|, 1e-12).
double rel_dev(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

/// Direction parameters spread wider than the network initialization.
ssm::SsmDirectionParams random_direction(Rng& rng, std::size_t N, std::size_t O) {
  ssm::SsmDirectionParams p = ssm::init_direction(N, O, rng);
  for (double& a : p.a_tilde) a = -rng.uniform(0.05, 4.0);
  p.delta_bias = rng.uniform(-4.0, 1.0);
  return p;
}

ScanScheme random_permutation(Rng& rng, std::size_t T) {
  std::vector<std::size_t> order(T);
  for (std::size_t i = 0; i < T; ++i) order[i] = i;
  for (std::size_t i = T; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return ScanScheme::permutation(order);
}

ScanScheme cyclic_shift(std::size_t T, std::size_t by) {
  std::vector<std::size_t> order(T);
  for (std::size_t i = 0; i < T; ++i) order[i] = (i + by) % T;
  return ScanScheme::permutation(order);
}

ScanScheme random_general(Rng& rng, std::size_t T) {
  Eigen::MatrixXd r(T, T);
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) r(i, j) = rng.uniform(-1.0, 1.0);
  r += static_cast<double>(T) * Eigen::MatrixXd::Identity(T, T);
  return ScanScheme::general(r);
}

std::string scheme_str(const ScanScheme& s) {
  if (s.kind() == ScanScheme::Kind::permutation) {
    std::string out = "permutation [";
    for (std::size_t i = 0; i < s.order().size(); ++i) out += (i ? ", " : "") + std::to_string(s.order()[i]);
    return out + "]";
  }
  std::ostringstream out;
  out.precision(17);
  out << "general R=" << s.matrix().format(Eigen::IOFormat(Eigen::FullPrecision, Eigen::DontAlignCols, ", ", "; ", "", "", "[", "]"));
  return out.str();
}

class Suite {
 public:
  Suite(std::string name, const Options& opt) : root_(opt.seed), seed_(opt.seed) { r_.name = std::move(name); }

  Rng case_rng(std::size_t k) const { return root_.fork(k); }

  /// Records one case; the first failure keeps its description.
  void record(std::size_t k, double deviation, double tolerance, const std::function<std::string()>& inputs) {
    ++r_.cases;
    worst_ = std::max(worst_, deviation);
    if (!(deviation <= tolerance) && r_.passed) {
      r_.passed = false;
      r_.failure = "case " + std::to_string(k) + " (seed " + std::to_string(seed_) + ", stream " +
                   std::to_string(k) + "): deviation " + num(deviation) + " > " + num(tolerance) +
                   "\n  inputs: " + inputs();
    }
  }

  void check(std::size_t k, bool ok, const std::function<std::string()>& inputs) {
    record(k, ok ? 0.0 : 1.0, 0.5, inputs);
  }

  SuiteResult finish(const std::string& what) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "worst %s %.3g", what.c_str(), worst_);
    r_.summary = buf;
    return r_;
  }

 private:
  Rng root_;
  std::uint64_t seed_;
  SuiteResult r_;
  double worst_ = 0.0;
};

SuiteResult oracle_suite(const Options& opt) {
  Suite s("oracle", opt);
  for (std::size_t k = 0; k < 100; ++k) {
    Rng rng = s.case_rng(k);
    const std::size_t T = 1 + rng.below(64), N = 1 + rng.below(8), O = 1 + rng.below(4);
    const auto p = random_direction(rng, N, O);
    const auto x = values(rng, T);
    const ssm::StepParams steps = ssm::generate_step_params(p, x);
    const auto y = ssm::ssm_scan(steps, x, {std::vector<double>(N, 0.0), 0}).y;
    const auto ref = to_vec(ssm::ssm_matrix_oracle(steps) * to_eigen(x));
    s.record(k, rel_dev(y, ref), 1e-9, [&] {
      return "T=" + std::to_string(T) + " N=" + std::to_string(N) + " " + direction_str(p) + " x=" + list(x);
    });
  }
  return s.finish("relative deviation");
}

SuiteResult gssm_suite(const Options& opt) {
  Suite s("gssm", opt);
  for (std::size_t k = 0; k < 80; ++k) {
    Rng rng = s.case_rng(k);
    const std::size_t T = 2 + rng.below(31), N = 1 + rng.below(8);
    const ScanScheme scheme = k % 4 == 0   ? ScanScheme::identity(T)
                              : k % 4 == 1 ? ScanScheme::reversal(T)
                              : k % 4 == 2 ? random_general(rng, T)
                                           : random_permutation(rng, T);
    const gssm::GssmModule m{random_direction(rng, N, 2), scheme};
    const auto z = values(rng, T);
    const Eigen::VectorXd x = scheme.matrix() * to_eigen(z);
    const Eigen::MatrixXd M = ssm::ssm_matrix_oracle(ssm::generate_step_params(m.params, to_vec(x)));
    const Eigen::MatrixXd U = scheme.inverse_matrix() * M * scheme.matrix();
    const auto ref = to_vec(U * to_eigen(z));
    const auto got = gssm::gssm_apply(m, z, std::vector<double>(N, 0.0));
    const Eigen::MatrixXd Ug = gssm::gssm_matrix(m, z);
    const double matrix_dev = (Ug - U).cwiseAbs().maxCoeff() / std::max(U.cwiseAbs().maxCoeff(), 1e-12);
    s.record(k, std::max(rel_dev(got, ref), matrix_dev), 1e-9, [&] {
      return scheme_str(scheme) + " " + direction_str(m.params) + " z=" + list(z);
    });
  }
  // Reversal entries mirror the SSM matrix of the reversed sequence.
  for (std::size_t k = 80; k < 90; ++k) {
    Rng rng = s.case_rng(k);
    const std::size_t T = 8, N = 1 + rng.below(8);
    const gssm::GssmModule m{random_direction(rng, N, 2), ScanScheme::reversal(T)};
    const auto z = values(rng, T);
    std::vector<double> reversed(z.rbegin(), z.rend());
    const Eigen::MatrixXd M = ssm::ssm_matrix_oracle(ssm::generate_step_params(m.params, reversed));
    const Eigen::MatrixXd U = gssm::gssm_matrix(m, z);
    double dev = 0.0;
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) {
        const double expected = i <= j ? M(T - 1 - i, T - 1 - j) : 0.0;
        dev = std::max(dev, std::abs(U(i, j) - expected) / std::max(M.cwiseAbs().maxCoeff(), 1e-12));
      }
    s.record(k, dev, 1e-9, [&] { return "reversal T=8 " + direction_str(m.params) + " z=" + list(z); });
  }
  return s.finish("relative deviation");
}

SuiteResult superposition_suite(const Options& opt) {
  Suite s("superposition", opt);
  for (std::size_t k = 0; k < 50; ++k) {
    Rng rng = s.case_rng(k);
    const std::size_t T = 1 + rng.below(64), N = 1 + rng.below(8);
    const auto p = random_direction(rng, N, 1 + rng.below(4));
    const auto x = values(rng, T);
    const auto h0 = values(rng, N);
    const ssm::StepParams steps = ssm::generate_step_params(p, x);
    const auto full = ssm::ssm_scan(steps, x, {h0, 0}).y;
    const auto zero_state = ssm::ssm_scan(steps, x, {std::vector<double>(N, 0.0), 0}).y;
    const auto zero_input = ssm::ssm_scan(steps, std::vector<double>(T, 0.0), {h0, 0}).y;
    std::vector<double> sum(T);
    for (std::size_t t = 0; t < T; ++t) sum[t] = zero_state[t] + zero_input[t];
    const auto oracle = to_vec(ssm::zero_input_oracle(steps) * to_eigen(h0));
    s.record(k, std::max(rel_dev(sum, full), rel_dev(zero_input, oracle)), 1e-9, [&] {
      return "T=" + std::to_string(T) + " " + direction_str(p) + " x=" + list(x) + " h0=" + list(h0);
    });
  }
  return s.finish("relative deviation");
}

SuiteResult receptive_field_suite(const Options& opt) {
  Suite s("receptive-field", opt);
  const std::size_t T = 16, N = 4;
  const std::vector<double> h0(N, 0.0);
  for (std::size_t k = 0; k < 5; ++k) {
    Rng rng = s.case_rng(k);
    const gssm::GssmModule m1{ssm::init_direction(N, 2, rng), ScanScheme::identity(T)};
    const gssm::GssmModule m2{ssm::init_direction(N, 2, rng), ScanScheme::reversal(T)};
    const auto z = values(rng, T);
    const gssm::CsiRestConfig csi{true, 64, 1.0};
    const auto s1 = gssm::receptive_field_map([&](auto v) { return gssm::gssm_apply(m1, v, h0); }, z);
    const auto s2 = gssm::receptive_field_map([&](auto v) { return gssm::gssm_apply(m2, v, h0); }, z);
    const auto sd = gssm::receptive_field_map([&](auto v) { return gssm::dual_gssm_csi(m1, m2, v, csi, 10.0); }, z);
    std::size_t bad = 0;
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(T); ++t)
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(T); ++j) {
        bad += (s1(t, j) > 1e-12) != (j <= t);
        bad += (s2(t, j) > 1e-12) != (j >= t);
        bad += !(sd(t, j) > 1e-12);
      }
    s.record(k, static_cast<double>(bad), 0.0, [&] {
      return std::to_string(bad) + " support mismatches; first " + direction_str(m1.params) + "; second " +
             direction_str(m2.params) + " z=" + list(z);
    });
  }
  return s.finish("support mismatches");
}

SuiteResult roundtrip_suite(const Options& opt) {
  Suite s("roundtrip", opt);
  const RecoverFn recover = opt.recover ? opt.recover : RecoverFn([](std::span<const double> y, const ScanScheme& sc) {
    return gssm::scan_recover(y, sc);
  });
  for (std::size_t k = 0; k < 50; ++k) {
    Rng rng = s.case_rng(k);
    const std::size_t T = 2 + rng.below(63);
    const ScanScheme scheme = k % 5 == 0   ? ScanScheme::identity(T)
                              : k % 5 == 1 ? ScanScheme::reversal(T)
                              : k % 5 == 2 ? cyclic_shift(T, 1 + rng.below(T - 1))
                              : k % 5 == 3 ? random_permutation(rng, T)
                                           : random_general(rng, T);
    const auto z = values(rng, T);
    const auto back = recover(gssm::scan_exchange(z, scheme), scheme);
    const double tol = scheme.kind() == ScanScheme::Kind::permutation ? 0.0 : 1e-12;
    s.record(k, back.size() == z.size() ? rel_dev(back, z) : INFINITY, tol, [&] {
      return scheme_str(scheme) + " z=" + list(z) + " recovered=" + list(back);
    });
  }
  return s.finish("relative deviation");
}

SuiteResult channel_suite(const Options& opt) {
  using namespace channel;
  Suite s("channel", opt);
  const std::size_t n = 1'000'000;
  std::size_t k = 0;
  for (double snr : {-5.0, 0.0, 10.0, 25.0}) {
    Rng rng = s.case_rng(k);
    Signal q(n);
    for (Complex& v : q) v = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    const Signal r = awgn(q, snr, rng);
    double noise = 0.0;
    for (std::size_t i = 0; i < n; ++i) noise += std::norm(r[i] - q[i]);
    const double measured = 10.0 * std::log10(static_cast<double>(n) / noise);
    s.record(k, std::abs(measured - snr), 0.05, [&] {
      return "awgn snr_db=" + num(snr) + " symbols=1e6 measured=" + num(measured);
    });
    ++k;
  }
  {
    Rng rng = s.case_rng(k);
    const FadedSignal f = rayleigh(Signal(n, Complex{1.0, 0.0}), 10.0, rng, 1);
    double p2 = 0.0, p1 = 0.0;
    for (const Complex& h : f.h) {
      p2 += std::norm(h);
      p1 += std::abs(h);
    }
    p2 /= static_cast<double>(n);
    p1 /= static_cast<double>(n);
    const double target = std::sqrt(std::numbers::pi) / 2.0;
    s.record(k, std::max(std::abs(p2 - 1.0), std::abs(p1 - target) / target), 0.01, [&] {
      return "rayleigh 1e6 draws E|h|^2=" + num(p2) + " E|h|=" + num(p1);
    });
    ++k;
  }
  for (int trial = 0; trial < 3; ++trial, ++k) {
    Rng rng = s.case_rng(k);
    const Complex h{rng.normal() / std::sqrt(2.0), rng.normal() / std::sqrt(2.0)};
    const double snr = rng.uniform(0.0, 20.0), var = noise_variance(snr);
    Signal q(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
      r[i] = h * q[i] + std::sqrt(var / 2.0) * Complex{rng.normal(), rng.normal()};
    }
    // mean |g r - q|^2 = |g|^2 S_rr - 2 Re(g S_rq) + S_qq
    double s_rr = 0.0, s_qq = 0.0;
    Complex s_rq{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      s_rr += std::norm(r[i]);
      s_qq += std::norm(q[i]);
      s_rq += r[i] * std::conj(q[i]);
    }
    auto mse = [&](Complex g) {
      return (std::norm(g) * s_rr - 2.0 * (g * s_rq).real() + s_qq) / static_cast<double>(n);
    };
    const Signal eq = mmse_equalize(r, Signal(n, h), var);
    double e_mmse = 0.0;
    for (std::size_t i = 0; i < n; ++i) e_mmse += std::norm(eq[i] - q[i]);
    e_mmse /= static_cast<double>(n);
    double best_grid = INFINITY;
    for (int a = -60; a <= 60; ++a)
      for (int b = -60; b <= 60; ++b) best_grid = std::min(best_grid, mse({a * 0.05, b * 0.05}));
    s.record(k, std::max(0.0, e_mmse - best_grid), 0.0, [&] {
      return "mmse h=(" + num(h.real()) + ", " + num(h.imag()) + ") snr_db=" + num(snr) +
             " mmse=" + num(e_mmse) + " grid best=" + num(best_grid);
    });
  }
  return s.finish("deviation");
}

void perturb(const ParamSet& set, Rng& rng) {
  for (const auto& e : set.entries()) {
    Tensor t = e.tensor;
    for (double& v : t.mutable_data()) v += rng.uniform(-0.1, 0.1);
  }
}

SuiteResult gradient_suite(const Options& opt) {
  Suite s("gradient", opt);
  auto judge = [&](std::size_t k, const GradCheckReport& r, const std::string& what) {
    auto inputs = [&] {
      return what + ": max relative " + num(r.max_relative) + " over " + std::to_string(r.large) +
             " coordinates, max absolute " + num(r.max_absolute) + " over " + std::to_string(r.small);
    };
    s.record(k, r.large == 0 ? INFINITY : r.max_relative, 1e-4, inputs);
    s.check(k, r.max_absolute <= 1e-9, inputs);
  };
  {
    Rng rng = s.case_rng(0);
    const std::size_t C = 2, T = 7, N = 3, O = 2;
    const ssm::SsmBank b1 = ssm::SsmBank::init(C, N, O, rng);
    const ssm::SsmBank b2 = ssm::SsmBank::init(C, N, O, rng);
    const Tensor z = Tensor::from({C, T}, values(rng, C * T), true);
    const Tensor w = Tensor::from({C, T}, values(rng, C * T, 0.5, 1.5));
    const gssm::CsiRestConfig csi{true, 3, 0.1};
    std::vector<Tensor> params = b1.tensors();
    for (const Tensor& t : b2.tensors()) params.push_back(t);
    params.push_back(z);
    judge(0, grad_check_report([&] { return ops::sum(ops::mul(gssm::dual_gssm_forward(z, b1, b2, csi, 10.0), w)); }, params),
          "dual gssm C=2 T=7 N=3");
  }
  {
    Rng rng = s.case_rng(1);
    const vssm::VssmCaParams p = vssm::VssmCaParams::init({2, 2, 3, 2, 3, 1}, rng);
    ParamSet set;
    p.collect("block", set);
    perturb(set, rng);
    const Tensor x = Tensor::from({2, 3, 3}, values(rng, 18), true);
    const Tensor w = Tensor::from({2, 3, 3}, values(rng, 18, 0.5, 1.5));
    const gssm::CsiRestConfig csi{true, 4, 0.1};
    std::vector<Tensor> params = set.tensors();
    params.push_back(x);
    judge(1, grad_check_report([&] { return ops::sum(ops::mul(vssm::vssm_ca_forward(p, x, 5.0, csi), w)); }, params),
          "vssm-ca block d=2 3x3");
  }
  {
    Rng rng = s.case_rng(2);
    codec::ModelConfig cfg = codec::ModelConfig::toy();
    cfg.image_height = cfg.image_width = 16;
    cfg.seed = rng.below(1u << 30);
    const codec::CodecParams p = codec::CodecParams::init(cfg);
    const auto tensors = p.parameters().tensors();
    const Tensor img = Tensor::from({3, 16, 16}, values(rng, 768, 0.0, 1.0));
    const Tensor noise = Tensor::from({cfg.channel_uses(), 2}, values(rng, 2 * cfg.channel_uses(), -0.1, 0.1));
    auto loss = [&] {
      const Tensor r = ops::add(codec::encode(p, img, 10.0), noise);
      return ops::mean(ops::square(ops::sub(codec::decode(p, r, 10.0), img)));
    };
    std::vector<ProbeCoordinate> coords;
    while (coords.size() < 32) {
      const std::size_t t = rng.below(tensors.size());
      coords.push_back({t, rng.below(tensors[t].numel())});
    }
    judge(2, grad_check_report(loss, tensors, coords), "end-to-end toy codec 16x16, 32 sampled parameters");
  }
  return s.finish("relative error");
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"oracle",    "gssm",    "superposition", "receptive-field",
                                                 "roundtrip", "channel", "gradient"};
  return names;
}

std::vector<SuiteResult> run(const std::string& filter, const Options& opt) {
  const auto& names = suite_names();
  if (filter != "all" && std::find(names.begin(), names.end(), filter) == names.end()) {
    std::string known;
    for (const auto& n : names) known += " " + n;
    throw ContractError("unknown suite '" + filter + "' (expected all or one of:" + known + ")");
  }
  std::vector<SuiteResult> out;
  for (const auto& name : names) {
    if (filter != "all" && filter != name) continue;
    if (name == "oracle") out.push_back(oracle_suite(opt));
    if (name == "gssm") out.push_back(gssm_suite(opt));
    if (name == "superposition") out.push_back(superposition_suite(opt));
    if (name == "receptive-field") out.push_back(receptive_field_suite(opt));
    if (name == "roundtrip") out.push_back(roundtrip_suite(opt));
    if (name == "channel") out.push_back(channel_suite(opt));
    if (name == "gradient") out.push_back(gradient_suite(opt));
  }
  return out;
}

std::string format_result(const SuiteResult& r) {
  std::string line = std::string(r.passed ? "PASS " : "FAIL ") + r.name + ": " + std::to_string(r.cases) +
                     " cases, " + r.summary;
  if (!r.passed) line += "\n  " + r.failure;
  return line;
}

}  // namespace mjscc::verify
