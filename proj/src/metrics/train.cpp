#include "mjscc/train.hpp"

#include <cmath>
#include <sstream>

#include "mjscc/metrics.hpp"
#include "mjscc/ops.hpp"

namespace mjscc::train {

AdamState AdamState::zeros(const std::vector<Tensor>& params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const AdamOptions& opt) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    auto values = p.mutable_data();
    if (grads[k].size() != values.size() || state.m[k].size() != values.size()) {
      throw DimensionError("adam_step: shape mismatch in parameter " + std::to_string(k));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[k][i];
      double& m = state.m[k][i];
      double& v = state.v[k][i];
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
      values[i] -= opt.lr * (m / c1) / (std::sqrt(v / c2) + opt.eps);
    }
  }
}

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::mse;
  if (name == "msssim") return LossKind::msssim;
  throw ContractError("unknown loss '" + name + "' (expected mse or msssim)");
}

std::string loss_name(LossKind kind) { return kind == LossKind::mse ? "mse" : "msssim"; }

std::string format_log_line(const StepLog& s) {
  std::ostringstream out;
  out.precision(17);
  out << s.step << ", " << s.loss << ", " << s.snr_db << ", " << s.lr;
  return out.str();
}

Tensor image_loss(const codec::CodecParams& model, const Tensor& image,
                  const channel::ChannelRealization& realization, LossKind loss) {
  const Tensor q = codec::encode(model, image, realization.snr_db);
  const Tensor r = channel::transmit(q, realization);
  const Tensor out = codec::decode(model, r, realization.snr_db);
  return loss == LossKind::mse ? metrics::mse_loss(out, image) : metrics::msssim_loss(out, image);
}

void train(const codec::CodecParams& model, const std::vector<Tensor>& images,
           const TrainOptions& opt, AdamState& state,
           const std::function<void(const StepLog&)>& on_step) {
  if (images.empty()) throw ContractError("train: dataset is empty");
  if (opt.batch_size == 0) throw ContractError("train: batch_size must be positive");
  if (opt.snr_hi < opt.snr_lo) throw ContractError("train: snr_hi < snr_lo");
  ParamSet set = model.parameters();
  const std::vector<Tensor> params = set.tensors();
  if (state.m.empty()) state = AdamState::zeros(params);
  const std::size_t symbols = model.config.channel_uses();
  const Rng root(opt.seed);

  while (state.step < opt.steps) {
    Rng rng = root.fork(state.step);
    const double snr = opt.snr_lo == opt.snr_hi ? opt.snr_lo : rng.uniform(opt.snr_lo, opt.snr_hi);
    set.zero_grad();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < opt.batch_size; ++b) {
      const Tensor& image = images[rng.below(images.size())];
      const auto realization = channel::sample_realization(opt.channel, snr, symbols, rng, opt.block_len);
      const Tensor loss = ops::scale(image_loss(model, image, realization, opt.loss),
                                     1.0 / static_cast<double>(opt.batch_size));
      loss.backward();
      loss_sum += loss.item();
    }
    if (!std::isfinite(loss_sum)) {
      throw DivergenceError("training diverged: non-finite loss at step " +
                            std::to_string(state.step + 1));
    }
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (const Tensor& p : params) grads.push_back(p.grad());
    adam_step(params, grads, state, opt.adam);
    if (on_step) on_step({static_cast<std::size_t>(state.step), loss_sum, snr, opt.adam.lr});
  }
  set.zero_grad();
}

Tensor transmit_image(const codec::CodecParams& model, const Tensor& image,
                      const channel::ChannelRealization& realization,
                      std::optional<double> inject_snr_db) {
  NoGradGuard no_grad;
  const double told = inject_snr_db.value_or(realization.snr_db);
  const Tensor q = codec::encode(model, image, told);
  return codec::clamp_unit(codec::decode(model, channel::transmit(q, realization), told));
}

std::vector<SweepRow> evaluate_sweep(const codec::CodecParams& model,
                                     const std::vector<Tensor>& images, const SweepOptions& opt) {
  if (images.empty()) throw ContractError("evaluate_sweep: no images");
  if (opt.trials == 0) throw ContractError("evaluate_sweep: trials must be positive");
  const Rng root(opt.seed);
  const std::size_t symbols = model.config.channel_uses();
  std::vector<SweepRow> rows;
  for (std::size_t s = 0; s < opt.snrs.size(); ++s) {
    const Rng snr_root = root.fork(s);
    SweepRow row;
    row.snr_db = opt.snrs[s];
    for (std::size_t i = 0; i < images.size(); ++i) {
      for (std::size_t k = 0; k < opt.trials; ++k) {
        Rng rng = snr_root.fork(i * opt.trials + k);
        const auto realization =
            channel::sample_realization(opt.channel, opt.snrs[s], symbols, rng, opt.block_len);
        const Tensor out = transmit_image(model, images[i], realization, opt.inject_snr_db);
        const metrics::MetricReport m = metrics::evaluate(images[i], out);
        row.mse += metrics::mse(images[i], out);
        row.psnr_db += m.psnr_db;
        row.msssim += m.msssim;
        row.msssim_db += m.msssim_db;
        ++row.transmissions;
      }
    }
    const double n = static_cast<double>(row.transmissions);
    row.mse /= n;
    row.psnr_db /= n;
    row.msssim /= n;
    row.msssim_db /= n;
    rows.push_back(row);
  }
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "snr_db,psnr_db,msssim_db,msssim,mse,transmissions\n";
  for (const SweepRow& r : rows) {
    out << r.snr_db << "," << r.psnr_db << "," << r.msssim_db << "," << r.msssim << "," << r.mse
        << "," << r.transmissions << "\n";
  }
  return out.str();
}

namespace {

std::uint64_t block_macs(std::size_t tokens, const vssm::BlockShape& s) {
  const std::uint64_t T = tokens, d = s.width, E = s.inner(), k = s.conv_kernel;
  const std::uint64_t linear = T * d * E * 2 + T * E * d + 2 * T * d * (s.mlp_ratio * d);
  return linear + E * T * k * k;
}

std::uint64_t gssm_macs(std::size_t tokens, const vssm::BlockShape& s) {
  return 2 * static_cast<std::uint64_t>(s.inner()) * tokens * ssm::scan_step_macs(s.state_dim, s.gen_dim);
}

std::size_t block_params(const vssm::BlockShape& s) {
  const std::size_t d = s.width, E = s.inner(), k = s.conv_kernel, N = s.state_dim, O = s.gen_dim;
  const std::size_t norms = 2 * 2 * d;
  const std::size_t projections = (d * E + E) * 2 + (E * d + d);
  const std::size_t conv = E * k * k + E;
  const std::size_t banks = 2 * E * (3 * N + 2 * O + 1);
  const std::size_t mlp = (d * s.mlp_ratio * d + s.mlp_ratio * d) + (s.mlp_ratio * d * d + d);
  return norms + projections + conv + banks + 2 * E + mlp;
}

}  // namespace

MacCounter analytic_macs(const codec::ModelConfig& cfg) {
  cfg.validate();
  MacCounter c;
  const std::size_t L = cfg.stages(), r = cfg.embed_downsample;
  auto tokens = [&](std::size_t k) { return cfg.stage_height(k) * cfg.stage_width(k); };
  c.add("patch_embed", static_cast<std::uint64_t>(tokens(0)) * 3 * r * r * cfg.widths[0]);
  for (std::size_t k = 0; k < L; ++k) {
    if (k > 0) {
      const std::uint64_t in = (cfg.stage_downsamples(k) ? 4 : 1) * cfg.widths[k - 1];
      c.add("patch_merge", tokens(k) * in * cfg.widths[k]);
      const std::uint64_t out = (cfg.stage_downsamples(k) ? 4 : 1) * cfg.widths[k - 1];
      c.add("patch_divide", tokens(k) * cfg.widths[k] * out);
    }
    const vssm::BlockShape s = cfg.block_shape(k);
    // Every block appears once in the encoder and once in the decoder.
    c.add("vssm_ca", 2 * cfg.blocks[k] * block_macs(tokens(k), s));
    c.add("gssm", 2 * cfg.blocks[k] * gssm_macs(tokens(k), s));
  }
  c.add("patch_divide", static_cast<std::uint64_t>(tokens(0)) * cfg.widths[0] * 3 * r * r);
  const std::uint64_t last = tokens(L - 1) * static_cast<std::uint64_t>(cfg.widths[L - 1]) *
                             cfg.compressed_channels();
  c.add("compress", last);
  c.add("expand", last);
  for (auto it = c.per_module.begin(); it != c.per_module.end();) {
    it = it->second == 0 ? c.per_module.erase(it) : std::next(it);
  }
  return c;
}

MacCounter instrumented_macs(const codec::CodecParams& model, double snr_db) {
  const codec::ModelConfig& cfg = model.config;
  const Tensor image = Tensor::full({3, cfg.image_height, cfg.image_width}, 0.5);
  MacCounter c;
  NoGradGuard no_grad;
  macs::Recording rec(c);
  codec::decode(model, codec::encode(model, image, snr_db), snr_db);
  return c;
}

std::size_t analytic_param_count(const codec::ModelConfig& cfg) {
  cfg.validate();
  const std::size_t L = cfg.stages(), r = cfg.embed_downsample;
  std::size_t n = 3 * r * r * cfg.widths[0] + cfg.widths[0];
  for (std::size_t k = 0; k < L; ++k) {
    if (k > 0) {
      const std::size_t in = (cfg.stage_downsamples(k) ? 4 : 1) * cfg.widths[k - 1];
      n += 2 * in + in * cfg.widths[k] + cfg.widths[k];                    // merge
      n += 2 * cfg.widths[k] + cfg.widths[k] * in + in;                    // divide
    }
    n += 2 * cfg.blocks[k] * block_params(cfg.block_shape(k));
  }
  const std::size_t c_last = cfg.widths[L - 1], c_out = cfg.compressed_channels();
  n += c_last * c_out + c_out + c_out * c_last + c_last;
  n += 2 * cfg.widths[0] + cfg.widths[0] * 3 * r * r + 3 * r * r;         // final divide
  return n;
}

}  // namespace mjscc::train
