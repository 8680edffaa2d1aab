#include "mjscc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mjscc/config.hpp"
#include "mjscc/io.hpp"
#include "mjscc/metrics.hpp"
#include "mjscc/train.hpp"
#include "mjscc/verify.hpp"

namespace mjscc::cli {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<double> snr;
  std::string channel;
  std::optional<double> inject_snr;
  bool no_csi_rest = false;
  std::string suite = "all";
  std::string out;
  std::string image;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

config::RunConfig load_config(const Flags& f) {
  config::RunConfig cfg = f.config.empty() ? config::RunConfig{} : config::parse(io::read_text(f.config));
  if (f.seed) {
    cfg.model.seed = *f.seed;
    cfg.train.seed = *f.seed;
  }
  if (!f.channel.empty()) {
    cfg.channel.kind = channel::parse_kind(f.channel);
    cfg.train.channel = cfg.channel.kind;
  }
  if (f.no_csi_rest) cfg.model.csi.enabled = false;
  cfg.validate();
  return cfg;
}

double single_snr(const Flags& f, double fallback) {
  if (f.snr.empty()) return fallback;
  if (f.snr.size() != 1) throw UsageError("--snr takes one value for this command");
  return f.snr[0];
}

void check_image_size(const Tensor& img, const codec::ModelConfig& m, const std::string& what) {
  if (img.dim(1) != m.image_height || img.dim(2) != m.image_width) {
    throw codec::ConfigError(what + " is " + std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(1)) +
                             " but the model expects " + std::to_string(m.image_width) + "x" +
                             std::to_string(m.image_height));
  }
}

std::string model_text(const codec::ModelConfig& m) {
  config::RunConfig r;
  r.model = m;
  return r.to_text();
}

/// Writes through a temporary so an interrupted run never leaves a torn file.
void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  io::write_bytes(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw io::IoError("cannot replace '" + path.string() + "': " + ec.message());
}

/// The checkpoint's own config decides the architecture; CSI-ReST may be
/// switched off for ablations since it owns no parameters.
codec::CodecParams load_model(const fs::path& path, bool no_csi_rest) {
  const codec::Checkpoint ck = codec::parse_checkpoint(io::read_bytes(path));
  config::RunConfig stored = config::parse(ck.config_text);
  if (no_csi_rest) stored.model.csi.enabled = false;
  codec::CodecParams model = codec::CodecParams::init(stored.model);
  codec::restore_params(ck, model.parameters());
  return model;
}

int cmd_verify(const Flags& f, std::ostream& out) {
  verify::Options opt;
  opt.seed = f.seed.value_or(1);
  const auto results = verify::run(f.suite, opt);
  bool ok = true;
  for (const auto& r : results) {
    out << verify::format_result(r) << "\n";
    ok = ok && r.passed;
  }
  out << (ok ? "all suites passed" : "verification FAILED") << " (seed " << opt.seed << ")\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_gen_data(const Flags& f, std::ostream& out) {
  const config::RunConfig cfg = load_config(f);
  const fs::path train_dir = f.out.empty() ? fs::path(cfg.data.train_dir) : fs::path(f.out) / "train";
  const fs::path test_dir = f.out.empty() ? fs::path(cfg.data.test_dir) : fs::path(f.out) / "test";
  const std::uint64_t seed = f.seed.value_or(cfg.train.seed);
  const Rng root(seed);
  io::generate_dataset(train_dir, cfg.data.train_count, cfg.model.image_height, cfg.model.image_width,
                       root.fork(0).next_u64());
  io::generate_dataset(test_dir, cfg.data.test_count, cfg.model.image_height, cfg.model.image_width,
                       root.fork(1).next_u64());
  out << "wrote " << cfg.data.train_count << " images to " << train_dir.string() << " and "
      << cfg.data.test_count << " to " << test_dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out) {
  config::RunConfig cfg = load_config(f);
  if (!f.snr.empty()) cfg.train.snr_lo = cfg.train.snr_hi = single_snr(f, 0.0);
  const fs::path ckpt_path = f.out.empty() ? fs::path(cfg.checkpoint) : fs::path(f.out);
  const fs::path log_path = cfg.log;

  // Data problems surface before any compute.
  const std::vector<Tensor> images = io::load_dataset(cfg.data.train_dir);
  for (const Tensor& img : images) check_image_size(img, cfg.model, "training image");

  const std::string config_text = cfg.to_text();
  const codec::CodecParams model = codec::CodecParams::init(cfg.model);
  const ParamSet params = model.parameters();
  train::AdamState state;
  std::vector<std::string> log_lines;
  if (fs::exists(ckpt_path)) {
    const codec::Checkpoint ck = codec::parse_checkpoint(io::read_bytes(ckpt_path));
    if (model_text(config::parse(ck.config_text).model) != model_text(cfg.model)) {
      throw codec::ConfigError("checkpoint '" + ckpt_path.string() + "' was trained with a different model config");
    }
    codec::restore_params(ck, params);
    if (ck.has_optimizer) state = train::AdamState::from_blob(ck.optimizer);
    if (fs::exists(log_path)) {
      std::istringstream in(io::read_text(log_path));
      std::string line;
      while (log_lines.size() < state.step && std::getline(in, line)) log_lines.push_back(line);
    }
    out << "resuming from step " << state.step << "\n";
  }

  auto save = [&] {
    const codec::OptimizerBlob blob = state.blob();
    write_atomic(ckpt_path, codec::serialize_checkpoint(codec::make_checkpoint(config_text, params, &blob)));
    std::string text;
    for (const auto& l : log_lines) text += l + "\n";
    const std::string bytes = text;
    write_atomic(log_path, {bytes.begin(), bytes.end()});
  };
  train::train(model, images, cfg.train, state, [&](const train::StepLog& s) {
    log_lines.push_back(train::format_log_line(s));
    if (s.step % 100 == 0) {
      out << "step " << s.step << " loss " << s.loss << "\n" << std::flush;
      save();
    }
  });
  save();
  out << "checkpoint " << ckpt_path.string() << ", log " << log_path.string() << " (" << log_lines.size()
      << " steps)\n";
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const config::RunConfig cfg = load_config(f);
  const codec::CodecParams model = load_model(cfg.checkpoint, f.no_csi_rest);
  const std::vector<Tensor> images = io::load_dataset(cfg.data.test_dir);
  for (const Tensor& img : images) check_image_size(img, model.config, "test image");
  train::SweepOptions opt;
  opt.snrs = f.snr.empty() ? cfg.eval.snrs : f.snr;
  opt.channel = cfg.channel.kind;
  opt.block_len = cfg.channel.block_len;
  opt.trials = cfg.eval.trials;
  opt.inject_snr_db = f.inject_snr;
  opt.seed = f.seed.value_or(cfg.train.seed);
  const std::string csv = train::format_sweep_csv(train::evaluate_sweep(model, images, opt));
  out << csv;
  if (!f.out.empty()) io::write_text(f.out, csv);
  return kExitOk;
}

int cmd_transmit(const Flags& f, std::ostream& out) {
  const config::RunConfig cfg = load_config(f);
  if (f.image.empty()) throw UsageError("transmit needs an input image");
  if (f.out.empty()) throw UsageError("transmit needs --out for the reconstruction");
  const Tensor image = io::load_ppm(f.image);
  const codec::CodecParams model = load_model(cfg.checkpoint, f.no_csi_rest);
  check_image_size(image, model.config, "input image");
  const double snr = single_snr(f, cfg.channel.snr_db);
  Rng rng(f.seed.value_or(cfg.train.seed));
  const auto realization =
      channel::sample_realization(cfg.channel.kind, snr, model.config.channel_uses(), rng, cfg.channel.block_len);
  const Tensor recon = train::transmit_image(model, image, realization, f.inject_snr);
  io::save_ppm(f.out, recon);
  // Scores are taken on the 8-bit file actually written.
  const Tensor written = io::to_tensor(io::from_tensor(recon));
  const metrics::MetricReport m = metrics::evaluate(image, written);
  out << std::setprecision(6) << "channel " << channel::kind_name(cfg.channel.kind) << " snr_db " << snr;
  if (f.inject_snr) out << " injected " << *f.inject_snr;
  out << "\npsnr_db " << m.psnr_db << "\nmsssim " << m.msssim << "\nmsssim_db " << m.msssim_db << "\n";
  return kExitOk;
}

int cmd_count_macs(const Flags& f, std::ostream& out) {
  const config::RunConfig cfg = load_config(f);
  codec::ModelConfig on = cfg.model, off = cfg.model;
  on.csi.enabled = true;
  off.csi.enabled = false;
  const MacCounter m_on = train::instrumented_macs(codec::CodecParams::init(on), cfg.channel.snr_db);
  const MacCounter m_off = train::instrumented_macs(codec::CodecParams::init(off), cfg.channel.snr_db);
  const std::size_t p_on = codec::CodecParams::init(on).parameters().numel();
  const std::size_t p_off = codec::CodecParams::init(off).parameters().numel();

  std::vector<std::string> modules;
  for (const auto& [k, v] : m_on.per_module) modules.push_back(k);
  for (const auto& [k, v] : m_off.per_module)
    if (!m_on.per_module.count(k)) modules.push_back(k);
  auto get = [](const MacCounter& m, const std::string& k) {
    const auto it = m.per_module.find(k);
    return it == m.per_module.end() ? std::uint64_t{0} : it->second;
  };
  out << std::left << std::setw(16) << "module" << std::right << std::setw(18) << "MACs csi-rest"
      << std::setw(18) << "MACs no-csi" << "\n";
  for (const auto& k : modules) {
    out << std::left << std::setw(16) << k << std::right << std::setw(18) << get(m_on, k) << std::setw(18)
        << get(m_off, k) << "\n";
  }
  out << std::left << std::setw(16) << "total" << std::right << std::setw(18) << m_on.total() << std::setw(18)
      << m_off.total() << "\n";
  out << std::left << std::setw(16) << "MACs (G)" << std::right << std::fixed << std::setprecision(4)
      << std::setw(18) << m_on.total() / 1e9 << std::setw(18) << m_off.total() / 1e9 << "\n";
  out << std::left << std::setw(16) << "params" << std::right << std::setw(18) << p_on << std::setw(18) << p_off
      << "\n";
  out << std::left << std::setw(16) << "params (M)" << std::right << std::setw(18) << p_on / 1e6 << std::setw(18)
      << p_off / 1e6 << "\n";
  out.unsetf(std::ios::fixed);
  const MacCounter analytic = train::analytic_macs(cfg.model);
  const bool formulas = analytic == m_on && train::analytic_param_count(cfg.model) == p_on;
  out << "closed-form counts " << (formulas ? "agree" : "DISAGREE") << "\n";
  bool blobs_ok = true;
  if (fs::exists(cfg.checkpoint)) {
    const codec::Checkpoint ck = codec::parse_checkpoint(io::read_bytes(cfg.checkpoint));
    std::size_t sum = 0;
    for (const auto& b : ck.params) sum += b.values.size();
    blobs_ok = sum == p_on;
    out << "checkpoint " << cfg.checkpoint << " holds " << sum << " values ("
        << (blobs_ok ? "matches" : "DOES NOT match") << ")\n";
  }
  const bool identical = m_on == m_off && p_on == p_off;
  out << "csi-rest overhead: " << (identical ? "none" : "NONZERO") << "\n";
  return identical && formulas && blobs_ok ? kExitOk : kExitFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MambaJSCC image transmission codec"};
  app.require_subcommand(1, 1);
  Flags f;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "config file (defaults to the toy model)");
    sub->add_option("--seed", f.seed, "seed override");
  };
  auto channel_flags = [&](CLI::App* sub) {
    sub->add_option("--channel", f.channel, "channel model")->check(CLI::IsMember({"awgn", "rayleigh", "identity"}));
    sub->add_flag("--no-csi-rest", f.no_csi_rest, "disable SNR injection");
  };

  CLI::App* verify = app.add_subcommand("verify", "run the property suites");
  verify->add_option("--seed", f.seed, "seed for every suite");
  verify->add_option("--suite", f.suite, "all or one suite name");

  CLI::App* gen = app.add_subcommand("gen-data", "write the synthetic train and test sets");
  common(gen);
  gen->add_option("--out", f.out, "base directory (default: paths from the config)");

  CLI::App* train = app.add_subcommand("train", "train, resuming from the checkpoint if present");
  common(train);
  channel_flags(train);
  train->add_option("--snr", f.snr, "fixed training SNR in dB")->expected(1);
  train->add_option("--out", f.out, "checkpoint path (default: from the config)");

  CLI::App* eval = app.add_subcommand("eval", "PSNR and MS-SSIM per SNR over the test set");
  common(eval);
  channel_flags(eval);
  eval->add_option("--snr", f.snr, "comma-separated SNRs in dB")->delimiter(',');
  eval->add_option("--inject-snr", f.inject_snr, "SNR told to the model instead of the true one");
  eval->add_option("--out", f.out, "also write the CSV here");

  CLI::App* transmit = app.add_subcommand("transmit", "send one PPM image through the codec");
  common(transmit);
  channel_flags(transmit);
  transmit->add_option("image", f.image, "input P6 image")->required();
  transmit->add_option("--snr", f.snr, "channel SNR in dB")->expected(1);
  transmit->add_option("--inject-snr", f.inject_snr, "SNR told to the model instead of the true one");
  transmit->add_option("--out", f.out, "reconstruction path")->required();

  CLI::App* count = app.add_subcommand("count-macs", "MACs and parameters with and without CSI-ReST");
  common(count);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (verify->parsed()) return cmd_verify(f, out);
    if (gen->parsed()) return cmd_gen_data(f, out);
    if (train->parsed()) return cmd_train(f, out);
    if (eval->parsed()) return cmd_eval(f, out);
    if (transmit->parsed()) return cmd_transmit(f, out);
    if (count->parsed()) return cmd_count_macs(f, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const codec::ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const io::IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const codec::CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitIo;
  } catch (const train::DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mjscc::cli
