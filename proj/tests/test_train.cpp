#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "mjscc/metrics.hpp"
#include "mjscc/train.hpp"
#include "test_util.hpp"

using namespace mjscc;
using namespace mjscc::train;

namespace {

codec::ModelConfig tiny_config() {
  codec::ModelConfig c = codec::ModelConfig::toy();
  c.widths = {8, 12};
  c.state_dim = 4;
  c.image_height = c.image_width = 16;
  return c;
}

std::vector<Tensor> images(std::size_t n, std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_tensor(rng, {3, side, side}, false, 0.0, 1.0));
  return out;
}

std::vector<std::vector<double>> snapshot(const codec::CodecParams& p) {
  std::vector<std::vector<double>> s;
  for (const Tensor& t : p.parameters().tensors()) s.emplace_back(t.data().begin(), t.data().end());
  return s;
}

std::vector<StepLog> run(const codec::CodecParams& p, const TrainOptions& opt, AdamState& state,
                         const std::vector<Tensor>& data) {
  std::vector<StepLog> log;
  train::train(p, data, opt, state, [&](const StepLog& s) { log.push_back(s); });
  return log;
}

}  // namespace

TEST_CASE("zero steps leave the initialization untouched") {
  const codec::CodecParams p = codec::CodecParams::init(tiny_config());
  const auto before = snapshot(p);
  TrainOptions opt;
  opt.steps = 0;
  AdamState state;
  CHECK(run(p, opt, state, images(2, 16, 1)).empty());
  CHECK(snapshot(p) == before);
}

TEST_CASE("fixed seed gives a bit-identical loss curve") {
  TrainOptions opt;
  opt.steps = 3;
  opt.batch_size = 2;
  opt.snr_lo = 0.0;
  opt.snr_hi = 20.0;
  opt.channel = channel::ChannelKind::rayleigh;
  const auto data = images(3, 16, 2);
  const codec::CodecParams a = codec::CodecParams::init(tiny_config());
  const codec::CodecParams b = codec::CodecParams::init(tiny_config());
  AdamState sa, sb;
  const auto la = run(a, opt, sa, data);
  const auto lb = run(b, opt, sb, data);
  REQUIRE(la.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(la[i].step == i + 1);
    CHECK(la[i].loss == lb[i].loss);
    CHECK(la[i].snr_db == lb[i].snr_db);
    CHECK(la[i].snr_db >= 0.0);
    CHECK(la[i].snr_db <= 20.0);
    CHECK(la[i].lr == 1e-4);
  }
  CHECK(snapshot(a) == snapshot(b));
}

TEST_CASE("resumed training matches an uninterrupted run") {
  TrainOptions opt;
  opt.steps = 4;
  opt.batch_size = 1;
  opt.adam.lr = 1e-3;
  const auto data = images(3, 16, 3);
  const codec::CodecParams whole = codec::CodecParams::init(tiny_config());
  AdamState s1;
  const auto l1 = run(whole, opt, s1, data);

  const codec::CodecParams parts = codec::CodecParams::init(tiny_config());
  AdamState s2;
  opt.steps = 2;
  auto l2 = run(parts, opt, s2, data);
  opt.steps = 4;
  const auto rest = run(parts, opt, s2, data);
  l2.insert(l2.end(), rest.begin(), rest.end());
  REQUIRE(l2.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(l1[i].loss == l2[i].loss);
  CHECK(snapshot(whole) == snapshot(parts));
}

TEST_CASE("loss decreases on a single image") {
  TrainOptions opt;
  opt.steps = 30;
  opt.batch_size = 1;
  opt.adam.lr = 3e-3;
  opt.channel = channel::ChannelKind::identity;
  const codec::CodecParams p = codec::CodecParams::init(tiny_config());
  AdamState state;
  const auto log = run(p, opt, state, images(1, 16, 4));
  CHECK(log.back().loss < 0.5 * log.front().loss);
}

TEST_CASE("msssim loss trains") {
  codec::ModelConfig cfg = tiny_config();
  cfg.image_height = cfg.image_width = 24;
  cfg.cbr_den = 8;
  TrainOptions opt;
  opt.steps = 2;
  opt.batch_size = 1;
  opt.loss = LossKind::msssim;
  const codec::CodecParams p = codec::CodecParams::init(cfg);
  AdamState state;
  const auto log = run(p, opt, state, images(1, 24, 5));
  CHECK(log.size() == 2);
  CHECK(std::isfinite(log[1].loss));
}

TEST_CASE("training errors") {
  const codec::CodecParams p = codec::CodecParams::init(tiny_config());
  AdamState state;
  TrainOptions opt;
  opt.steps = 1;
  CHECK_THROWS_AS(train::train(p, {}, opt, state), ContractError);
  auto bad = images(1, 16, 6);
  bad[0].mutable_data()[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train::train(p, bad, opt, state), DivergenceError);
  CHECK(format_log_line({12, 0.5, 3.25, 1e-4}) == "12, 0.5, 3.25, 0.0001");
  CHECK(parse_loss("msssim") == LossKind::msssim);
  CHECK_THROWS_AS(parse_loss("l1"), ContractError);
}

TEST_CASE("analytic MACs match the instrumented kernels") {
  Rng rng(7);
  std::vector<codec::ModelConfig> configs = {codec::ModelConfig::toy(), tiny_config()};
  for (int i = 0; i < 6; ++i) {
    codec::ModelConfig c = tiny_config();
    c.blocks = {rng.below(3), rng.below(3), 1};
    c.widths = {4 + rng.below(6), 6, 5 + rng.below(4)};
    c.last_stage_downsample = i % 2 == 0;
    c.state_dim = 1 + rng.below(5);
    c.gen_dim = rng.below(3);
    c.expand = 1 + rng.below(2);
    c.cbr_den = 6;
    configs.push_back(c);
  }
  for (const auto& cfg : configs) {
    const codec::CodecParams p = codec::CodecParams::init(cfg);
    const MacCounter analytic = analytic_macs(cfg);
    CHECK(instrumented_macs(p, 7.0) == analytic);
    CHECK(instrumented_macs(p, -3.0) == analytic);
    CHECK(analytic_param_count(cfg) == p.parameters().numel());
  }
}

TEST_CASE("CSI-ReST changes neither MACs nor parameters") {
  for (codec::ModelConfig cfg : {codec::ModelConfig::toy(), codec::ModelConfig::full()}) {
    cfg.csi.enabled = true;
    const MacCounter on = analytic_macs(cfg);
    const std::size_t params_on = analytic_param_count(cfg);
    cfg.csi.enabled = false;
    CHECK(analytic_macs(cfg) == on);
    CHECK(analytic_param_count(cfg) == params_on);
  }
  codec::ModelConfig cfg = codec::ModelConfig::toy();
  cfg.csi.enabled = true;
  const codec::CodecParams on = codec::CodecParams::init(cfg);
  cfg.csi.enabled = false;
  const codec::CodecParams off = codec::CodecParams::init(cfg);
  CHECK(instrumented_macs(on, 10.0) == instrumented_macs(off, 10.0));
  CHECK(on.parameters().numel() == off.parameters().numel());
}

TEST_CASE("full-scale complexity is within an order of magnitude of the reference figures") {
  codec::ModelConfig cfg = codec::ModelConfig::full();
  cfg.image_height = cfg.image_width = 256;
  const double gmacs = static_cast<double>(analytic_macs(cfg).total()) / 1e9;
  const double mparams = static_cast<double>(analytic_param_count(cfg)) / 1e6;
  MESSAGE("full config at 256x256: " << gmacs << " GMACs, " << mparams << " M parameters");
  // Order of magnitude only: 25.76 G and 14.54 M are the reference figures.
  CHECK(std::abs(std::log10(gmacs / 25.76)) < 1.0);
  CHECK(std::abs(std::log10(mparams / 14.54)) < 1.0);
  CHECK(analytic_param_count(cfg) == codec::CodecParams::init(codec::ModelConfig::full()).parameters().numel());
}

TEST_CASE("graph-free transmission and snr sweeps") {
  const codec::CodecParams p = codec::CodecParams::init(tiny_config());
  const auto data = images(2, 16, 9);
  Rng rng(4);
  const auto r = channel::sample_realization(channel::ChannelKind::awgn, 5.0, p.config.channel_uses(), rng);
  const Tensor out = transmit_image(p, data[0], r);
  CHECK_FALSE(out.requires_grad());
  const Tensor loss = image_loss(p, data[0], r, LossKind::mse);
  // image_loss does not clamp; the clamped error can only be smaller.
  CHECK(metrics::mse(data[0], out) <= loss.item() + 1e-15);
  for (double v : out.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(transmit_image(p, data[0], r, 5.0).data()[7] == out.data()[7]);

  SweepOptions opt;
  opt.snrs = {0.0, 10.0, 20.0};
  opt.trials = 2;
  const auto rows = evaluate_sweep(p, data, opt);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].transmissions == 4);
  CHECK(std::abs(rows[2].psnr_db - evaluate_sweep(p, data, opt)[2].psnr_db) == 0.0);
  const std::string csv = format_sweep_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  // Injection only changes what the model is told, not the channel draw.
  opt.snrs = {0.0};
  opt.trials = 1;
  opt.inject_snr_db = 0.0;
  const double told_truth = evaluate_sweep(p, data, opt)[0].mse;
  opt.inject_snr_db.reset();
  CHECK(evaluate_sweep(p, data, opt)[0].mse == told_truth);
  opt.trials = 0;
  CHECK_THROWS_AS(evaluate_sweep(p, data, opt), ContractError);
}
