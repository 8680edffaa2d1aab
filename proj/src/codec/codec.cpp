#include "mjscc/codec.hpp"

#include <algorithm>
#include <string>

#include "mjscc/macs.hpp"
#include "mjscc/ops.hpp"

namespace mjscc::codec {

namespace {

std::string list_str(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.blocks = {1, 1};
  c.widths = {32, 48};
  return c;
}

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.blocks = {2, 2, 6, 2};
  c.widths = {128, 192, 256, 320};
  c.state_dim = 16;
  c.cbr_den = 48;
  c.image_height = 128;
  c.image_width = 128;
  return c;
}

std::size_t ModelConfig::stage_gen_dim(std::size_t stage) const {
  if (gen_dim != 0) return gen_dim;
  return std::max<std::size_t>((widths.at(stage) + 15) / 16, 1);
}

vssm::BlockShape ModelConfig::block_shape(std::size_t stage) const {
  return {widths.at(stage), expand, conv_kernel, mlp_ratio, state_dim, stage_gen_dim(stage)};
}

bool ModelConfig::stage_downsamples(std::size_t stage) const {
  if (stage == 0) return false;
  return stage + 1 < stages() || last_stage_downsample;
}

std::size_t ModelConfig::stage_height(std::size_t stage) const {
  std::size_t h = image_height / embed_downsample;
  for (std::size_t k = 1; k <= stage; ++k)
    if (stage_downsamples(k)) h /= 2;
  return h;
}

std::size_t ModelConfig::stage_width(std::size_t stage) const {
  std::size_t w = image_width / embed_downsample;
  for (std::size_t k = 1; k <= stage; ++k)
    if (stage_downsamples(k)) w /= 2;
  return w;
}

std::size_t ModelConfig::channel_uses() const {
  return static_cast<std::size_t>(cbr_num * 3 * image_height * image_width / cbr_den);
}

std::size_t ModelConfig::compressed_channels() const {
  const std::size_t last = stages() - 1;
  return 2 * channel_uses() / (stage_height(last) * stage_width(last));
}

void ModelConfig::validate() const {
  require(!widths.empty(), "model: at least one stage is required");
  require(blocks.size() == widths.size(), "model: blocks " + list_str(blocks) + " and widths " +
                                              list_str(widths) + " differ in length");
  for (std::size_t w : widths) require(w > 0, "model: widths must be positive");
  require(embed_downsample > 0, "model: embed_downsample must be positive");
  require(state_dim > 0, "model: state_dim must be positive");
  require(expand > 0 && mlp_ratio > 0, "model: expand and mlp_ratio must be positive");
  require(conv_kernel % 2 == 1, "model: conv_kernel must be odd");
  require(image_height > 0 && image_width > 0, "model: image dims must be positive");
  try {
    csi.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("csi: ") + e.what());
  }
  std::size_t total = embed_downsample;
  for (std::size_t k = 1; k < stages(); ++k)
    if (stage_downsamples(k)) total *= 2;
  require(image_height % total == 0 && image_width % total == 0,
          "model: image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
              " not divisible by total downsample " + std::to_string(total));
  require(cbr_num > 0 && cbr_den > 0, "model: cbr must be positive");
  const std::uint64_t source = 3 * static_cast<std::uint64_t>(image_height) * image_width;
  require((cbr_num * source) % cbr_den == 0,
          "model: cbr " + std::to_string(cbr_num) + "/" + std::to_string(cbr_den) +
              " times 3*P*W is not an integer number of channel uses");
  const std::size_t last = stages() - 1;
  const std::size_t cells = stage_height(last) * stage_width(last);
  require((2 * channel_uses()) % cells == 0,
          "model: " + std::to_string(channel_uses()) + " channel uses not realizable on a " +
              std::to_string(stage_height(last)) + "x" + std::to_string(stage_width(last)) +
              " grid");
}

Tensor FeatureMap::patches() const {
  return ops::reshape(ops::transpose(tokens), {channels(), height, width});
}

FeatureMap FeatureMap::from_patches(const Tensor& patches) {
  if (patches.rank() != 3) throw DimensionError("expected [c x h x w], got " + shape_str(patches.shape()));
  const std::size_t c = patches.dim(0), h = patches.dim(1), w = patches.dim(2);
  return {ops::transpose(ops::reshape(patches, {c, h * w})), h, w};
}

CodecParams CodecParams::init(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t L = config.stages();
  const std::size_t r = config.embed_downsample;
  CodecParams p;
  p.config = config;
  p.embed = LinearParams::init(3 * r * r, config.widths[0], rng);
  p.encoder_blocks.resize(L);
  for (std::size_t k = 0; k < L; ++k) {
    if (k > 0) {
      const bool spatial = config.stage_downsamples(k);
      const std::size_t in = (spatial ? 4 : 1) * config.widths[k - 1];
      p.merges.push_back({LayerNormParams::init(in), LinearParams::init(in, config.widths[k], rng),
                          spatial});
    }
    for (std::size_t b = 0; b < config.blocks[k]; ++b)
      p.encoder_blocks[k].push_back(vssm::VssmCaParams::init(config.block_shape(k), rng));
  }
  const std::size_t c_out = config.compressed_channels();
  p.compress = LinearParams::init(config.widths[L - 1], c_out, rng);
  p.expand = LinearParams::init(c_out, config.widths[L - 1], rng);
  p.decoder_blocks.resize(L);
  p.divides.resize(L);
  for (std::size_t k = L; k-- > 0;) {
    for (std::size_t b = 0; b < config.blocks[k]; ++b)
      p.decoder_blocks[k].push_back(vssm::VssmCaParams::init(config.block_shape(k), rng));
    const std::size_t in = config.widths[k];
    const std::size_t factor = k == 0 ? r : (config.stage_downsamples(k) ? 2 : 1);
    const std::size_t out = (k == 0 ? 3 : config.widths[k - 1]) * factor * factor;
    p.divides[k] = {LayerNormParams::init(in), LinearParams::init(in, out, rng), factor};
  }
  return p;
}

ParamSet CodecParams::parameters() const {
  ParamSet set;
  embed.collect("enc.embed", set);
  for (std::size_t k = 0; k < encoder_blocks.size(); ++k) {
    const std::string stage = "enc.stage" + std::to_string(k + 1);
    if (k > 0) {
      merges[k - 1].norm.collect(stage + ".merge.norm", set);
      merges[k - 1].proj.collect(stage + ".merge.proj", set);
    }
    for (std::size_t b = 0; b < encoder_blocks[k].size(); ++b)
      encoder_blocks[k][b].collect(stage + ".block" + std::to_string(b + 1), set);
  }
  compress.collect("enc.compress", set);
  expand.collect("dec.expand", set);
  for (std::size_t k = decoder_blocks.size(); k-- > 0;) {
    const std::string stage = "dec.stage" + std::to_string(k + 1);
    for (std::size_t b = 0; b < decoder_blocks[k].size(); ++b)
      decoder_blocks[k][b].collect(stage + ".block" + std::to_string(b + 1), set);
    divides[k].norm.collect(stage + ".divide.norm", set);
    divides[k].proj.collect(stage + ".divide.proj", set);
  }
  return set;
}

FeatureMap patch_embed(const Tensor& image, const LinearParams& proj, std::size_t factor) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("patch_embed: expected [3 x P x W], got " + shape_str(image.shape()));
  }
  const std::size_t P = image.dim(1), W = image.dim(2), r = factor;
  if (r == 0 || P % r != 0 || W % r != 0) {
    throw DimensionError("patch_embed: " + std::to_string(P) + "x" + std::to_string(W) +
                         " not divisible by " + std::to_string(r));
  }
  const std::size_t h = P / r, w = W / r, f = 3 * r * r;
  std::vector<std::size_t> index(h * w * f);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t dy = 0; dy < r; ++dy)
          for (std::size_t dx = 0; dx < r; ++dx)
            index[(i * w + j) * f + ch * r * r + dy * r + dx] =
                (ch * P + i * r + dy) * W + j * r + dx;
  macs::Scope scope("patch_embed");
  return {apply(proj, ops::gather(image, index, {h * w, f})), h, w};
}

FeatureMap patch_merge(const FeatureMap& x, const MergeParams& p) {
  macs::Scope scope("patch_merge");
  if (!p.spatial) return {apply(p.proj, apply(p.norm, x.tokens)), x.height, x.width};
  if (x.height % 2 != 0 || x.width % 2 != 0) {
    throw DimensionError("patch_merge: odd spatial size " + std::to_string(x.height) + "x" +
                         std::to_string(x.width));
  }
  const std::size_t c = x.channels(), h = x.height / 2, w = x.width / 2;
  std::vector<std::size_t> index(h * w * 4 * c);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx)
          for (std::size_t ch = 0; ch < c; ++ch)
            index[(i * w + j) * 4 * c + (dy * 2 + dx) * c + ch] =
                ((2 * i + dy) * x.width + 2 * j + dx) * c + ch;
  const Tensor gathered = ops::gather(x.tokens, index, {h * w, 4 * c});
  return {apply(p.proj, apply(p.norm, gathered)), h, w};
}

FeatureMap pixel_shuffle(const FeatureMap& x, std::size_t factor) {
  const std::size_t r = factor, rr = r * r;
  if (r == 0 || x.channels() % rr != 0) {
    throw DimensionError("pixel_shuffle: " + std::to_string(x.channels()) +
                         " channels not divisible by " + std::to_string(rr));
  }
  const std::size_t c = x.channels() / rr, H = x.height * r, W = x.width * r;
  std::vector<std::size_t> index(H * W * c);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t xx = 0; xx < W; ++xx)
      for (std::size_t ch = 0; ch < c; ++ch)
        index[(y * W + xx) * c + ch] =
            ((y / r) * x.width + xx / r) * x.channels() + ch * rr + (y % r) * r + xx % r;
  return {ops::gather(x.tokens, index, {H * W, c}), H, W};
}

FeatureMap patch_divide(const FeatureMap& x, const DivideParams& p) {
  if (x.channels() != p.proj.weight.dim(0)) {
    throw DimensionError("patch_divide: " + std::to_string(x.channels()) + " channels vs FC input " +
                         std::to_string(p.proj.weight.dim(0)));
  }
  macs::Scope scope("patch_divide");
  const FeatureMap projected{apply(p.proj, apply(p.norm, x.tokens)), x.height, x.width};
  return p.factor == 1 ? projected : pixel_shuffle(projected, p.factor);
}

Tensor conv_compress(const FeatureMap& x, const LinearParams& proj) {
  macs::Scope scope("compress");
  const Tensor y = apply(proj, x.tokens);
  if (y.numel() % 2 != 0) throw DimensionError("conv_compress: odd number of real outputs");
  return ops::power_normalize(ops::reshape(y, {y.numel() / 2, 2}));
}

FeatureMap conv_expand(const Tensor& signal, const LinearParams& proj, std::size_t height,
                       std::size_t width) {
  const std::size_t c_in = proj.weight.dim(0);
  if (signal.numel() != height * width * c_in) {
    throw DimensionError("conv_expand: signal " + shape_str(signal.shape()) + " vs " +
                         std::to_string(height) + "x" + std::to_string(width) + "x" +
                         std::to_string(c_in));
  }
  macs::Scope scope("expand");
  return {apply(proj, ops::reshape(signal, {height * width, c_in})), height, width};
}

Tensor encode(const CodecParams& p, const Tensor& image, double snr_db) {
  const ModelConfig& cfg = p.config;
  if (image.rank() != 3 || image.dim(1) != cfg.image_height || image.dim(2) != cfg.image_width) {
    throw DimensionError("encode: image " + shape_str(image.shape()) + " vs configured 3x" +
                         std::to_string(cfg.image_height) + "x" + std::to_string(cfg.image_width));
  }
  FeatureMap x = patch_embed(image, p.embed, cfg.embed_downsample);
  for (std::size_t k = 0; k < cfg.stages(); ++k) {
    if (k > 0) x = patch_merge(x, p.merges[k - 1]);
    macs::Scope scope("vssm_ca");
    for (const auto& block : p.encoder_blocks[k])
      x.tokens = vssm::vssm_ca_tokens(block, x.tokens, x.height, x.width, snr_db, cfg.csi);
  }
  return conv_compress(x, p.compress);
}

Tensor decode(const CodecParams& p, const Tensor& signal, double snr_db) {
  const ModelConfig& cfg = p.config;
  const std::size_t last = cfg.stages() - 1;
  FeatureMap x = conv_expand(signal, p.expand, cfg.stage_height(last), cfg.stage_width(last));
  for (std::size_t k = cfg.stages(); k-- > 0;) {
    {
      macs::Scope scope("vssm_ca");
      for (const auto& block : p.decoder_blocks[k])
        x.tokens = vssm::vssm_ca_tokens(block, x.tokens, x.height, x.width, snr_db, cfg.csi);
    }
    x = patch_divide(x, p.divides[k]);
  }
  return x.patches();
}

Tensor clamp_unit(const Tensor& image) {
  std::vector<double> v(image.data().begin(), image.data().end());
  for (double& e : v) e = std::clamp(e, 0.0, 1.0);
  return Tensor::from(image.shape(), std::move(v));
}

}  // namespace mjscc::codec
