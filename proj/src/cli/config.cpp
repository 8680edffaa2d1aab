#include "mjscc/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace mjscc::config {

using codec::ConfigError;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double to_double(const std::string& s) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a finite number, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Schema = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>>;

#define MJSCC_SIZE(path)                                                                    \
  Field{[](RunConfig& c, const std::string& v) { c.path = static_cast<std::size_t>(to_u64(v)); }, \
        [](const RunConfig& c) { return std::to_string(c.path); }}
#define MJSCC_U64(path)                                                  \
  Field{[](RunConfig& c, const std::string& v) { c.path = to_u64(v); }, \
        [](const RunConfig& c) { return std::to_string(c.path); }}
#define MJSCC_DOUBLE(path)                                                  \
  Field{[](RunConfig& c, const std::string& v) { c.path = to_double(v); }, \
        [](const RunConfig& c) { return fmt(c.path); }}
#define MJSCC_BOOL(path)                                                  \
  Field{[](RunConfig& c, const std::string& v) { c.path = to_bool(v); }, \
        [](const RunConfig& c) { return std::string(c.path ? "true" : "false"); }}
#define MJSCC_STRING(path)                                       \
  Field{[](RunConfig& c, const std::string& v) { c.path = v; }, \
        [](const RunConfig& c) { return c.path; }}

std::vector<std::size_t> size_list(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(static_cast<std::size_t>(to_u64(s)));
  return out;
}

const Schema& schema() {
  static const Schema s = {
      {"model",
       {
           {"blocks", Field{[](RunConfig& c, const std::string& v) { c.model.blocks = size_list(v); },
                            [](const RunConfig& c) { return join(c.model.blocks); }}},
           {"widths", Field{[](RunConfig& c, const std::string& v) { c.model.widths = size_list(v); },
                            [](const RunConfig& c) { return join(c.model.widths); }}},
           {"embed_downsample", MJSCC_SIZE(model.embed_downsample)},
           {"state_dim", MJSCC_SIZE(model.state_dim)},
           {"gen_dim", MJSCC_SIZE(model.gen_dim)},
           {"expand", MJSCC_SIZE(model.expand)},
           {"conv_kernel", MJSCC_SIZE(model.conv_kernel)},
           {"mlp_ratio", MJSCC_SIZE(model.mlp_ratio)},
           {"last_stage_downsample", MJSCC_BOOL(model.last_stage_downsample)},
           {"cbr", Field{[](RunConfig& c, const std::string& v) {
                           const auto slash = v.find('/');
                           if (slash == std::string::npos) throw ConfigError("cbr must be written as n/d");
                           c.model.cbr_num = to_u64(trim(v.substr(0, slash)));
                           c.model.cbr_den = to_u64(trim(v.substr(slash + 1)));
                         },
                         [](const RunConfig& c) {
                           return std::to_string(c.model.cbr_num) + "/" + std::to_string(c.model.cbr_den);
                         }}},
           {"image_height", MJSCC_SIZE(model.image_height)},
           {"image_width", MJSCC_SIZE(model.image_width)},
           {"seed", MJSCC_U64(model.seed)},
       }},
      {"csi",
       {
           {"enabled", MJSCC_BOOL(model.csi.enabled)},
           {"interval", MJSCC_SIZE(model.csi.interval)},
           {"snr_scale", MJSCC_DOUBLE(model.csi.snr_scale)},
       }},
      {"channel",
       {
           {"type", Field{[](RunConfig& c, const std::string& v) {
                            try {
                              c.channel.kind = channel::parse_kind(v);
                            } catch (const ContractError& e) {
                              throw ConfigError(e.what());
                            }
                          },
                          [](const RunConfig& c) { return channel::kind_name(c.channel.kind); }}},
           {"snr_db", MJSCC_DOUBLE(channel.snr_db)},
           {"block_len", MJSCC_SIZE(channel.block_len)},
       }},
      {"train",
       {
           {"steps", MJSCC_SIZE(train.steps)},
           {"batch_size", MJSCC_SIZE(train.batch_size)},
           {"lr", MJSCC_DOUBLE(train.adam.lr)},
           {"loss", Field{[](RunConfig& c, const std::string& v) {
                            try {
                              c.train.loss = train::parse_loss(v);
                            } catch (const ContractError& e) {
                              throw ConfigError(e.what());
                            }
                          },
                          [](const RunConfig& c) { return train::loss_name(c.train.loss); }}},
           {"snr_lo", MJSCC_DOUBLE(train.snr_lo)},
           {"snr_hi", MJSCC_DOUBLE(train.snr_hi)},
           {"seed", MJSCC_U64(train.seed)},
           {"checkpoint", MJSCC_STRING(checkpoint)},
           {"log", MJSCC_STRING(log)},
       }},
      {"data",
       {
           {"train_dir", MJSCC_STRING(data.train_dir)},
           {"test_dir", MJSCC_STRING(data.test_dir)},
           {"train_count", MJSCC_SIZE(data.train_count)},
           {"test_count", MJSCC_SIZE(data.test_count)},
       }},
      {"eval",
       {
           {"snrs", Field{[](RunConfig& c, const std::string& v) {
                            c.eval.snrs.clear();
                            for (const auto& s : split_list(v)) c.eval.snrs.push_back(to_double(s));
                          },
                          [](const RunConfig& c) { return join(c.eval.snrs); }}},
           {"trials", MJSCC_SIZE(eval.trials)},
       }},
  };
  return s;
}

#undef MJSCC_SIZE
#undef MJSCC_U64
#undef MJSCC_DOUBLE
#undef MJSCC_BOOL
#undef MJSCC_STRING

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& [name, fields] : schema()) {
    if (name != section) continue;
    for (const auto& [k, f] : fields)
      if (k == key) return &f;
  }
  return nullptr;
}

bool known_section(const std::string& section) {
  for (const auto& entry : schema())
    if (entry.first == section) return true;
  return false;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (train.batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(train.adam.lr >= 0.0)) throw ConfigError("train: lr must be non-negative");
  if (train.snr_hi < train.snr_lo) throw ConfigError("train: snr_hi is below snr_lo");
  if (eval.snrs.empty()) throw ConfigError("eval: snrs must not be empty");
  if (eval.trials == 0) throw ConfigError("eval: trials must be positive");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [section, fields] : schema()) {
    out += "[" + section + "]\n";
    for (const auto& [key, field] : fields) out += key + " = " + field.get(*this) + "\n";
    out += "\n";
  }
  return out;
}

RunConfig parse(const std::string& text) {
  RunConfig cfg;
  // Training shares the channel section's settings unless overridden below.
  std::string section;
  std::stringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any section");
    const Field* field = find_field(section, key);
    if (field == nullptr) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    const std::string full = section + "." + key;
    if (seen.count(full)) {
      throw ConfigError(where + "duplicate key '" + full + "' (first at line " +
                        std::to_string(seen[full]) + ")");
    }
    seen[full] = line_no;
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + full + ": " + e.what());
    }
  }
  cfg.train.channel = cfg.channel.kind;
  cfg.train.block_len = cfg.channel.block_len;
  if (!seen.count("train.snr_lo") && !seen.count("train.snr_hi")) {
    cfg.train.snr_lo = cfg.train.snr_hi = cfg.channel.snr_db;
  }
  return cfg;
}

}  // namespace mjscc::config
