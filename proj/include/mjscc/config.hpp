#pragma once

#include <string>
#include <vector>

#include "mjscc/channel.hpp"
#include "mjscc/codec.hpp"
#include "mjscc/train.hpp"

namespace mjscc::config {

struct ChannelSettings {
  channel::ChannelKind kind = channel::ChannelKind::awgn;
  double snr_db = 10.0;
  std::size_t block_len = 0;
};

struct DataSettings {
  std::string train_dir = "data/train";
  std::string test_dir = "data/test";
  std::size_t train_count = 16;
  std::size_t test_count = 8;
};

struct EvalSettings {
  std::vector<double> snrs = {1, 4, 7, 10, 13, 16, 19};
  std::size_t trials = 1;
};

/// Everything a run needs, as read from a config file:
///
///   # comment
///   [model]
///   blocks = 1, 1
///   cbr = 1/12
///
/// Sections: model, csi, channel, train, data, eval. Unknown sections or keys
/// are errors.
struct RunConfig {
  codec::ModelConfig model = codec::ModelConfig::toy();
  ChannelSettings channel;
  train::TrainOptions train;
  std::string checkpoint = "model.ckpt";
  std::string log = "train.log";
  DataSettings data;
  EvalSettings eval;

  /// Model plus channel and training consistency; throws codec::ConfigError.
  void validate() const;
  /// Canonical text; parse(to_text()) reproduces the config.
  std::string to_text() const;
};

/// Throws codec::ConfigError with the line number of the offending entry.
RunConfig parse(const std::string& text);

}  // namespace mjscc::config
