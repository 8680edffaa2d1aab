#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mjscc/rng.hpp"
#include "mjscc/tensor.hpp"

namespace mjscc::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed PPM content; `offset` is the byte where parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& reason, std::size_t offset, const std::string& file = "")
      : std::runtime_error((file.empty() ? "" : file + ": ") + reason + " at byte " +
                           std::to_string(offset)),
        reason(reason),
        offset(offset) {}
  std::string reason;
  std::size_t offset;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// 8-bit binary PPM (P6, maxval 255).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major
  /// Header bytes as read (comments and spacing kept); empty means canonical.
  std::vector<std::uint8_t> header;
};

Image8 parse_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image8& image);

/// [3 x H x W] in [0,1].
Tensor to_tensor(const Image8& image);
/// Clamps to [0,1] and rounds to 8 bits.
Image8 from_tensor(const Tensor& image);

Tensor load_ppm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const Tensor& image);

/// Seeded synthetic image in [0,1]: a colour gradient, a checkerboard or a
/// sum of Gaussian blobs, chosen by the generator.
Tensor synthetic_image(std::size_t height, std::size_t width, Rng& rng);

/// Writes `count` images named img_0000.ppm ... into `dir`.
void generate_dataset(const std::filesystem::path& dir, std::size_t count, std::size_t height,
                      std::size_t width, std::uint64_t seed);
/// Every *.ppm in `dir`, sorted by file name.
std::vector<Tensor> load_dataset(const std::filesystem::path& dir);

}  // namespace mjscc::io
