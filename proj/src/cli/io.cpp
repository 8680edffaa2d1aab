#include "mjscc/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

namespace mjscc::io {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, {text.begin(), text.end()});
}

namespace {

class PpmReader {
 public:
  explicit PpmReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1'000'000) throw ParseError(std::string("PPM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("PPM: expected ") + what, pos_);
    return v;
  }

  std::size_t pos_ = 0;
  const std::vector<std::uint8_t>& b_;
};

}  // namespace

Image8 parse_ppm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw ParseError("PPM: missing P6 magic", 0);
  }
  PpmReader r(bytes);
  r.pos_ = 2;
  if (r.pos_ < bytes.size() && !std::isspace(bytes[r.pos_]) && bytes[r.pos_] != '#') {
    throw ParseError("PPM: expected whitespace after magic", r.pos_);
  }
  Image8 img;
  img.width = r.number("width");
  img.height = r.number("height");
  const std::size_t maxval_at = r.pos_;
  const std::size_t maxval = r.number("maxval");
  if (maxval != 255) throw ParseError("PPM: only maxval 255 is supported", maxval_at);
  if (img.width == 0 || img.height == 0) throw ParseError("PPM: zero dimension", maxval_at);
  if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_])) {
    throw ParseError("PPM: expected a single whitespace before pixel data", r.pos_);
  }
  ++r.pos_;
  const std::size_t need = 3 * img.width * img.height;
  if (bytes.size() - r.pos_ < need) {
    throw ParseError("PPM: pixel data truncated (" + std::to_string(bytes.size() - r.pos_) + " of " +
                         std::to_string(need) + " bytes)",
                     bytes.size());
  }
  if (bytes.size() - r.pos_ > need) throw ParseError("PPM: trailing bytes", r.pos_ + need);
  img.header.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_));
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_), bytes.end());
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image8& image) {
  if (!image.header.empty()) {
    std::vector<std::uint8_t> out(image.header);
    out.insert(out.end(), image.rgb.begin(), image.rgb.end());
    return out;
  }
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

Tensor to_tensor(const Image8& image) {
  const std::size_t h = image.height, w = image.width;
  std::vector<double> v(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i) v[c * h * w + i] = image.rgb[3 * i + c] / 255.0;
  return Tensor::from({3, h, w}, std::move(v));
}

Image8 from_tensor(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("from_tensor: expected [3 x H x W], got " + shape_str(image.shape()));
  }
  Image8 out;
  out.height = image.dim(1);
  out.width = image.dim(2);
  const std::size_t n = out.height * out.width;
  out.rgb.resize(3 * n);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      double v = image.at(c * n + i);
      v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
      out.rgb[3 * i + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return out;
}

Tensor load_ppm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return to_tensor(parse_ppm(bytes));
  } catch (const ParseError& e) {
    throw ParseError(e.reason, e.offset, path.string());
  }
}

void save_ppm(const fs::path& path, const Tensor& image) {
  write_bytes(path, encode_ppm(from_tensor(image)));
}

Tensor synthetic_image(std::size_t height, std::size_t width, Rng& rng) {
  std::vector<double> v(3 * height * width);
  auto at = [&](std::size_t c, std::size_t i, std::size_t j) -> double& {
    return v[(c * height + i) * width + j];
  };
  const std::uint64_t kind = rng.below(3);
  double a[3], b[3];
  for (int c = 0; c < 3; ++c) {
    a[c] = rng.uniform(0.1, 0.9);
    b[c] = rng.uniform(0.1, 0.9);
  }
  if (kind == 0) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double dx = std::cos(angle), dy = std::sin(angle);
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const double t = 0.5 + 0.5 * (dx * (j / (width - 1.0) - 0.5) + dy * (i / (height - 1.0) - 0.5)) * std::sqrt(2.0);
        for (std::size_t c = 0; c < 3; ++c) at(c, i, j) = a[c] + (b[c] - a[c]) * std::clamp(t, 0.0, 1.0);
      }
  } else if (kind == 1) {
    const std::size_t cell = 4 + rng.below(5);
    const std::size_t oi = rng.below(cell), oj = rng.below(cell);
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const bool odd = (((i + oi) / cell) + ((j + oj) / cell)) % 2 == 1;
        for (std::size_t c = 0; c < 3; ++c) at(c, i, j) = odd ? a[c] : b[c];
      }
  } else {
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < height; ++i)
        for (std::size_t j = 0; j < width; ++j) at(c, i, j) = 0.5 * a[c];
    const std::size_t blobs = 2 + rng.below(3);
    for (std::size_t k = 0; k < blobs; ++k) {
      const double ci = rng.uniform(0.0, height), cj = rng.uniform(0.0, width);
      const double s = rng.uniform(0.1, 0.25) * std::min(height, width);
      double colour[3];
      for (double& col : colour) col = rng.uniform(-0.4, 0.4);
      for (std::size_t i = 0; i < height; ++i)
        for (std::size_t j = 0; j < width; ++j) {
          const double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
          const double g = std::exp(-d2 / (2.0 * s * s));
          for (std::size_t c = 0; c < 3; ++c) at(c, i, j) += colour[c] * g;
        }
    }
    for (double& e : v) e = std::clamp(e, 0.0, 1.0);
  }
  return Tensor::from({3, height, width}, std::move(v));
}

void generate_dataset(const fs::path& dir, std::size_t count, std::size_t height,
                      std::size_t width, std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const Rng root(seed);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.fork(i);
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.ppm", i);
    save_ppm(dir / name, synthetic_image(height, width, rng));
  }
}

std::vector<Tensor> load_dataset(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("dataset directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("dataset directory '" + dir.string() + "' has no .ppm files");
  std::vector<Tensor> out;
  for (const auto& f : files) {
    out.push_back(load_ppm(f));
  }
  return out;
}

}  // namespace mjscc::io
