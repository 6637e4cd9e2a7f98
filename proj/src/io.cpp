#include "prmim/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <vector>

#include "prmim/errors.hpp"

namespace prmim {

namespace {

constexpr char kMagic[] = "PRMIM1";
constexpr std::size_t kMagicSize = sizeof(kMagic) - 1;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// Header tokens are separated by whitespace; '#' starts a comment line.
class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  std::string token() {
    skip_space_and_comments();
    std::string t;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') t += char(bytes_[pos_++]);
    if (t.empty()) throw FormatError(name_ + ": truncated PPM header");
    return t;
  }

  std::size_t number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
        t.size() > 9)
      throw FormatError(name_ + ": invalid PPM header field '" + t + "'");
    return std::stoul(t);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError(name_ + ": truncated PPM header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_++]) << (8 * i);
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + long(pos_), bytes_.begin() + long(pos_ + n));
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(name_ + ": truncated checkpoint");
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string name = path.string();
  HeaderReader header(bytes, name);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError(name + ": not a binary PPM (P6)");
  header.token();
  const std::size_t width = header.number();
  const std::size_t height = header.number();
  const std::size_t maxval = header.number();
  if (maxval != 255) throw FormatError(name + ": maxval must be 255, got " + std::to_string(maxval));
  if (width == 0 || height == 0) throw FormatError(name + ": empty image");
  const std::size_t start = header.raster_start();
  const std::size_t expected = width * height * 3;
  if (bytes.size() - start < expected) throw FormatError(name + ": truncated pixel data");

  std::vector<double> px(expected);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        px[(c * height + y) * width + x] = double(bytes[start + (y * width + x) * 3 + c]) / 255.0;
  return Tensor::from_data({3, height, width}, std::move(px));
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
  if (image.shape().size() != 3 || (image.shape()[0] != 3 && image.shape()[0] != 1))
    throw DimensionError("write_ppm expects [3, H, W] or [1, H, W], got " + shape_str(image.shape()));
  const std::size_t C = image.shape()[0], H = image.shape()[1], W = image.shape()[2];
  const std::string header = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image[((C == 1 ? 0 : c) * H + y) * W + x], 0.0, 1.0);
        bytes.push_back(static_cast<unsigned char>(std::floor(v * 255.0 + 0.5)));
      }
  write_all(path, bytes);
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(kMagic, kMagic + kMagicSize);
  for (const auto& [name, t] : params.entries()) {
    put_u32(bytes, std::uint32_t(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    put_u32(bytes, std::uint32_t(t.shape().size()));
    for (std::size_t d : t.shape()) put_u32(bytes, std::uint32_t(d));
    for (double v : t.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_all(path, bytes);
}

std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  ByteReader in(bytes, path.string());
  if (in.text(kMagicSize) != std::string(kMagic, kMagicSize))
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  std::map<std::string, Tensor> out;
  while (!in.done()) {
    const std::string name = in.text(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank > 8) throw FormatError(path.string() + ": implausible rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(in.u32());
    const std::size_t n = shape_numel(shape);
    in.need(4 * n);
    std::vector<double> data(n);
    for (double& v : data) v = static_cast<double>(std::bit_cast<float>(in.u32()));
    out.emplace(name, Tensor::from_data(shape, std::move(data)));
  }
  return out;
}

void load_parameters(Model& model, const std::filesystem::path& path) {
  auto stored = load_checkpoint(path);
  if (stored.size() != model.params.entries().size())
    throw FormatError(path.string() + ": holds " + std::to_string(stored.size()) + " tensors, model has " +
                      std::to_string(model.params.entries().size()));
  ParameterSet replaced;
  for (const auto& [name, current] : model.params.entries()) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError(path.string() + ": missing tensor '" + name + "'");
    if (it->second.shape() != current.shape())
      throw FormatError(path.string() + ": '" + name + "' has shape " + shape_str(it->second.shape()) +
                        ", model expects " + shape_str(current.shape()));
    replaced.add(name, it->second.clone(current.requires_grad()));
  }
  model.params = std::move(replaced);
}

}  // namespace prmim
