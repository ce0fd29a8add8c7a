#include "fseg/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <optional>
#include <algorithm>

namespace fseg {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'E', 'G'};

enum class LayerKind : std::uint32_t { Conv = 1, Fc = 2 };

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n, "layer name");
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n, const char* what) {
    if (size_ - pos_ < n) throw CorruptModel(std::string("model file truncated while reading ") + what);
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::string dims_text(const std::vector<int>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

}  // namespace

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_model(const Cnn& net) {
  const Geometry& g = net.geometry();
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kModelVersion);
  for (int v : {g.input, g.towers, g.kernel, g.maps1, g.maps2, g.hidden, g.classes}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.f64(net.slope());
  w.u32(static_cast<std::uint32_t>(net.blocks().size()));
  const auto params = net.params();
  for (const ParamBlock& b : net.blocks()) {
    w.u32(static_cast<std::uint32_t>(b.conv ? LayerKind::Conv : LayerKind::Fc));
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.raw(b.name.data(), b.name.size());
    w.u32(static_cast<std::uint32_t>(b.dims.size()));
    for (int d : b.dims) w.u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < b.weight_count; ++i) w.f64(params[b.weights + i]);
    w.u32(static_cast<std::uint32_t>(b.bias_count));
    for (std::size_t i = 0; i < b.bias_count; ++i) w.f64(params[b.biases + i]);
  }
  auto& bytes = w.bytes();
  const std::uint32_t crc = crc32_of(bytes.data() + 8, bytes.size() - 8);
  w.u32(crc);
  return std::move(bytes);
}

Cnn decode_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw CorruptModel("model file too short");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw CorruptModel("bad model magic");
  Reader header(bytes.data() + 4, 4);
  const std::uint32_t version = header.u32("version");
  if (version != kModelVersion) {
    throw CorruptModel("unsupported model version " + std::to_string(version));
  }
  const std::size_t payload = bytes.size() - 12;
  Reader tail(bytes.data() + bytes.size() - 4, 4);
  const std::uint32_t stored = tail.u32("checksum");
  if (crc32_of(bytes.data() + 8, payload) != stored) {
    throw CorruptModel("model checksum mismatch (file truncated or damaged)");
  }

  Reader r(bytes.data() + 8, payload);
  Geometry g;
  int* fields[] = {&g.input, &g.towers, &g.kernel, &g.maps1, &g.maps2, &g.hidden, &g.classes};
  for (int* f : fields) {
    const std::uint32_t v = r.u32("geometry");
    if (v == 0 || v > (1u << 20)) throw CorruptModel("implausible geometry field " + std::to_string(v));
    *f = static_cast<int>(v);
  }
  const double slope = r.f64("slope");
  std::optional<Cnn> built;
  try {
    built.emplace(g, slope);
  } catch (const Error& e) {
    throw CorruptModel(std::string("invalid model header: ") + e.what());
  }
  Cnn& net = *built;
  const std::uint32_t nlayers = r.u32("layer count");
  if (nlayers != net.blocks().size()) {
    throw CorruptModel("model declares " + std::to_string(nlayers) + " layers, geometry implies " +
                       std::to_string(net.blocks().size()));
  }
  auto params = net.params();
  for (const ParamBlock& b : net.blocks()) {
    const std::uint32_t kind = r.u32("layer kind");
    const std::uint32_t name_len = r.u32("layer name length");
    if (name_len > 256) throw CorruptModel("implausible layer name length");
    const std::string name = r.str(name_len);
    if (name != b.name) throw CorruptModel("layer " + name + ": expected layer " + b.name);
    const auto expected_kind = b.conv ? LayerKind::Conv : LayerKind::Fc;
    if (kind != static_cast<std::uint32_t>(expected_kind)) {
      throw CorruptModel("layer " + name + ": wrong layer kind tag " + std::to_string(kind));
    }
    const std::uint32_t ndims = r.u32("layer rank");
    if (ndims > 8) throw CorruptModel("layer " + name + ": implausible rank");
    std::vector<int> dims(ndims);
    for (auto& d : dims) d = static_cast<int>(r.u32("layer dims"));
    if (dims != b.dims) {
      throw CorruptModel("layer " + name + ": declared shape " + dims_text(dims) +
                         " does not match expected " + dims_text(b.dims));
    }
    for (std::size_t i = 0; i < b.weight_count; ++i) params[b.weights + i] = r.f64("weights");
    const std::uint32_t nbias = r.u32("bias count");
    if (nbias != b.bias_count) {
      throw CorruptModel("layer " + name + ": declared " + std::to_string(nbias) +
                         " biases, expected " + std::to_string(b.bias_count));
    }
    for (std::size_t i = 0; i < b.bias_count; ++i) params[b.biases + i] = r.f64("biases");
  }
  if (!r.done()) throw CorruptModel("trailing bytes after last layer");
  return std::move(net);
}

void save_model(const Cnn& net, const std::filesystem::path& path) {
  const auto bytes = encode_model(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open model file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing model file: " + path.string());
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Cnn load_model(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_model(bytes);
  } catch (const CorruptModel& e) {
    throw CorruptModel(path.string() + ": " + e.what());
  }
}

std::uint32_t file_crc32(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return crc32_of(bytes.data(), bytes.size());
}

}  // namespace fseg
