#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "fixtures.hpp"
#include "fseg/model_io.hpp"

using namespace fseg;

namespace {

// Bitwise reflected CRC-32, polynomial 0xEDB88320.
std::uint32_t slow_crc32(const std::uint8_t* p, std::size_t n) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    crc ^= p[i];
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void reseal(std::vector<std::uint8_t>& b) {
  put_u32(b, b.size() - 4, slow_crc32(b.data() + 8, b.size() - 12));
}

/// Offset of the first dim of the named layer, found by walking the layout.
std::size_t dims_offset(const std::vector<std::uint8_t>& b, const std::string& layer) {
  std::size_t at = 8 + 7 * 4 + 8;
  const std::uint32_t nlayers = get_u32(b, at);
  at += 4;
  for (std::uint32_t l = 0; l < nlayers; ++l) {
    at += 4;  // kind
    const std::uint32_t len = get_u32(b, at);
    at += 4;
    const std::string name(reinterpret_cast<const char*>(b.data() + at), len);
    at += len;
    const std::uint32_t ndims = get_u32(b, at);
    at += 4;
    if (name == layer) return at;
    std::size_t weights = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) weights *= get_u32(b, at + 4 * d);
    at += 4 * ndims + 8 * weights;
    const std::uint32_t nbias = get_u32(b, at);
    at += 4 + 8 * nbias;
  }
  ADD_FAILURE() << "layer not found: " << layer;
  return 0;
}

Cnn seeded_net(std::uint64_t seed, Geometry g = {}) {
  Cnn net(g);
  init(net, seed);
  return net;
}

std::string corrupt_message(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_model(bytes);
  } catch (const CorruptModel& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Crc32, MatchesBitwiseReference) {
  const char* check = "123456789";
  EXPECT_EQ(crc32_of(reinterpret_cast<const std::uint8_t*>(check), 9), 0xCBF43926u);
  const auto bytes = encode_model(seeded_net(3));
  EXPECT_EQ(crc32_of(bytes.data(), bytes.size()), slow_crc32(bytes.data(), bytes.size()));
}

TEST(ModelIo, HeaderAndSize) {
  const Cnn net = seeded_net(1);
  const auto bytes = encode_model(net);
  EXPECT_EQ(std::memcmp(bytes.data(), "FSEG", 4), 0);
  EXPECT_EQ(get_u32(bytes, 4), kModelVersion);
  EXPECT_EQ(get_u32(bytes, 8), 33u);
  EXPECT_EQ(get_u32(bytes, 12), 3u);
  EXPECT_EQ(get_u32(bytes, 44), 8u);  // layer count
  std::size_t expected = 12 + 28 + 8 + 4;
  for (const ParamBlock& b : net.blocks())
    expected += 4 + 4 + b.name.size() + 4 + 4 * b.dims.size() + 8 * b.weight_count + 4 + 8 * b.bias_count;
  EXPECT_EQ(bytes.size(), expected);
  EXPECT_EQ(get_u32(bytes, bytes.size() - 4), slow_crc32(bytes.data() + 8, bytes.size() - 12));
}

TEST(ModelIo, RoundTripIsBitExact) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const Cnn net = seeded_net(seed);
    const Cnn back = decode_model(encode_model(net));
    EXPECT_EQ(back, net);
    EXPECT_EQ(encode_model(back), encode_model(net));
  }
  const Geometry small{18, 2, 3, 3, 4, 6, 4};
  Cnn odd(small, 0.2);
  init(odd, 5);
  EXPECT_EQ(decode_model(encode_model(odd)), odd);
}

TEST(ModelIo, FileRoundTrip) {
  const auto dir = fixture::temp_dir("model_io");
  const Cnn net = seeded_net(7);
  save_model(net, dir / "m.fseg");
  EXPECT_EQ(load_model(dir / "m.fseg"), net);
  EXPECT_EQ(file_crc32(dir / "m.fseg"), slow_crc32(encode_model(net).data(), encode_model(net).size()));
}

TEST(ModelIo, TruncationIsRejected) {
  const auto bytes = encode_model(seeded_net(1));
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{11}, std::size_t{12}, std::size_t{40},
                           bytes.size() / 2, bytes.size() - 5, bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
    EXPECT_THROW(decode_model(cut), CorruptModel) << keep;
  }
}

TEST(ModelIo, BadMagicVersionAndChecksum) {
  const auto good = encode_model(seeded_net(1));
  auto magic = good;
  magic[0] = 'X';
  EXPECT_NE(corrupt_message(magic).find("magic"), std::string::npos);

  auto version = good;
  put_u32(version, 4, 2);
  EXPECT_NE(corrupt_message(version).find("version"), std::string::npos);

  auto flipped = good;
  flipped[good.size() / 2] ^= 0x10;
  EXPECT_NE(corrupt_message(flipped).find("checksum"), std::string::npos);

  auto trailing = good;
  trailing.insert(trailing.end() - 4, 0);
  reseal(trailing);
  EXPECT_NE(corrupt_message(trailing).find("trailing"), std::string::npos);
}

TEST(ModelIo, ShapeMismatchNamesTheLayer) {
  auto bytes = encode_model(seeded_net(1));
  const std::size_t at = dims_offset(bytes, "tower1.conv2");
  ASSERT_GT(at, 0u);
  put_u32(bytes, at, get_u32(bytes, at) + 1);
  reseal(bytes);
  const std::string msg = corrupt_message(bytes);
  EXPECT_NE(msg.find("tower1.conv2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("shape"), std::string::npos) << msg;
}

TEST(ModelIo, WrongLayerCountAndKind) {
  auto count = encode_model(seeded_net(1));
  put_u32(count, 44, 7);
  reseal(count);
  EXPECT_THROW(decode_model(count), CorruptModel);

  auto kind = encode_model(seeded_net(1));
  put_u32(kind, 48, 2);  // first layer is a convolution
  reseal(kind);
  EXPECT_NE(corrupt_message(kind).find("tower0.conv1"), std::string::npos);
}

TEST(ModelIo, ImpossibleGeometryIsCorrupt) {
  auto bytes = encode_model(seeded_net(1));
  put_u32(bytes, 8, 7);  // 7x7 input cannot pass two 5x5 convolutions
  reseal(bytes);
  EXPECT_THROW(decode_model(bytes), CorruptModel);
}

TEST(ModelIo, MissingFileIsLoadError) {
  EXPECT_THROW(load_model(fixture::temp_dir("model_missing") / "absent.fseg"), LoadError);
}

TEST(ModelIo, CorruptFileNamesThePath) {
  const auto dir = fixture::temp_dir("model_corrupt");
  {
    std::ofstream out(dir / "bad.fseg", std::ios::binary);
    out << "FSEG junk";
  }
  try {
    load_model(dir / "bad.fseg");
    FAIL();
  } catch (const CorruptModel& e) {
    EXPECT_NE(std::string(e.what()).find("bad.fseg"), std::string::npos);
  }
}
