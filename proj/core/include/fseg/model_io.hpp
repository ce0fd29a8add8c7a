#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fseg/cnn.hpp"

namespace fseg {

// Model file layout, all integers u32 and all reals f64, little-endian:
//
//   "FSEG" | version | payload | crc32(payload)
//
//   payload = input towers kernel maps1 maps2 hidden classes | slope | nlayers
//             then per layer:
//               kind (1 = conv, 2 = fully connected) | name_len | name bytes
//               ndims | dims... | weights... | nbias | biases...
inline constexpr std::uint32_t kModelVersion = 1;

std::vector<std::uint8_t> encode_model(const Cnn& net);
/// Throws CorruptModel on any structural problem; never returns a partial net.
Cnn decode_model(const std::vector<std::uint8_t>& bytes);

void save_model(const Cnn& net, const std::filesystem::path& path);
Cnn load_model(const std::filesystem::path& path);

/// CRC-32 (IEEE) of a byte range.
std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);
std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace fseg
