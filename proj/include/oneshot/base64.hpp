#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace oneshot::base64 {

inline constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

// Strict decoder: padded input only, no whitespace. nullopt on any defect.
inline std::optional<std::vector<std::uint8_t>> decode(std::string_view text) {
  static const auto table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (std::size_t i = 0; i < kAlphabet.size(); ++i) t[static_cast<unsigned char>(kAlphabet[i])] = int(i);
    return t;
  }();
  if (text.size() % 4 != 0) return std::nullopt;
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        if (!last || j < 2) return std::nullopt;
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0) return std::nullopt;
      const int sextet = table[static_cast<unsigned char>(c)];
      if (sextet < 0) return std::nullopt;
      v = (v << 6) | static_cast<std::uint32_t>(sextet);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

// Little-endian packing of floating-point arrays.
template <class Float>
std::string encode_le(std::span<const double> values) {
  using Bits = std::conditional_t<sizeof(Float) == 4, std::uint32_t, std::uint64_t>;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * sizeof(Float));
  for (double v : values) {
    const Bits bits = std::bit_cast<Bits>(static_cast<Float>(v));
    for (std::size_t b = 0; b < sizeof(Float); ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return encode(bytes);
}

template <class Float>
std::optional<std::vector<double>> decode_le(std::string_view text) {
  using Bits = std::conditional_t<sizeof(Float) == 4, std::uint32_t, std::uint64_t>;
  auto bytes = decode(text);
  if (!bytes || bytes->size() % sizeof(Float) != 0) return std::nullopt;
  std::vector<double> values(bytes->size() / sizeof(Float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    Bits bits = 0;
    for (std::size_t b = 0; b < sizeof(Float); ++b) bits |= Bits{(*bytes)[i * sizeof(Float) + b]} << (8 * b);
    values[i] = static_cast<double>(std::bit_cast<Float>(bits));
  }
  return values;
}

}  // namespace oneshot::base64
