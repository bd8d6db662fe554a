// Incremental vocabulary and the unit-circle code for word indices.
//
// Index i is represented by (cos i*phi, sin i*phi). Mixing such codes keeps
// the result between its neighbours on the circle, which is what lets an
// attention mixture be read back as an index by its angle.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "oneshot/error.hpp"
#include "oneshot/label_code.hpp"

namespace oneshot {

// Codes closer to the origin than this carry no usable angle.
inline constexpr double kDecodeMagnitudeFloor = 1e-6;

class EncodingConfig {
 public:
  explicit EncodingConfig(double phi = 0.2) : phi_(phi) {
    if (!(phi > 0.0) || !std::isfinite(phi)) throw UsageError("angle step phi must be positive");
    capacity_ = static_cast<std::size_t>(std::floor(2.0 * std::numbers::pi / phi));
    if (capacity_ == 0) throw UsageError("angle step phi exceeds a full turn");
  }

  double phi() const noexcept { return phi_; }
  // Number of indices that fit on the circle without wrapping past a full turn.
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  double phi_;
  std::size_t capacity_;
};

inline LabelCode encode_index(std::size_t i, const EncodingConfig& cfg) {
  if (i >= cfg.capacity()) {
    throw IndexError("index " + std::to_string(i) + " exceeds encoding capacity " +
                     std::to_string(cfg.capacity()));
  }
  const double angle = static_cast<double>(i) * cfg.phi();
  return {std::cos(angle), std::sin(angle)};
}

// Reads an index back from the angle of a (possibly mixed) code.
//
// The angle comes from the two-argument arctangent in (-pi, pi]. Indices past
// pi/phi land at negative angles, so a negative angle has two readings: a
// negative index (invalid) or the same angle plus a full turn. The reading
// whose lattice point i*phi lies closer to the code wins. Codes that sit on a
// negative lattice point, e.g. angle -phi, therefore stay invalid, while codes
// of indices above pi/phi decode to themselves.
//
// Rounding is half away from zero.
inline std::optional<std::size_t> decode_code(const LabelCode& code, const EncodingConfig& cfg,
                                              std::size_t vocab_len) {
  if (!std::isfinite(code.x) || !std::isfinite(code.y)) return std::nullopt;
  if (!(code.magnitude() >= kDecodeMagnitudeFloor)) return std::nullopt;

  const double phi = cfg.phi();
  const double angle = std::atan2(code.y, code.x);
  double index = std::round(angle / phi);
  if (angle < 0.0) {
    const double turned = angle + 2.0 * std::numbers::pi;
    const double wrapped = std::round(turned / phi);
    if (std::abs(turned - wrapped * phi) < std::abs(angle - index * phi)) index = wrapped;
  }
  if (index < 0.0 || index >= static_cast<double>(vocab_len)) return std::nullopt;
  return static_cast<std::size_t>(index);
}

// Trims surrounding whitespace, lowercases, and collapses inner whitespace
// runs to a single space.
inline std::string normalize_name(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

struct VocabEntry {
  std::size_t index;
  bool is_new;
};

// Ordered list of unique normalized names. Indices never change once given.
class Vocabulary {
 public:
  explicit Vocabulary(std::size_t capacity = EncodingConfig().capacity()) : capacity_(capacity) {}

  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::vector<std::string>& words() const noexcept { return words_; }

  VocabEntry get_or_add(std::string_view name) {
    std::string word = normalize_name(name);
    if (word.empty()) throw UsageError("name is empty");
    if (auto found = find(word)) return {*found, false};
    if (words_.size() >= capacity_) {
      throw CapacityError("vocabulary is full (" + std::to_string(capacity_) +
                          " words); cannot add '" + word + "'");
    }
    const std::size_t index = words_.size();
    index_.emplace(word, index);
    words_.push_back(std::move(word));
    return {index, true};
  }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(normalize_name(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name_of(std::size_t i) const {
    if (i >= words_.size()) {
      throw IndexError("vocabulary index " + std::to_string(i) + " out of range (size " +
                       std::to_string(words_.size()) + ")");
    }
    return words_[i];
  }

 private:
  std::size_t capacity_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace oneshot
