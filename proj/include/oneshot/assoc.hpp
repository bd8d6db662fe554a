// Attention-style associative memory.
//
// A store holds l key/value pairs: keys are n-dimensional feature vectors,
// values are 2-D label codes. A query q is expressed as a softmax mixture of
// the keys,
//
//   c = softmax(q K^T / d)
//
// and the response is the same mixture of the values, o = c V.
//
// In raw mode the logits are plain dot products, so any component of q that
// is orthogonal to span(K) has no effect on the response: the answer for q
// equals the answer for its projection onto the key subspace. Normalized mode
// divides each logit by |q||k_i| (cosine similarity) instead.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oneshot/error.hpp"
#include "oneshot/label_code.hpp"

namespace oneshot {

// An n-dimensional embedding. All components are finite.
class FeatureVector {
 public:
  FeatureVector() = default;

  explicit FeatureVector(std::vector<double> components) : components_(std::move(components)) {
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (!std::isfinite(components_[i])) {
        throw UsageError("feature vector component " + std::to_string(i) + " is not finite");
      }
    }
  }

  FeatureVector(std::initializer_list<double> components)
      : FeatureVector(std::vector<double>(components)) {}

  std::size_t dim() const noexcept { return components_.size(); }
  bool empty() const noexcept { return components_.empty(); }
  std::span<const double> values() const noexcept { return components_; }
  double operator[](std::size_t i) const { return components_[i]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<double> components_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

using MixCoefficients = std::vector<double>;

struct AttendConfig {
  double d = 1.0;
  bool normalize_similarities = false;

  // The conventional transformer temperature sqrt(n).
  static AttendConfig for_dim(std::size_t dim, bool normalize = false) {
    return AttendConfig{std::sqrt(static_cast<double>(dim)), normalize};
  }

  void validate() const {
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw UsageError("scaling factor d must be a positive finite number");
    }
  }
};

struct AttendResult {
  LabelCode output;
  MixCoefficients coeffs;
};

// Numerically stable softmax. Subtracting the maximum is exact because
// softmax(x + c) == softmax(x) for any scalar c.
inline std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) throw UsageError("softmax of an empty sequence");
  for (double v : x) {
    if (!std::isfinite(v)) throw UsageError("softmax input contains a non-finite entry");
  }
  const double peak = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

// Append-only list of (key, value) pairs sharing one key dimension.
// Keys are stored row-major in a single buffer (the l x n matrix K).
class AssocStore {
 public:
  explicit AssocStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw UsageError("key dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const double> key(std::size_t i) const {
    if (i >= size()) throw IndexError("pair index " + std::to_string(i) + " out of range");
    return std::span<const double>(keys_).subspan(i * dim_, dim_);
  }
  const LabelCode& value(std::size_t i) const {
    if (i >= size()) throw IndexError("pair index " + std::to_string(i) + " out of range");
    return values_[i];
  }
  double key_norm_squared(std::size_t i) const { return key_norms_sq_.at(i); }

  // Duplicate keys are allowed; a later pair never replaces an earlier one.
  void add_pair(const FeatureVector& key, LabelCode value) {
    if (key.dim() != dim_) {
      throw DimensionError("key has dimension " + std::to_string(key.dim()) + ", store expects " +
                           std::to_string(dim_));
    }
    if (!std::isfinite(value.x) || !std::isfinite(value.y)) {
      throw UsageError("value code is not finite");
    }
    keys_.reserve(keys_.size() + dim_);
    keys_.insert(keys_.end(), key.values().begin(), key.values().end());
    key_norms_sq_.push_back(dot(key.values(), key.values()));
    values_.push_back(value);
  }

 private:
  std::size_t dim_;
  std::vector<double> keys_;
  std::vector<double> key_norms_sq_;
  std::vector<LabelCode> values_;
};

namespace detail {

inline void check_query(const FeatureVector& q, const AssocStore& store) {
  if (q.dim() != store.dim()) {
    throw DimensionError("query has dimension " + std::to_string(q.dim()) + ", store expects " +
                         std::to_string(store.dim()));
  }
  if (store.empty()) throw UsageError("association store is empty");
}

// q.k / sqrt(|q|^2 |k|^2) rather than q.k / (|q| |k|): for k == q this is
// exactly 1.0, since sqrt(fl(s * s)) == s in binary floating point.
inline std::vector<double> cosines(const FeatureVector& q, const AssocStore& store) {
  const double qq = dot(q.values(), q.values());
  if (qq == 0.0) throw UsageError("query vector has zero norm");
  std::vector<double> out(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const double kk = store.key_norm_squared(i);
    if (kk == 0.0) throw UsageError("key " + std::to_string(i) + " has zero norm");
    out[i] = std::clamp(dot(q.values(), store.key(i)) / std::sqrt(qq * kk), -1.0, 1.0);
  }
  return out;
}

}  // namespace detail

inline std::vector<double> similarities(const FeatureVector& q, const AssocStore& store,
                                        const AttendConfig& cfg) {
  detail::check_query(q, store);
  if (cfg.normalize_similarities) return detail::cosines(q, store);
  std::vector<double> out(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out[i] = dot(q.values(), store.key(i));
  return out;
}

inline AttendResult attend(const FeatureVector& q, const AssocStore& store, const AttendConfig& cfg) {
  cfg.validate();
  std::vector<double> logits = similarities(q, store, cfg);
  for (double& v : logits) v /= cfg.d;
  AttendResult result{{0.0, 0.0}, softmax(logits)};
  for (std::size_t i = 0; i < store.size(); ++i) {
    result.output.x += result.coeffs[i] * store.value(i).x;
    result.output.y += result.coeffs[i] * store.value(i).y;
  }
  return result;
}

// Maximum cosine similarity between q and any stored key; the closer to 1,
// the more q resembles something already taught.
inline double relevance(const FeatureVector& q, const AssocStore& store) {
  detail::check_query(q, store);
  const auto c = detail::cosines(q, store);
  return *std::max_element(c.begin(), c.end());
}

}  // namespace oneshot
