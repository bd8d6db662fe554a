// Embedding sets: the EMBSET v1 file format and a synthetic generator.
//
// File layout (UTF-8 text, '\n' line ends):
//
//   EMBSET v1 dim=<n> count=<k> precision=f32
//   <id>\t<label or ->\t<base64 of n little-endian float32>
//   ...
//
// Vectors are float32 on disk and widened to double in memory.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "oneshot/assoc.hpp"
#include "oneshot/base64.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

struct EmbeddingRecord {
  std::string id;
  std::optional<std::string> label;
  FeatureVector vector;
};

class EmbeddingSet {
 public:
  explicit EmbeddingSet(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw UsageError("embedding dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_.at(i); }

  std::string provenance;

  void add(EmbeddingRecord record) {
    if (record.id.empty() || record.id.find_first_of("\t\r\n") != std::string::npos) {
      throw DataError("record id '" + record.id + "' is empty or contains tab/newline");
    }
    if (record.label && (record.label->empty() || *record.label == "-" ||
                         record.label->find_first_of("\t\r\n") != std::string::npos)) {
      throw DataError("record '" + record.id + "' has an unusable label");
    }
    if (record.vector.dim() != dim_) {
      throw DataError("record '" + record.id + "' has " + std::to_string(record.vector.dim()) +
                      " components, expected " + std::to_string(dim_));
    }
    if (!by_id_.emplace(record.id, records_.size()).second) {
      throw DataError("duplicate record id '" + record.id + "'");
    }
    records_.push_back(std::move(record));
  }

  const EmbeddingRecord* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }

  // Distinct labels in order of first appearance.
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& r : records_) {
      if (r.label && seen.insert(*r.label).second) out.push_back(*r.label);
    }
    return out;
  }

 private:
  std::size_t dim_;
  std::vector<EmbeddingRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

inline void write_embset(const EmbeddingSet& set, std::ostream& out) {
  out << "EMBSET v1 dim=" << set.dim() << " count=" << set.size() << " precision=f32\n";
  for (const auto& r : set.records()) {
    out << r.id << '\t' << (r.label ? *r.label : "-") << '\t'
        << base64::encode_le<float>(r.vector.values()) << '\n';
  }
}

inline EmbeddingSet read_embset(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("missing EMBSET header");
  std::size_t dim = 0;
  std::size_t count = 0;
  {
    std::istringstream hs(header);
    std::string magic, version, dim_tok, count_tok, prec_tok, extra;
    hs >> magic >> version >> dim_tok >> count_tok >> prec_tok;
    const auto parse_field = [&](const std::string& tok, std::string_view name) -> std::size_t {
      if (tok.rfind(name, 0) != 0) throw DataError("malformed EMBSET header: expected " + std::string(name));
      const std::string digits = tok.substr(name.size());
      if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw DataError("malformed EMBSET header: bad value in '" + tok + "'");
      }
      return std::stoull(digits);
    };
    if (magic != "EMBSET" || version != "v1") throw DataError("malformed EMBSET header: not an EMBSET v1 file");
    dim = parse_field(dim_tok, "dim=");
    count = parse_field(count_tok, "count=");
    if (prec_tok != "precision=f32") throw DataError("malformed EMBSET header: unsupported precision");
    if (hs >> extra) throw DataError("malformed EMBSET header: trailing token '" + extra + "'");
    if (dim == 0) throw DataError("malformed EMBSET header: dim must be positive");
  }

  EmbeddingSet set(dim);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw DataError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    std::string id = line.substr(0, t1);
    std::string label = line.substr(t1 + 1, t2 - t1 - 1);
    auto values = base64::decode_le<float>(std::string_view(line).substr(t2 + 1));
    if (!values) throw DataError("record '" + id + "': vector is not valid base64 float32 data");
    if (values->size() != dim) {
      throw DataError("record '" + id + "' has " + std::to_string(values->size()) + " components, expected " +
                      std::to_string(dim));
    }
    if (!std::all_of(values->begin(), values->end(), [](double v) { return std::isfinite(v); })) {
      throw DataError("record '" + id + "' contains a non-finite component");
    }
    std::optional<std::string> lab;
    if (label != "-") lab = label;
    set.add({std::move(id), std::move(lab), FeatureVector(std::move(*values))});
  }
  if (set.size() != count) {
    throw DataError("header declares " + std::to_string(count) + " records but file holds " +
                    std::to_string(set.size()));
  }
  return set;
}

inline void save_embset(const EmbeddingSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_embset(set, out);
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline EmbeddingSet load_embset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_embset(in);
}

// ---------------------------------------------------------------------------
// Synthetic embeddings
//
// Class centers are unit directions orthogonal to a fixed "nuisance" subspace
// of dimension b. A sample of class k is
//
//   s = norm * (a * c_k + r * w + g * z),   a^2 + r^2 + g^2 = 1,
//
// with w a random unit direction orthogonal to c_k and to the nuisance
// subspace, and z a random unit direction inside it. Hence cos(s, c_k) = a
// exactly, with a drawn uniformly from [min_intra_cosine, 1]. The nuisance
// share g^2 / (1 - a^2) is uniform per sample: every sample carries some
// "background" from the same subspace.
//
// center_correlation mixes a shared direction into every center, so pairwise
// center cosines sit near that value instead of near zero.

struct SyntheticSpec {
  std::size_t n_classes = 30;
  std::size_t samples_per_class = 20;
  std::size_t dim = 384;
  double max_center_cosine = 0.5;
  double min_intra_cosine = 0.9;
  std::size_t nuisance_dim = 20;
  double center_correlation = 0.0;
  // Norm of every emitted vector; sqrt(dim) when unset (unit-RMS components).
  std::optional<double> norm;
  std::uint64_t seed = 7;
  std::size_t max_retries = 1000;

  double vector_norm() const { return norm.value_or(std::sqrt(static_cast<double>(dim))); }

  void validate() const {
    if (n_classes == 0 || samples_per_class == 0) throw UsageError("spec needs at least one class and sample");
    if (dim == 0) throw UsageError("spec dim must be positive");
    if (nuisance_dim + 2 > dim) throw UsageError("nuisance subspace leaves no room for class directions");
    if (n_classes + nuisance_dim + 1 > dim) throw UsageError("more classes than available directions");
    if (!(max_center_cosine > -1.0 && max_center_cosine < 1.0)) {
      throw UsageError("max_center_cosine must lie in (-1, 1)");
    }
    if (!(min_intra_cosine > -1.0 && min_intra_cosine <= 1.0)) {
      throw UsageError("min_intra_cosine must lie in (-1, 1]");
    }
    if (!(center_correlation >= 0.0 && center_correlation < 1.0)) {
      throw UsageError("center_correlation must lie in [0, 1)");
    }
    if (!(vector_norm() > 0.0) || !std::isfinite(vector_norm())) throw UsageError("norm must be positive");
  }
};

struct SyntheticGeometry {
  std::vector<std::vector<double>> centers;          // unit
  std::vector<std::vector<double>> nuisance_basis;   // orthonormal rows
  std::vector<std::size_t> class_of;                  // per record
  std::vector<double> nuisance_magnitude;             // |g| per record, before scaling by norm
};

struct CertificationReport {
  double min_intra_cosine = 1.0;
  double max_center_cosine = -1.0;
  double max_center_nuisance_leak = 0.0;
  double max_nuisance_mismatch = 0.0;
  bool passed = false;
  std::string failure;
};

struct GeneratedSet {
  EmbeddingSet set;
  SyntheticGeometry geometry;
  CertificationReport report;
};

namespace detail {

inline std::vector<double> gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

inline void remove_component(std::vector<double>& v, const std::vector<double>& unit) {
  const double c = dot(v, unit);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * unit[i];
}

inline bool normalize_in_place(std::vector<double>& v) {
  const double n = norm(v);
  if (!(n > 1e-12)) return false;
  for (double& x : v) x /= n;
  return true;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

}  // namespace detail

inline std::string class_label(std::size_t k) {
  std::ostringstream os;
  os << "class" << std::setw(2) << std::setfill('0') << k;
  return os.str();
}

// Post-hoc geometric checks every generated set must pass.
inline CertificationReport certify(const EmbeddingSet& set, const SyntheticGeometry& geo, const SyntheticSpec& spec) {
  constexpr double kTol = 1e-9;
  CertificationReport rep;
  for (std::size_t i = 0; i < geo.centers.size(); ++i) {
    for (const auto& basis : geo.nuisance_basis) {
      rep.max_center_nuisance_leak = std::max(rep.max_center_nuisance_leak, std::abs(dot(geo.centers[i], basis)));
    }
    for (std::size_t j = i + 1; j < geo.centers.size(); ++j) {
      rep.max_center_cosine = std::max(rep.max_center_cosine, detail::cosine(geo.centers[i], geo.centers[j]));
    }
  }
  for (std::size_t r = 0; r < set.size(); ++r) {
    const auto v = set[r].vector.values();
    rep.min_intra_cosine = std::min(rep.min_intra_cosine, detail::cosine(v, geo.centers[geo.class_of[r]]));
    double in_subspace = 0.0;
    for (const auto& basis : geo.nuisance_basis) in_subspace += std::pow(dot(v, basis), 2);
    const double measured = std::sqrt(in_subspace) / norm(v);
    rep.max_nuisance_mismatch = std::max(rep.max_nuisance_mismatch, std::abs(measured - geo.nuisance_magnitude[r]));
  }
  if (rep.min_intra_cosine < spec.min_intra_cosine - kTol) {
    rep.failure = "a sample falls below the intra-class cosine bound";
  } else if (geo.centers.size() > 1 && rep.max_center_cosine > spec.max_center_cosine + kTol) {
    rep.failure = "two class centers exceed the separation bound";
  } else if (rep.max_center_nuisance_leak > kTol) {
    rep.failure = "a class center leaks into the nuisance subspace";
  } else if (rep.max_nuisance_mismatch > 1e-6) {
    rep.failure = "a sample's nuisance component is not confined to the nuisance subspace";
  }
  rep.passed = rep.failure.empty();
  return rep;
}

inline GeneratedSet generate_with_geometry(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = spec.dim;
  SyntheticGeometry geo;

  // Orthonormal nuisance basis by Gram-Schmidt on Gaussian draws.
  while (geo.nuisance_basis.size() < spec.nuisance_dim) {
    auto v = detail::gaussian_vector(n, rng);
    for (const auto& b : geo.nuisance_basis) detail::remove_component(v, b);
    for (const auto& b : geo.nuisance_basis) detail::remove_component(v, b);
    if (detail::normalize_in_place(v)) geo.nuisance_basis.push_back(std::move(v));
  }
  const auto outside_nuisance = [&](std::vector<double>& v) {
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : geo.nuisance_basis) detail::remove_component(v, b);
    }
  };

  std::vector<double> shared = detail::gaussian_vector(n, rng);
  outside_nuisance(shared);
  detail::normalize_in_place(shared);

  const double rho = spec.center_correlation;
  std::size_t attempts = 0;
  while (geo.centers.size() < spec.n_classes) {
    if (++attempts > spec.max_retries * spec.n_classes) {
      throw DataError("could not place " + std::to_string(spec.n_classes) + " centers with pairwise cosine <= " +
                      std::to_string(spec.max_center_cosine) + " within the retry budget");
    }
    auto u = detail::gaussian_vector(n, rng);
    outside_nuisance(u);
    detail::remove_component(u, shared);
    if (!detail::normalize_in_place(u)) continue;
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = std::sqrt(rho) * shared[i] + std::sqrt(1.0 - rho) * u[i];
    outside_nuisance(c);
    detail::normalize_in_place(c);
    const bool separated = std::all_of(geo.centers.begin(), geo.centers.end(), [&](const auto& other) {
      return detail::cosine(c, other) <= spec.max_center_cosine;
    });
    if (separated) geo.centers.push_back(std::move(c));
  }

  EmbeddingSet set(n);
  const double scale = spec.vector_norm();
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    const auto& center = geo.centers[k];
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      const double a = spec.min_intra_cosine >= 1.0
                           ? 1.0
                           : spec.min_intra_cosine + (1.0 - spec.min_intra_cosine) * unit(rng);
      const double spread = std::sqrt(std::max(0.0, 1.0 - a * a));
      const double share = spec.nuisance_dim > 0 ? unit(rng) : 0.0;
      const double g = spread * std::sqrt(share);
      const double r = spread * std::sqrt(1.0 - share);

      std::vector<double> w;
      do {
        w = detail::gaussian_vector(n, rng);
        outside_nuisance(w);
        detail::remove_component(w, center);
        detail::remove_component(w, center);
      } while (!detail::normalize_in_place(w));

      std::vector<double> z(n, 0.0);
      if (spec.nuisance_dim > 0) {
        const auto coeffs = detail::gaussian_vector(spec.nuisance_dim, rng);
        for (std::size_t j = 0; j < spec.nuisance_dim; ++j) {
          for (std::size_t i = 0; i < n; ++i) z[i] += coeffs[j] * geo.nuisance_basis[j][i];
        }
        detail::normalize_in_place(z);
      }

      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = scale * (a * center[i] + r * w[i] + g * z[i]);
      std::ostringstream id;
      id << class_label(k) << "/s" << std::setw(3) << std::setfill('0') << s;
      set.add({id.str(), class_label(k), FeatureVector(std::move(v))});
      geo.class_of.push_back(k);
      geo.nuisance_magnitude.push_back(g);
    }
  }

  std::ostringstream prov;
  prov << "synthetic classes=" << spec.n_classes << " samples=" << spec.samples_per_class << " dim=" << spec.dim
       << " max_center_cos=" << spec.max_center_cosine << " min_intra_cos=" << spec.min_intra_cosine
       << " nuisance_dim=" << spec.nuisance_dim << " center_corr=" << spec.center_correlation
       << " seed=" << spec.seed;
  set.provenance = prov.str();

  CertificationReport report = certify(set, geo, spec);
  if (!report.passed) throw DataError("generated set failed certification: " + report.failure);
  return {std::move(set), std::move(geo), report};
}

inline EmbeddingSet generate(const SyntheticSpec& spec) { return generate_with_geometry(spec).set; }

}  // namespace oneshot
