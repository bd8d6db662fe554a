// Teach/ask state machine for one-shot object naming.
//
// teach(name, f) appends the pair (f, code(index(name))); ask(f) mixes the
// taught codes by attention and reads the index back from the mixture's
// angle. Corrections are ordinary teaches: pairs are only ever appended.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oneshot/assoc.hpp"
#include "oneshot/base64.hpp"
#include "oneshot/error.hpp"
#include "oneshot/vocab.hpp"

namespace oneshot {

struct NamingConfig {
  std::size_t dim = 384;
  double phi = 0.2;
  // Attention temperature; sqrt(dim) when unset.
  std::optional<double> d;
  // Minimum relevance for a Named answer; no thresholding when unset.
  std::optional<double> relevance_threshold;
  bool normalize_similarities = false;

  double scaling() const { return d.value_or(std::sqrt(static_cast<double>(dim))); }

  AttendConfig attend_config() const { return AttendConfig{scaling(), normalize_similarities}; }

  void validate() const {
    if (dim == 0) throw UsageError("dim must be positive");
    (void)EncodingConfig{phi};
    attend_config().validate();
    if (relevance_threshold &&
        !(*relevance_threshold >= -1.0 && *relevance_threshold <= 1.0)) {
      throw UsageError("relevance threshold must lie in [-1, 1]");
    }
  }
};

struct TeachResult {
  std::size_t index;
  bool is_new_word;
  std::size_t pair_count;
};

struct Named {
  std::string name;
  std::size_t index;
  double relevance;
};

enum class NoIdeaReason { kEmptyStore, kInvalidIndex, kBelowThreshold };

inline std::string_view to_string(NoIdeaReason reason) {
  switch (reason) {
    case NoIdeaReason::kEmptyStore: return "empty_store";
    case NoIdeaReason::kInvalidIndex: return "invalid_index";
    case NoIdeaReason::kBelowThreshold: return "below_threshold";
  }
  return "unknown";
}

struct NoIdea {
  NoIdeaReason reason;
  std::optional<double> relevance;
};

using QueryOutcome = std::variant<Named, NoIdea>;

inline const Named* as_named(const QueryOutcome& outcome) { return std::get_if<Named>(&outcome); }

struct SessionPair {
  FeatureVector key;
  LabelCode value;
  std::string name;
};

struct SessionSnapshot {
  NamingConfig config;
  std::vector<std::string> vocabulary;
  std::vector<SessionPair> pairs;
  std::uint64_t teach_counter = 0;
};

class NamingEngine {
 public:
  explicit NamingEngine(NamingConfig config = {})
      : config_(validated(config)),
        encoding_(config_.phi),
        vocab_(encoding_.capacity()),
        store_(config_.dim) {}

  NamingEngine(const NamingEngine& other) : NamingEngine(other.config()) { *this = other; }
  NamingEngine& operator=(const NamingEngine& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    config_ = other.config_;
    encoding_ = other.encoding_;
    vocab_ = other.vocab_;
    store_ = other.store_;
    pair_names_ = other.pair_names_;
    teach_counter_ = other.teach_counter_;
    return *this;
  }

  const NamingConfig& config() const noexcept { return config_; }

  std::size_t pair_count() const {
    std::shared_lock lock(mutex_);
    return store_.size();
  }

  std::vector<std::string> words() const {
    std::shared_lock lock(mutex_);
    return vocab_.words();
  }

  TeachResult teach(std::string_view name, const FeatureVector& features) {
    check_dim(features);
    std::unique_lock lock(mutex_);
    // Validate everything before touching state so a failure leaves no trace.
    const std::string word = normalize_name(name);
    if (word.empty()) throw UsageError("name is empty");
    if (!vocab_.find(word) && vocab_.size() >= vocab_.capacity()) {
      throw CapacityError("vocabulary is full (" + std::to_string(vocab_.capacity()) +
                          " words); cannot add '" + word + "'");
    }
    const VocabEntry entry = vocab_.get_or_add(word);
    store_.add_pair(features, encode_index(entry.index, encoding_));
    pair_names_.push_back(word);
    ++teach_counter_;
    return {entry.index, entry.is_new, store_.size()};
  }

  // A correction is a new pair for the same features.
  TeachResult correct(std::string_view name, const FeatureVector& features) {
    return teach(name, features);
  }

  QueryOutcome ask(const FeatureVector& features) const {
    check_dim(features);
    std::shared_lock lock(mutex_);
    if (store_.empty()) return NoIdea{NoIdeaReason::kEmptyStore, std::nullopt};

    const double rel = relevance(features, store_);
    // The threshold applies whether or not the mixture decodes to a valid index.
    if (config_.relevance_threshold && rel < *config_.relevance_threshold) {
      return NoIdea{NoIdeaReason::kBelowThreshold, rel};
    }
    const AttendResult mix = attend(features, store_, config_.attend_config());
    const auto index = decode_code(mix.output, encoding_, vocab_.size());
    if (!index) return NoIdea{NoIdeaReason::kInvalidIndex, rel};
    return Named{vocab_.name_of(*index), *index, rel};
  }

  // Raw attention output for diagnostics.
  AttendResult mixture(const FeatureVector& features) const {
    check_dim(features);
    std::shared_lock lock(mutex_);
    return attend(features, store_, config_.attend_config());
  }

  SessionSnapshot snapshot() const {
    std::shared_lock lock(mutex_);
    SessionSnapshot snap{config_, vocab_.words(), {}, teach_counter_};
    snap.pairs.reserve(store_.size());
    for (std::size_t i = 0; i < store_.size(); ++i) {
      const auto key = store_.key(i);
      snap.pairs.push_back({FeatureVector(std::vector<double>(key.begin(), key.end())),
                            store_.value(i), pair_names_[i]});
    }
    return snap;
  }

  // Rebuilds an engine from a snapshot after checking every snapshot invariant.
  static NamingEngine restore(const SessionSnapshot& snap) {
    try {
      snap.config.validate();
    } catch (const UsageError& e) {
      throw ValidationError(std::string("snapshot config invalid: ") + e.what());
    }
    NamingEngine engine(snap.config);
    for (std::size_t i = 0; i < snap.vocabulary.size(); ++i) {
      const std::string& word = snap.vocabulary[i];
      if (word.empty() || normalize_name(word) != word) {
        throw ValidationError("snapshot vocabulary entry " + std::to_string(i) + " is not a normalized name");
      }
      if (i >= engine.vocab_.capacity()) {
        throw ValidationError("snapshot vocabulary exceeds encoding capacity");
      }
      if (!engine.vocab_.get_or_add(word).is_new) {
        throw ValidationError("snapshot vocabulary contains duplicate word '" + word + "'");
      }
    }
    if (snap.teach_counter != snap.pairs.size()) {
      throw ValidationError("snapshot teach counter " + std::to_string(snap.teach_counter) +
                            " does not equal pair count " + std::to_string(snap.pairs.size()));
    }
    for (std::size_t i = 0; i < snap.pairs.size(); ++i) {
      const SessionPair& pair = snap.pairs[i];
      const std::string where = "snapshot pair " + std::to_string(i);
      if (pair.key.dim() != snap.config.dim) throw ValidationError(where + " key has wrong dimension");
      if (std::abs(pair.value.magnitude() - 1.0) > 1e-12) {
        throw ValidationError(where + " value code is not on the unit circle");
      }
      const auto index = engine.vocab_.find(pair.name);
      if (!index || normalize_name(pair.name) != pair.name) {
        throw ValidationError(where + " names '" + pair.name + "', which is not in the vocabulary");
      }
      const LabelCode expected = encode_index(*index, engine.encoding_);
      if (std::abs(expected.x - pair.value.x) > 1e-12 || std::abs(expected.y - pair.value.y) > 1e-12) {
        throw ValidationError(where + " value code does not encode the index of '" + pair.name + "'");
      }
      engine.store_.add_pair(pair.key, pair.value);
      engine.pair_names_.push_back(pair.name);
    }
    engine.teach_counter_ = snap.teach_counter;
    return engine;
  }

 private:
  static const NamingConfig& validated(const NamingConfig& config) {
    config.validate();
    return config;
  }

  void check_dim(const FeatureVector& features) const {
    if (features.dim() != config_.dim) {
      throw DimensionError("features have dimension " + std::to_string(features.dim()) +
                           ", engine expects " + std::to_string(config_.dim));
    }
  }

  NamingConfig config_;
  EncodingConfig encoding_;
  Vocabulary vocab_;
  AssocStore store_;
  std::vector<std::string> pair_names_;
  std::uint64_t teach_counter_ = 0;
  mutable std::shared_mutex mutex_;
};

// Session files are JSON; keys are base64 of little-endian float64 so a
// restored session answers bit-identically.
inline constexpr std::string_view kSessionFormat = "oneshot-session";
inline constexpr int kSessionVersion = 1;

inline nlohmann::json to_json(const SessionSnapshot& snap) {
  using nlohmann::json;
  json config = {{"dim", snap.config.dim},
                 {"phi", snap.config.phi},
                 {"d", snap.config.scaling()},
                 {"normalize_similarities", snap.config.normalize_similarities},
                 {"relevance_threshold", nullptr}};
  if (snap.config.relevance_threshold) config["relevance_threshold"] = *snap.config.relevance_threshold;
  json pairs = json::array();
  for (const auto& pair : snap.pairs) {
    pairs.push_back({{"name", pair.name},
                     {"value", {pair.value.x, pair.value.y}},
                     {"key", base64::encode_le<double>(pair.key.values())}});
  }
  return {{"format", kSessionFormat}, {"version", kSessionVersion}, {"precision", "f64"},
          {"config", config}, {"vocabulary", snap.vocabulary}, {"teach_counter", snap.teach_counter},
          {"pairs", pairs}};
}

inline SessionSnapshot snapshot_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kSessionFormat) throw DataError("not a session file");
    if (doc.at("version").get<int>() != kSessionVersion) {
      throw DataError("unsupported session version " + doc.at("version").dump());
    }
    if (doc.at("precision").get<std::string>() != "f64") throw DataError("session keys must be f64");
    SessionSnapshot snap;
    const auto& cfg = doc.at("config");
    snap.config.dim = cfg.at("dim").get<std::size_t>();
    snap.config.phi = cfg.at("phi").get<double>();
    snap.config.d = cfg.at("d").get<double>();
    snap.config.normalize_similarities = cfg.at("normalize_similarities").get<bool>();
    if (!cfg.at("relevance_threshold").is_null()) {
      snap.config.relevance_threshold = cfg.at("relevance_threshold").get<double>();
    }
    snap.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
    snap.teach_counter = doc.at("teach_counter").get<std::uint64_t>();
    for (const auto& pair : doc.at("pairs")) {
      auto key = base64::decode_le<double>(pair.at("key").get<std::string>());
      if (!key) throw DataError("session pair key is not valid base64 float64 data");
      const auto& value = pair.at("value");
      if (!value.is_array() || value.size() != 2) throw DataError("session pair value must be [x, y]");
      snap.pairs.push_back({FeatureVector(std::move(*key)),
                            {value[0].get<double>(), value[1].get<double>()},
                            pair.at("name").get<std::string>()});
    }
    return snap;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed session file: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed session file: ") + e.what());
  }
}

inline void save_session(const NamingEngine& engine, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << to_json(engine.snapshot()).dump(1) << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline NamingEngine load_session(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
  return NamingEngine::restore(snapshot_from_json(doc));
}

}  // namespace oneshot
