// Independent reference implementations used by the unit tests and the
// acceptance runner. They share no code with the library beyond plain data
// types: everything is recomputed from the raw vectors in long double.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "oneshot/embeddings.hpp"
#include "test_support.hpp"

namespace oracles {

inline constexpr long double kTwoPi = 2.0L * std::numbers::pi_v<long double>;

inline long double cosine(std::span<const double> a, std::span<const double> b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Nearest lattice point to the angle; a negative angle may also be read one
// full turn up. Nearest to a negative index or past the vocabulary means no
// valid index.
inline std::optional<std::size_t> decode(long double x, long double y, long double phi, std::size_t len) {
  if (std::hypot(x, y) < 1e-6L) return std::nullopt;
  const long double angle = std::atan2(y, x);
  std::vector<long double> readings{angle};
  if (angle < 0) readings.push_back(angle + kTwoPi);
  long double best = 1e9L;
  long long best_i = 0;
  for (long double r : readings) {
    const long long span = static_cast<long long>(kTwoPi / phi) + 2;
    for (long long i = -span; i <= 2 * span; ++i) {
      const long double diff = std::fabs(r - i * phi);
      if (diff < best - 1e-15L) {
        best = diff;
        best_i = i;
      }
    }
  }
  if (best_i < 0 || best_i >= static_cast<long long>(len)) return std::nullopt;
  return static_cast<std::size_t>(best_i);
}

// Naive associative memory: a list of (key, word) pairs answered by
// softmax(q K^T / d) V with V the unit-circle codes of the words.
struct NaiveMemory {
  long double d = 1;
  long double phi = 0.2L;
  std::vector<std::vector<double>> keys;
  std::vector<std::size_t> word_of_key;
  std::vector<std::string> words;

  void teach(const std::string& word, std::span<const double> key) {
    auto it = std::find(words.begin(), words.end(), word);
    if (it == words.end()) {
      words.push_back(word);
      it = words.end() - 1;
    }
    keys.emplace_back(key.begin(), key.end());
    word_of_key.push_back(static_cast<std::size_t>(it - words.begin()));
  }

  // Empty string means "no idea".
  std::string ask(std::span<const double> q) const {
    if (keys.empty()) return {};
    const auto qv = testing_support::to_vec(q);
    std::vector<oneshot::LabelCode> values;
    for (auto w : word_of_key) values.push_back({std::cos(w * static_cast<double>(phi)), std::sin(w * static_cast<double>(phi))});
    const auto r = testing_support::oracle_attend(qv, keys, values, d);
    const auto idx = decode(r.x, r.y, phi, words.size());
    return idx ? words[*idx] : std::string();
  }

  std::size_t nearest_word(std::span<const double> q) const {
    std::size_t best = 0;
    long double best_cos = -2;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const long double c = cosine(q, keys[i]);
      if (c > best_cos) {
        best_cos = c;
        best = i;
      }
    }
    return word_of_key[best];
  }
};

struct OracleRecord {
  std::string record_id;
  std::string predicted;
  bool correct = false;
};

struct OracleRun {
  std::vector<double> accuracy;  // per m, before corrections
  std::vector<OracleRecord> log;
};

// Replays the offline protocol for a given category order and exemplar
// choice. Records of each category are visited in file order.
inline OracleRun replay_protocol(const oneshot::EmbeddingSet& set, const std::vector<std::string>& order,
                                 const std::vector<std::string>& exemplars, long double d, bool correct_last,
                                 bool nearest_neighbor = false) {
  NaiveMemory mem;
  mem.d = d;
  std::vector<std::size_t> presented;
  OracleRun run;
  for (std::size_t m = 0; m < order.size(); ++m) {
    mem.teach(order[m], set.find(exemplars[m])->vector.values());
    std::size_t first_new = presented.size();
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set[i].label == order[m]) presented.push_back(i);
    }
    std::size_t correct = 0;
    std::vector<bool> ok;
    for (std::size_t rec : presented) {
      const auto q = set[rec].vector.values();
      const std::string guess = nearest_neighbor ? mem.words[mem.nearest_word(q)] : mem.ask(q);
      const bool hit = guess == *set[rec].label;
      ok.push_back(hit);
      correct += hit;
      run.log.push_back({set[rec].id, guess, hit});
    }
    run.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(presented.size()));
    if (correct_last) {
      for (std::size_t i = first_new; i < presented.size(); ++i) {
        if (!ok[i]) mem.teach(order[m], set[presented[i]].vector.values());
      }
    }
  }
  return run;
}

// Balanced accuracy of threshold tau, recomputed from raw relevances.
inline double balanced_accuracy(const std::vector<double>& known, const std::vector<double>& unknown, double tau) {
  std::size_t acc = 0, rej = 0;
  for (double r : known) acc += r >= tau;
  for (double r : unknown) rej += r < tau;
  return 0.5 * (static_cast<double>(acc) / known.size() + static_cast<double>(rej) / unknown.size());
}

}  // namespace oracles
