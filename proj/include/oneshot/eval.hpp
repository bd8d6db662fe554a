// Offline evaluation of one-shot naming on a labeled embedding set.
//
// Protocol: shuffle the categories with a seeded RNG. For m = 1..C, teach one
// randomly chosen exemplar of category m, then ask about every record of
// categories 1..m. With LastCategory corrections, each misclassified record
// of category m is taught its true name afterwards (one pass, record order).
// The row for m reports accuracy measured before that round's corrections
// unless Measure::kAfterCorrections is selected.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "oneshot/embeddings.hpp"
#include "oneshot/engine.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

enum class Corrections { kOff, kLastCategory, kSaturate };
enum class Measure { kBeforeCorrections, kAfterCorrections };

inline constexpr std::size_t kSaturationPassBudget = 10;

struct EvalProtocolSpec {
  std::uint64_t seed = 0;
  Corrections corrections = Corrections::kOff;
  Measure measure = Measure::kBeforeCorrections;
  // dim is taken from the embedding set.
  NamingConfig naming;
};

struct EvalRow {
  std::size_t category_count = 0;
  std::size_t evaluated_count = 0;
  std::size_t correct_count = 0;
  double accuracy = 0.0;
  std::size_t corrections_added = 0;
};

struct RecordOutcome {
  std::size_t category_count = 0;
  std::string record_id;
  std::string label;
  std::string predicted;  // empty for "no idea"
  std::string outcome;    // "named" or a NoIdeaReason string
  std::optional<double> relevance;
  bool correct = false;
};

struct EvalResult {
  std::vector<std::string> category_order;
  std::vector<std::string> exemplar_ids;
  std::vector<EvalRow> curve;
  std::vector<RecordOutcome> log;
};

namespace detail {

struct Categorized {
  std::vector<std::string> labels;               // first-appearance order
  std::vector<std::vector<std::size_t>> members;  // record indices per label
};

inline Categorized categorize(const EmbeddingSet& set) {
  Categorized out;
  std::unordered_map<std::string, std::size_t> slot;
  std::unordered_map<std::string, std::string> normalized_owner;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& r = set[i];
    if (!r.label) throw DataError("record '" + r.id + "' has no label");
    auto [it, inserted] = slot.emplace(*r.label, out.labels.size());
    if (inserted) {
      const std::string norm = normalize_name(*r.label);
      auto [owner, fresh] = normalized_owner.emplace(norm, *r.label);
      if (!fresh) {
        throw DataError("labels '" + owner->second + "' and '" + *r.label + "' collide as names");
      }
      out.labels.push_back(*r.label);
      out.members.emplace_back();
    }
    out.members[it->second].push_back(i);
  }
  return out;
}

inline NamingConfig config_for(const EmbeddingSet& set, NamingConfig cfg) {
  cfg.dim = set.dim();
  return cfg;
}

}  // namespace detail

inline EvalResult eval_protocol(const EmbeddingSet& set, const EvalProtocolSpec& spec) {
  const auto cats = detail::categorize(set);
  if (cats.labels.empty()) throw DataError("embedding set has no categories");

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order(cats.labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  NamingEngine engine(detail::config_for(set, spec.naming));
  EvalResult result;
  std::vector<std::size_t> presented;  // record indices of categories 1..m in order

  const auto judge = [&](std::size_t rec, std::size_t m) {
    const auto& r = set[rec];
    const QueryOutcome q = engine.ask(r.vector);
    RecordOutcome out{m, r.id, *r.label, "", "named", std::nullopt, false};
    if (const Named* named = as_named(q)) {
      out.predicted = named->name;
      out.relevance = named->relevance;
      out.correct = named->name == normalize_name(*r.label);
    } else {
      const auto& no = std::get<NoIdea>(q);
      out.outcome = std::string(to_string(no.reason));
      out.relevance = no.relevance;
    }
    return out;
  };

  for (std::size_t m = 1; m <= order.size(); ++m) {
    const std::size_t cat = order[m - 1];
    const auto& members = cats.members[cat];
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const std::size_t exemplar = members[pick(rng)];
    engine.teach(cats.labels[cat], set[exemplar].vector);
    result.category_order.push_back(cats.labels[cat]);
    result.exemplar_ids.push_back(set[exemplar].id);
    presented.insert(presented.end(), members.begin(), members.end());

    EvalRow row{m, presented.size(), 0, 0.0, 0};
    std::vector<RecordOutcome> outcomes;
    outcomes.reserve(presented.size());
    for (std::size_t rec : presented) outcomes.push_back(judge(rec, m));

    if (spec.corrections == Corrections::kLastCategory) {
      for (std::size_t i = presented.size() - members.size(); i < presented.size(); ++i) {
        if (!outcomes[i].correct) {
          engine.correct(cats.labels[cat], set[presented[i]].vector);
          ++row.corrections_added;
        }
      }
    } else if (spec.corrections == Corrections::kSaturate) {
      std::vector<RecordOutcome> current = outcomes;
      for (std::size_t pass = 0; pass < kSaturationPassBudget; ++pass) {
        std::size_t added = 0;
        for (std::size_t i = 0; i < presented.size(); ++i) {
          if (!current[i].correct) {
            engine.correct(*set[presented[i]].label, set[presented[i]].vector);
            ++added;
          }
        }
        row.corrections_added += added;
        if (added == 0) break;
        for (std::size_t i = 0; i < presented.size(); ++i) current[i] = judge(presented[i], m);
      }
    }

    if (spec.measure == Measure::kAfterCorrections && row.corrections_added > 0) {
      for (std::size_t i = 0; i < presented.size(); ++i) outcomes[i] = judge(presented[i], m);
    }
    for (const auto& o : outcomes) row.correct_count += o.correct ? 1 : 0;
    row.accuracy = static_cast<double>(row.correct_count) / static_cast<double>(row.evaluated_count);
    result.curve.push_back(row);
    result.log.insert(result.log.end(), outcomes.begin(), outcomes.end());
  }
  return result;
}

struct CurveComparison {
  std::vector<double> delta;  // corrected minus baseline accuracy, per m
  double max_drop = 0.0;      // largest baseline-over-corrected shortfall (>= 0)
};

inline CurveComparison compare_curves(const std::vector<EvalRow>& corrected, const std::vector<EvalRow>& baseline) {
  if (corrected.size() != baseline.size()) throw UsageError("curves have different lengths");
  CurveComparison cmp;
  for (std::size_t i = 0; i < corrected.size(); ++i) {
    const double d = corrected[i].accuracy - baseline[i].accuracy;
    cmp.delta.push_back(d);
    cmp.max_drop = std::max(cmp.max_drop, -d);
  }
  return cmp;
}

inline void write_curve_csv(const std::vector<EvalRow>& curve, std::ostream& out) {
  out << "category_count,evaluated_count,correct_count,accuracy,corrections_added\n";
  out << std::setprecision(17);
  for (const auto& r : curve) {
    out << r.category_count << ',' << r.evaluated_count << ',' << r.correct_count << ',' << r.accuracy << ','
        << r.corrections_added << '\n';
  }
}

inline void write_log_csv(const std::vector<RecordOutcome>& log, std::ostream& out) {
  out << "category_count,record_id,label,predicted,outcome,relevance,correct\n";
  out << std::setprecision(17);
  for (const auto& o : log) {
    out << o.category_count << ',' << o.record_id << ',' << o.label << ',' << o.predicted << ',' << o.outcome << ',';
    if (o.relevance) out << *o.relevance;
    out << ',' << (o.correct ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Relevance threshold calibration
//
// One exemplar of each known category is taught. Every record's relevance
// (max cosine to a taught key) is then compared with candidate thresholds
// tau = -1, -0.99, ..., 1: a known record should be accepted (relevance >=
// tau), an unknown one rejected. The recommended tau maximizes balanced
// accuracy; among equally good candidates it is the middle of the longest
// contiguous run, i.e. the one with the widest margin on both sides.

inline constexpr std::size_t kThresholdSweepSteps = 201;

struct CalibrationSpec {
  std::uint64_t seed = 0;
  std::vector<std::string> unknown_labels;
  NamingConfig naming;
};

struct SweepRow {
  double tau = 0.0;
  double known_accept_rate = 0.0;
  double unknown_reject_rate = 0.0;
  double balanced_accuracy = 0.0;
};

struct CalibrationResult {
  double tau = 0.0;
  double balanced_accuracy = 0.0;
  std::vector<SweepRow> sweep;
  std::vector<std::string> exemplar_ids;  // one per known category
  std::vector<double> known_relevance;
  std::vector<double> unknown_relevance;
};

inline double sweep_tau(std::size_t k) {
  return -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(kThresholdSweepSteps - 1);
}

inline CalibrationResult calibrate_threshold(const EmbeddingSet& set, const CalibrationSpec& spec) {
  const auto cats = detail::categorize(set);
  std::vector<bool> unknown(cats.labels.size(), false);
  for (const auto& label : spec.unknown_labels) {
    auto it = std::find(cats.labels.begin(), cats.labels.end(), label);
    if (it == cats.labels.end()) throw DataError("unknown-category label '" + label + "' is not in the set");
    unknown[static_cast<std::size_t>(it - cats.labels.begin())] = true;
  }
  const auto n_unknown = static_cast<std::size_t>(std::count(unknown.begin(), unknown.end(), true));
  if (n_unknown == 0) throw UsageError("calibration needs at least one held-out unknown category");
  if (n_unknown == cats.labels.size()) throw UsageError("calibration needs at least one known category");

  NamingConfig cfg = detail::config_for(set, spec.naming);
  cfg.relevance_threshold.reset();
  NamingEngine engine(cfg);
  std::mt19937_64 rng(spec.seed);
  std::vector<std::string> exemplar_ids;
  for (std::size_t c = 0; c < cats.labels.size(); ++c) {
    if (unknown[c]) continue;
    std::uniform_int_distribution<std::size_t> pick(0, cats.members[c].size() - 1);
    const std::size_t exemplar = cats.members[c][pick(rng)];
    engine.teach(cats.labels[c], set[exemplar].vector);
    exemplar_ids.push_back(set[exemplar].id);
  }

  CalibrationResult result;
  result.exemplar_ids = std::move(exemplar_ids);
  // The engine only exposes relevance through ask(); with thresholding off
  // every outcome carries it.
  for (std::size_t c = 0; c < cats.labels.size(); ++c) {
    for (std::size_t rec : cats.members[c]) {
      const QueryOutcome q = engine.ask(set[rec].vector);
      const double rel = as_named(q) ? as_named(q)->relevance : *std::get<NoIdea>(q).relevance;
      (unknown[c] ? result.unknown_relevance : result.known_relevance).push_back(rel);
    }
  }

  for (std::size_t k = 0; k < kThresholdSweepSteps; ++k) {
    const double tau = sweep_tau(k);
    SweepRow row{tau};
    const auto accepted = std::count_if(result.known_relevance.begin(), result.known_relevance.end(),
                                        [&](double r) { return r >= tau; });
    const auto rejected = std::count_if(result.unknown_relevance.begin(), result.unknown_relevance.end(),
                                        [&](double r) { return r < tau; });
    row.known_accept_rate = static_cast<double>(accepted) / static_cast<double>(result.known_relevance.size());
    row.unknown_reject_rate = static_cast<double>(rejected) / static_cast<double>(result.unknown_relevance.size());
    row.balanced_accuracy = 0.5 * (row.known_accept_rate + row.unknown_reject_rate);
    result.sweep.push_back(row);
  }

  double best = -1.0;
  for (const auto& row : result.sweep) best = std::max(best, row.balanced_accuracy);
  std::size_t run_start = 0, run_len = 0, best_start = 0, best_len = 0;
  for (std::size_t k = 0; k < result.sweep.size(); ++k) {
    if (result.sweep[k].balanced_accuracy == best) {
      if (run_len == 0) run_start = k;
      if (++run_len > best_len) {
        best_len = run_len;
        best_start = run_start;
      }
    } else {
      run_len = 0;
    }
  }
  const std::size_t chosen = best_start + (best_len - 1) / 2;
  result.tau = result.sweep[chosen].tau;
  result.balanced_accuracy = best;
  return result;
}

inline void write_sweep_csv(const std::vector<SweepRow>& sweep, std::ostream& out) {
  out << "tau,known_accept_rate,unknown_reject_rate,balanced_accuracy\n";
  out << std::setprecision(17);
  for (const auto& r : sweep) {
    out << r.tau << ',' << r.known_accept_rate << ',' << r.unknown_reject_rate << ',' << r.balanced_accuracy << '\n';
  }
}

}  // namespace oneshot
