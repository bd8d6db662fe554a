// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oneshot/embeddings.hpp"
#include "oneshot/engine.hpp"
#include "oneshot/eval.hpp"
#include "oneshot/pipeline.hpp"

namespace oneshot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct NamingFlags {
  std::optional<double> d;
  double phi = 0.2;
  std::optional<double> threshold;
  bool normalize = false;

  void add_to(CLI::App& app) {
    app.add_option("--d", d, "attention scaling factor (default sqrt(dim))");
    app.add_option("--phi", phi, "angle step of the label code, radians")->capture_default_str();
    app.add_option("--threshold", threshold, "reject answers whose relevance is below this value");
    app.add_flag("--normalize", normalize, "use cosine instead of dot-product logits");
  }

  NamingConfig config(std::size_t dim) const {
    NamingConfig cfg;
    cfg.dim = dim;
    cfg.phi = phi;
    cfg.d = d;
    cfg.relevance_threshold = threshold;
    cfg.normalize_similarities = normalize;
    cfg.validate();
    return cfg;
  }
};

inline SyntheticSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("synthetic spec must be a JSON object");
  SyntheticSpec spec;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_classes") spec.n_classes = value.get<std::size_t>();
      else if (key == "samples_per_class") spec.samples_per_class = value.get<std::size_t>();
      else if (key == "dim") spec.dim = value.get<std::size_t>();
      else if (key == "max_center_cosine") spec.max_center_cosine = value.get<double>();
      else if (key == "min_intra_cosine") spec.min_intra_cosine = value.get<double>();
      else if (key == "nuisance_dim") spec.nuisance_dim = value.get<std::size_t>();
      else if (key == "center_correlation") spec.center_correlation = value.get<double>();
      else if (key == "norm") spec.norm = value.get<double>();
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else if (key == "max_retries") spec.max_retries = value.get<std::size_t>();
      else throw DataError("unknown synthetic spec field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed synthetic spec: ") + e.what());
  }
  try {
    spec.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("unsatisfiable synthetic spec: ") + e.what());
  }
  return spec;
}

inline SyntheticSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open spec '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("spec '" + path + "' is not valid JSON: " + e.what());
  }
  return spec_from_json(j);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

inline std::string sibling_path(const std::string& path, const std::string& suffix) {
  const auto dot = path.rfind('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + suffix;
  return path.substr(0, dot) + suffix;
}

inline Corrections parse_corrections(const std::string& s) {
  if (s == "off") return Corrections::kOff;
  if (s == "last") return Corrections::kLastCategory;
  return Corrections::kSaturate;
}

inline int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-shot object naming with an attention associative memory"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a certified synthetic embedding set (EMBSET v1)");
  std::string gen_spec_path;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  gen->add_option("spec", gen_spec_path, "JSON synthetic spec (defaults when omitted)");
  gen->add_option("--seed", gen_seed, "override the seed from the JSON file");
  gen->add_option("--out", gen_out, "output EMBSET file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "run the offline naming protocol and write accuracy curves");
  std::string eval_set;
  std::uint64_t eval_seed = 0;
  std::string eval_corrections = "off";
  std::string eval_measure = "before";
  std::string eval_out;
  std::string eval_log;
  NamingFlags eval_flags;
  eval->add_option("embeddings", eval_set, "labeled EMBSET file")->required();
  eval->add_option("--seed", eval_seed, "category order and exemplar seed")->capture_default_str();
  eval->add_option("--corrections", eval_corrections, "off | last | saturate")
      ->check(CLI::IsMember({"off", "last", "saturate"}))
      ->capture_default_str();
  eval->add_option("--measure", eval_measure, "accuracy before or after each round's corrections")
      ->check(CLI::IsMember({"before", "after"}))
      ->capture_default_str();
  eval->add_option("--out", eval_out, "curve CSV (stdout when omitted)");
  eval->add_option("--log", eval_log, "per-record CSV (default: <out>.records.csv)");
  eval_flags.add_to(*eval);

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "recommend a relevance threshold from known/unknown categories");
  std::string cal_set;
  std::vector<std::string> cal_unknown;
  std::optional<std::size_t> cal_holdout;
  std::uint64_t cal_seed = 0;
  std::string cal_out;
  NamingFlags cal_flags;
  cal->add_option("embeddings", cal_set, "labeled EMBSET file")->required();
  cal->add_option("--unknown", cal_unknown, "labels treated as never taught")->delimiter(',');
  cal->add_option("--holdout", cal_holdout, "hold out this many randomly chosen categories instead");
  cal->add_option("--seed", cal_seed, "exemplar and holdout seed")->capture_default_str();
  cal->add_option("--out", cal_out, "sweep CSV");
  cal_flags.add_to(*cal);

  // replay
  auto* replay = app.add_subcommand("replay", "run a scenario script through the agent pipeline");
  std::string replay_script;
  std::string replay_set;
  std::size_t replay_dim = 384;
  bool replay_feedback = false;
  bool replay_no_inhibition = false;
  NamingFlags replay_flags;
  replay->add_option("script", replay_script, "scenario script")->required();
  replay->add_option("--embeddings", replay_set, "EMBSET file the script's show steps refer to");
  replay->add_option("--dim", replay_dim, "feature dimension when no embeddings are given")->capture_default_str();
  replay->add_flag("--feedback", replay_feedback, "let the microphone hear the robot");
  replay->add_flag("--no-inhibition", replay_no_inhibition, "disable the audio inhibition while speaking");
  replay_flags.add_to(*replay);

  // repl
  auto* repl = app.add_subcommand("repl", "interactive session: show <id>, this is a <word>, what is this, ...");
  std::string repl_set;
  std::string repl_session;
  std::size_t repl_dim = 384;
  NamingFlags repl_flags;
  repl->add_option("--embeddings", repl_set, "EMBSET file for show <id>");
  repl->add_option("--session", repl_session, "resume a saved session");
  repl->add_option("--dim", repl_dim, "feature dimension when no embeddings are given")->capture_default_str();
  repl_flags.add_to(*repl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*gen) {
      SyntheticSpec spec = gen_spec_path.empty() ? SyntheticSpec{} : load_spec(gen_spec_path);
      if (gen_seed) spec.seed = *gen_seed;
      const GeneratedSet generated = generate_with_geometry(spec);
      save_embset(generated.set, gen_out);
      out << "wrote " << generated.set.size() << " records (dim " << generated.set.dim() << ") to " << gen_out
          << "; min intra cosine " << generated.report.min_intra_cosine << ", max center cosine "
          << generated.report.max_center_cosine << '\n';
      return kExitOk;
    }

    if (*eval) {
      const EmbeddingSet set = load_embset(eval_set);
      EvalProtocolSpec spec;
      spec.seed = eval_seed;
      spec.corrections = parse_corrections(eval_corrections);
      spec.measure = eval_measure == "after" ? Measure::kAfterCorrections : Measure::kBeforeCorrections;
      spec.naming = eval_flags.config(set.dim());
      const EvalResult result = eval_protocol(set, spec);
      if (eval_out.empty()) {
        write_curve_csv(result.curve, out);
      } else {
        auto f = open_out(eval_out);
        write_curve_csv(result.curve, f);
      }
      const std::string log_path =
          !eval_log.empty() ? eval_log : eval_out.empty() ? std::string() : sibling_path(eval_out, ".records.csv");
      if (!log_path.empty()) {
        auto f = open_out(log_path);
        write_log_csv(result.log, f);
      }
      if (spec.corrections != Corrections::kOff) {
        EvalProtocolSpec off = spec;
        off.corrections = Corrections::kOff;
        const EvalResult baseline = eval_protocol(set, off);
        const CurveComparison cmp = compare_curves(result.curve, baseline.curve);
        if (!eval_out.empty()) {
          auto f = open_out(sibling_path(eval_out, ".baseline.csv"));
          write_curve_csv(baseline.curve, f);
        }
        (eval_out.empty() ? err : out) << "max accuracy drop versus no corrections: " << cmp.max_drop << '\n';
      }
      if (!eval_out.empty()) {
        out << "final accuracy " << result.curve.back().accuracy << " over " << result.curve.size()
            << " categories; curve written to " << eval_out << '\n';
      }
      return kExitOk;
    }

    if (*cal) {
      const EmbeddingSet set = load_embset(cal_set);
      CalibrationSpec spec;
      spec.seed = cal_seed;
      spec.naming = cal_flags.config(set.dim());
      spec.unknown_labels = cal_unknown;
      if (cal_holdout) {
        if (!cal_unknown.empty()) throw UsageError("use either --unknown or --holdout");
        auto labels = set.labels();
        if (*cal_holdout == 0 || *cal_holdout >= labels.size()) {
          throw UsageError("--holdout must leave at least one known and one unknown category");
        }
        std::mt19937_64 rng(cal_seed ^ 0x5eedULL);
        std::shuffle(labels.begin(), labels.end(), rng);
        spec.unknown_labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(*cal_holdout));
      }
      const CalibrationResult result = calibrate_threshold(set, spec);
      if (!cal_out.empty()) {
        auto f = open_out(cal_out);
        write_sweep_csv(result.sweep, f);
      } else {
        write_sweep_csv(result.sweep, err);
      }
      out << "recommended threshold " << result.tau << " (balanced accuracy " << result.balanced_accuracy << ")\n";
      return kExitOk;
    }

    if (*replay) {
      const ScenarioScript script = load_script(replay_script);
      const EmbeddingSet set = replay_set.empty() ? EmbeddingSet(replay_dim) : load_embset(replay_set);
      PipelineConfig cfg;
      cfg.naming = replay_flags.config(set.dim());
      cfg.feedback = replay_feedback;
      cfg.inhibition = !replay_no_inhibition;
      run_pipeline(script, set, cfg).write(out);
      return kExitOk;
    }

    if (*repl) {
      const EmbeddingSet set = repl_set.empty() ? EmbeddingSet(repl_dim) : load_embset(repl_set);
      PipelineConfig cfg;
      cfg.naming = repl_flags.config(set.dim());
      std::optional<Pipeline> pipeline;
      if (repl_session.empty()) {
        pipeline.emplace(set, cfg);
      } else {
        pipeline.emplace(set, cfg, load_session(repl_session));
      }
      std::size_t printed = 0;
      const auto flush = [&] {
        pipeline->drain();
        const auto lines = pipeline->transcript().lines;
        for (; printed < lines.size(); ++printed) {
          if (lines[printed].source == Source::kRobot) out << lines[printed].text << '\n';
        }
        out.flush();
      };
      std::string line;
      while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string verb;
        ls >> verb;
        if (verb.empty()) continue;
        if (verb == "quit" || verb == "exit") break;
        try {
          if (verb == "save") {
            std::string path;
            ls >> path;
            if (path.empty()) throw UsageError("save expects a path");
            save_session(pipeline->engine(), path);
            out << "saved " << pipeline->engine().pair_count() << " pairs to " << path << '\n';
            continue;
          }
          if (verb == "show" || verb == "wait") {
            if (auto s = parse_step(line)) pipeline->step(*s);
          } else {
            pipeline->step(step::Say{line});
          }
          flush();
        } catch (const Error& e) {
          err << "error: " << e.what() << '\n';
        }
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace oneshot::cli
