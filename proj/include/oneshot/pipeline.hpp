// Desk-scale agent system for object naming.
//
// Agents talk only through the blackboard:
//
//   script "say"   -> audio    (text standing in for recorded sound)
//   Transcription  : audio    -> text
//   script "show"  -> camera
//   Perception     : camera   -> features   (slow; frames coalesce)
//   Control        : text     -> say, name  (teach / ask / correct)
//   Speech         : say      -> speaking, spoken, and the inhibiting
//                                "nope" sound on audio
//   Feedback       : spoken   -> audio      (the microphone hearing the robot)
//   Viewer, Lips   : timed readers of name / speaking
//
// While the robot speaks, Speech writes a nope sound to audio at a priority
// above the listener's, so anything recorded meanwhile (including the robot's
// own voice) is rejected by the blackboard instead of being transcribed.

#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "oneshot/agents.hpp"
#include "oneshot/blackboard.hpp"
#include "oneshot/clock.hpp"
#include "oneshot/embeddings.hpp"
#include "oneshot/engine.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

// ---------------------------------------------------------------------------
// Commands

namespace cmd {
struct Name {
  std::string word;
  friend bool operator==(const Name&, const Name&) = default;
};
struct Ask {
  friend bool operator==(const Ask&, const Ask&) = default;
};
struct Correct {
  std::string word;
  friend bool operator==(const Correct&, const Correct&) = default;
};
struct Unrecognized {
  std::string raw;
  friend bool operator==(const Unrecognized&, const Unrecognized&) = default;
};
}  // namespace cmd

using Command = std::variant<cmd::Name, cmd::Ask, cmd::Correct, cmd::Unrecognized>;

namespace detail {

inline bool is_edge_noise(unsigned char c) { return std::isspace(c) || std::ispunct(c); }

inline std::string simplify_utterance(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && is_edge_noise(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && is_edge_noise(static_cast<unsigned char>(text[e - 1]))) --e;
  return normalize_name(text.substr(b, e - b));
}

}  // namespace detail

// Total: every string maps to exactly one command. Case-insensitive; leading
// and trailing punctuation is ignored. Corrections are matched first.
inline Command parse_command(std::string_view text) {
  static const std::regex correct_re(R"(^no[,.!]?\s+(?:this|it)\s+is\s+(?:an|a|the)\s+(.+)$)");
  static const std::regex it_is_re(R"(^it\s+is\s+(?:an|a|the)\s+(.+)$)");
  static const std::regex name_re(R"(^this\s+is\s+(?:an|a|the)\s+(.+)$)");
  static const std::regex ask_re(R"(^what\s+is\s+(?:this|it|that)$)");

  const std::string s = detail::simplify_utterance(text);
  std::smatch m;
  if (std::regex_match(s, m, correct_re) || std::regex_match(s, m, it_is_re)) {
    return cmd::Correct{detail::simplify_utterance(m[1].str())};
  }
  if (std::regex_match(s, m, name_re)) return cmd::Name{detail::simplify_utterance(m[1].str())};
  if (std::regex_match(s, ask_re)) return cmd::Ask{};
  return cmd::Unrecognized{std::string(text)};
}

// ---------------------------------------------------------------------------
// Scenario scripts: one step per line, `show <id>`, `say <text>`, `wait <s>`.
// Blank lines and lines starting with '#' are ignored.

namespace step {
struct ShowObject {
  std::string embedding_id;
};
struct Say {
  std::string text;
};
struct Wait {
  double seconds;
};
}  // namespace step

using ScenarioStep = std::variant<step::ShowObject, step::Say, step::Wait>;

struct ScenarioScript {
  std::vector<ScenarioStep> steps;
};

inline std::optional<ScenarioStep> parse_step(std::string_view raw_line, std::size_t line_no = 0) {
  std::string line(raw_line);
  while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
  std::size_t b = 0;
  while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
  line.erase(0, b);
  if (line.empty() || line[0] == '#') return std::nullopt;

  const auto space = line.find_first_of(" \t");
  const std::string verb = line.substr(0, space);
  std::string arg = space == std::string::npos ? "" : line.substr(space + 1);
  arg.erase(0, std::min(arg.size(), arg.find_first_not_of(" \t")));
  const std::string where = line_no ? "script line " + std::to_string(line_no) + ": " : "";
  if (verb == "show") {
    if (arg.empty() || arg.find_first_of(" \t") != std::string::npos) {
      throw DataError(where + "show expects a single embedding id");
    }
    return step::ShowObject{arg};
  }
  if (verb == "say") {
    if (arg.empty()) throw DataError(where + "say expects text");
    return step::Say{arg};
  }
  if (verb == "wait") {
    char* end = nullptr;
    const double s = std::strtod(arg.c_str(), &end);
    if (arg.empty() || *end != '\0' || !(s >= 0.0) || !std::isfinite(s)) {
      throw DataError(where + "wait expects a non-negative number of seconds");
    }
    return step::Wait{s};
  }
  throw DataError(where + "unknown step '" + verb + "'");
}

inline ScenarioScript read_script(std::istream& in) {
  ScenarioScript script;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto s = parse_step(line, line_no)) script.steps.push_back(std::move(*s));
  }
  return script;
}

inline ScenarioScript load_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open script '" + path + "'");
  return read_script(in);
}

inline void validate_script(const ScenarioScript& script, const EmbeddingSet& embeddings) {
  for (const auto& s : script.steps) {
    if (const auto* show = std::get_if<step::ShowObject>(&s); show && !embeddings.find(show->embedding_id)) {
      throw DataError("script shows unknown embedding id '" + show->embedding_id + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Blackboard payloads

enum class Source { kUser, kRobot };

inline std::string_view to_string(Source s) { return s == Source::kUser ? "User" : "Robot"; }

struct Utterance {
  std::string text;
  // Invisible to the agents; kept so tests can tell echoes from user speech.
  Source source = Source::kUser;
};

struct NopeSound {};

struct Frame {
  std::string id;
  FeatureVector features;
};

using Datum = std::variant<std::monostate, bool, std::string, Utterance, Frame, NopeSound>;

namespace keys {
inline constexpr std::string_view kAudio = "audio";
inline constexpr std::string_view kText = "text";
inline constexpr std::string_view kCamera = "camera";
inline constexpr std::string_view kFeatures = "features";
inline constexpr std::string_view kName = "name";
inline constexpr std::string_view kSay = "say";
inline constexpr std::string_view kSpeaking = "speaking";
inline constexpr std::string_view kSpoken = "spoken";
}  // namespace keys

namespace replies {
inline constexpr std::string_view kNoIdea = "I have no idea.";
inline constexpr std::string_view kOk = "O.K.";
inline constexpr std::string_view kBlind = "I cannot see anything.";
inline constexpr std::string_view kFull = "I cannot learn more names.";
inline std::string this_is(std::string_view name) { return "This is a " + std::string(name) + "."; }
}  // namespace replies

// ---------------------------------------------------------------------------
// Transcript

struct TranscriptLine {
  TimePoint t;
  Source source;
  std::string text;
};

class TranscriptLog {
 public:
  std::vector<TranscriptLine> lines;

  std::vector<std::string> responses() const {
    std::vector<std::string> out;
    for (const auto& l : lines) {
      if (l.source == Source::kRobot) out.push_back(l.text);
    }
    return out;
  }

  void write(std::ostream& out) const {
    for (const auto& l : lines) {
      std::ostringstream t;
      t << std::fixed << std::setprecision(3) << to_seconds(l.t);
      out << '[' << t.str() << "] " << to_string(l.source) << ": " << l.text << '\n';
    }
  }

  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }
};

enum class ClockMode { kVirtual, kWallClock };

struct PipelineConfig {
  NamingConfig naming;
  ClockMode mode = ClockMode::kVirtual;
  double word_duration = 0.06;       // simulated speech, seconds per word
  double inhibition_tail = 0.3;      // nope stays this long after speech ends
  double inhibition_priority = 2.0;
  bool inhibition = true;
  bool feedback = false;             // microphone picks up the robot's voice
  double echo_latency = 0.1;         // robot voice reaches audio this long after speech ends
  double perception_latency = 0.05;  // per processed frame
  double name_validity = 2.0;
  double turn_gap = 1.0;             // time a `say` step takes in the script
  double show_gap = 0.1;             // time a `show` step takes in the script
  double viewer_period = 0.1;
  double lips_period = 0.02;
};

// Bookkeeping exposed for inspection.
struct ProcessedCommand {
  TimePoint t;
  Utterance utterance;
  Command command;
};

struct AskRecord {
  TimePoint t;
  std::optional<std::string> frame_id;
  QueryOutcome outcome;
};

struct PerceptionRecord {
  TimePoint captured;
  TimePoint completed;
  std::string frame_id;
};

struct EchoRecord {
  TimePoint t;
  std::string text;
  WriteStatus status;
};

struct SpeakingChange {
  TimePoint t;
  bool speaking;
};

class Pipeline {
 public:
  Pipeline(const EmbeddingSet& embeddings, PipelineConfig config)
      : Pipeline(embeddings, config, NamingEngine(config.naming)) {}

  // Continues an existing session; the engine's config replaces config.naming.
  Pipeline(const EmbeddingSet& embeddings, PipelineConfig config, const NamingEngine& engine)
      : embeddings_(embeddings), config_(with_naming(std::move(config), engine.config())), engine_(engine) {
    checked(config_, embeddings);
    if (config_.mode == ClockMode::kVirtual) {
      auto clock = std::make_shared<VirtualClock>();
      virtual_clock_ = clock;
      space_ = std::make_unique<Space<Datum>>(clock);
      auto host = std::make_unique<ManualHost<Datum>>(*space_, clock);
      manual_ = host.get();
      host_ = std::move(host);
    } else {
      space_ = std::make_unique<Space<Datum>>(std::make_shared<SteadyClock>());
      host_ = std::make_unique<ThreadedHost<Datum>>(*space_);
    }
    start_time_ = space_->now();
    spawn_agents();
  }

  ~Pipeline() { host_->stop_all(); }

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void run(const ScenarioScript& script) {
    validate_script(script, embeddings_);
    for (const auto& s : script.steps) step(s);
    drain();
  }

  void step(const ScenarioStep& s) {
    std::visit(
        [&](const auto& st) {
          using T = std::decay_t<decltype(st)>;
          if constexpr (std::is_same_v<T, step::ShowObject>) {
            show(st.embedding_id);
            advance(config_.show_gap);
          } else if constexpr (std::is_same_v<T, step::Say>) {
            say(st.text);
            advance(config_.turn_gap);
          } else {
            advance(st.seconds);
          }
        },
        s);
  }

  // The camera captures the given embedding.
  void show(const std::string& id) {
    const EmbeddingRecord* rec = embeddings_.find(id);
    if (!rec) throw DataError("unknown embedding id '" + id + "'");
    space_->write(keys::kCamera, Frame{rec->id, rec->vector});
    settle();
  }

  // The user speaks; returns whether the listener's write got through.
  WriteStatus say(const std::string& text) {
    {
      std::lock_guard lock(mutex_);
      transcript_.lines.push_back({elapsed(), Source::kUser, text});
    }
    const WriteStatus status = space_->write(keys::kAudio, Utterance{text, Source::kUser});
    settle();
    return status;
  }

  // Queue a robot utterance directly.
  void robot_say(const std::string& text) {
    respond(text);
    settle();
  }

  void advance(double secs) {
    if (manual_) {
      manual_->run_for(seconds(secs));
    } else {
      std::this_thread::sleep_for(seconds(secs));
    }
  }

  // Runs until every agent is idle (speech finished, frames processed).
  void drain() {
    if (manual_) {
      for (std::size_t i = 0; i < 1000000 && !manual_->idle(); ++i) manual_->run_next();
      return;
    }
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
    while (std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      std::lock_guard lock(mutex_);
      if (pending_speech_ == 0 && pending_echoes_ == 0 && !perceiving_) break;
    }
  }

  TranscriptLog transcript() const {
    std::lock_guard lock(mutex_);
    return transcript_;
  }

  std::vector<ProcessedCommand> processed_commands() const {
    std::lock_guard lock(mutex_);
    return processed_;
  }

  // Robot utterances that made it back into the command stream.
  std::size_t echoed_commands() const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(std::count_if(processed_.begin(), processed_.end(), [](const auto& p) {
      return p.utterance.source == Source::kRobot;
    }));
  }

  std::vector<AskRecord> asks() const {
    std::lock_guard lock(mutex_);
    return asks_;
  }

  std::vector<PerceptionRecord> perception_log() const {
    std::lock_guard lock(mutex_);
    return perception_;
  }

  std::vector<EchoRecord> echo_log() const {
    std::lock_guard lock(mutex_);
    return echoes_;
  }

  std::vector<SpeakingChange> speaking_log() const {
    std::lock_guard lock(mutex_);
    return speaking_;
  }

  std::vector<std::pair<TimePoint, std::string>> viewer_log() const {
    std::lock_guard lock(mutex_);
    return viewer_;
  }

  std::uint64_t mouth_moves() const {
    std::lock_guard lock(mutex_);
    return mouth_moves_;
  }

  NamingEngine& engine() noexcept { return engine_; }
  Space<Datum>& space() noexcept { return *space_; }
  const PipelineConfig& config() const noexcept { return config_; }
  TimePoint now() const { return elapsed(); }

  // Virtual-time only: run every agent up to the given offset from start.
  void run_until(double secs) {
    if (!manual_) throw UsageError("run_until requires virtual time");
    manual_->run_until(start_time_ + seconds(secs));
  }

 private:
  static PipelineConfig with_naming(PipelineConfig cfg, const NamingConfig& naming) {
    cfg.naming = naming;
    return cfg;
  }

  static NamingConfig checked(const PipelineConfig& cfg, const EmbeddingSet& embeddings) {
    if (cfg.naming.dim != embeddings.dim()) {
      throw DataError("embedding dimension " + std::to_string(embeddings.dim()) + " does not match configured " +
                      std::to_string(cfg.naming.dim));
    }
    return cfg.naming;
  }

  TimePoint elapsed() const { return TimePoint(space_->now() - start_time_); }

  void settle() {
    if (manual_) manual_->settle();
  }

  static std::size_t word_count(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::size_t n = 0;
    for (std::string w; is >> w;) ++n;
    return std::max<std::size_t>(n, 1);
  }

  void spawn_agents() {
    auto& sp = *space_;

    // Transcription: the text already is the transcript; the nope sound is silence.
    host_->spawn_triggered(std::string(keys::kAudio), [&sp](AgentContext&, const Datum& d) {
      if (const auto* u = std::get_if<Utterance>(&d)) sp.write(keys::kText, *u);
    });

    // Perception: frames that arrive while a frame is being processed coalesce
    // to the newest one.
    host_->spawn_triggered(std::string(keys::kCamera), [this, &sp](AgentContext& ctx, const Datum& d) {
      const auto* frame = std::get_if<Frame>(&d);
      if (!frame) return;
      {
        std::lock_guard lock(mutex_);
        perceiving_ = true;
      }
      const TimePoint captured = elapsed();
      ctx.finish_after(seconds(config_.perception_latency), [this, &sp, f = *frame, captured] {
        sp.write(keys::kFeatures, f);
        std::lock_guard lock(mutex_);
        perception_.push_back({captured, elapsed(), f.id});
        perceiving_ = false;
      });
    });

    host_->spawn_triggered(
        std::string(keys::kText), [this](AgentContext&, const Datum& d) {
          if (const auto* u = std::get_if<Utterance>(&d)) control(*u);
        },
        Delivery::kFifo);

    host_->spawn_triggered(
        std::string(keys::kSay), [this, &sp](AgentContext& ctx, const Datum& d) {
          const auto* text = std::get_if<std::string>(&d);
          if (!text) return;
          const double duration = config_.word_duration * static_cast<double>(word_count(*text));
          {
            std::lock_guard lock(mutex_);
            transcript_.lines.push_back({elapsed(), Source::kRobot, *text});
            speaking_.push_back({elapsed(), true});
          }
          sp.write(keys::kSpeaking, true);
          if (config_.inhibition) {
            sp.write(keys::kAudio, NopeSound{},
                     {.validity = duration + config_.inhibition_tail, .priority = config_.inhibition_priority});
          }
          ctx.finish_after(seconds(duration), [this, &sp, spoken = *text] {
            {
              std::lock_guard lock(mutex_);
              speaking_.push_back({elapsed(), false});
            }
            sp.write(keys::kSpeaking, false);
            if (config_.inhibition) {
              sp.write(keys::kAudio, NopeSound{},
                       {.validity = config_.inhibition_tail, .priority = config_.inhibition_priority});
            }
            {
              std::lock_guard lock(mutex_);
              if (config_.feedback) ++pending_echoes_;
              --pending_speech_;
            }
            sp.write(keys::kSpoken, Utterance{spoken, Source::kRobot});
          });
        },
        Delivery::kFifo);

    if (config_.feedback) {
      host_->spawn_triggered(
          std::string(keys::kSpoken), [this, &sp](AgentContext& ctx, const Datum& d) {
            const auto* u = std::get_if<Utterance>(&d);
            if (!u) return;
            ctx.finish_after(seconds(config_.echo_latency), [this, &sp, echo = *u] {
              const WriteStatus status = sp.write(keys::kAudio, echo);
              std::lock_guard lock(mutex_);
              echoes_.push_back({elapsed(), echo.text, status});
              --pending_echoes_;
            });
          },
          Delivery::kFifo);
    }

    host_->spawn_timed(seconds(config_.viewer_period), [this, &sp](AgentContext&) {
      std::string shown = std::get<std::string>(sp.read(keys::kName, std::string()));
      std::lock_guard lock(mutex_);
      if (viewer_.empty() ? !shown.empty() : viewer_.back().second != shown) {
        viewer_.emplace_back(elapsed(), std::move(shown));
      }
    });

    host_->spawn_timed(seconds(config_.lips_period), [this, &sp](AgentContext&) {
      const Datum d = sp.read(keys::kSpeaking, false);
      const bool speaking = std::holds_alternative<bool>(d) && std::get<bool>(d);
      std::lock_guard lock(mutex_);
      if (speaking) {
        mouth_open_ = !mouth_open_;
        ++mouth_moves_;
      } else {
        mouth_open_ = false;
      }
    });
  }

  void respond(const std::string& text) {
    {
      std::lock_guard lock(mutex_);
      ++pending_speech_;
    }
    space_->write(keys::kSay, text);
  }

  std::optional<Frame> current_frame() const {
    auto d = space_->read(keys::kFeatures);
    if (!d) return std::nullopt;
    if (const auto* f = std::get_if<Frame>(&*d)) return *f;
    return std::nullopt;
  }

  void control(const Utterance& u) {
    const Command command = parse_command(u.text);
    if (std::holds_alternative<cmd::Unrecognized>(command)) return;
    {
      std::lock_guard lock(mutex_);
      processed_.push_back({elapsed(), u, command});
    }
    const auto frame = current_frame();
    if (std::holds_alternative<cmd::Ask>(command)) {
      if (!frame) {
        {
          std::lock_guard lock(mutex_);
          asks_.push_back({elapsed(), std::nullopt, NoIdea{NoIdeaReason::kEmptyStore, std::nullopt}});
        }
        return respond(std::string(replies::kNoIdea));
      }
      QueryOutcome outcome = engine_.ask(frame->features);
      {
        std::lock_guard lock(mutex_);
        asks_.push_back({elapsed(), frame->id, outcome});
      }
      if (const Named* named = as_named(outcome)) {
        space_->write(keys::kName, named->name, {.validity = config_.name_validity});
        return respond(replies::this_is(named->name));
      }
      return respond(std::string(replies::kNoIdea));
    }

    const std::string word = std::visit(
        [](const auto& c) -> std::string {
          if constexpr (requires { c.word; }) {
            return c.word;
          } else {
            return {};
          }
        },
        command);
    if (!frame) return respond(std::string(replies::kBlind));
    try {
      if (std::holds_alternative<cmd::Correct>(command)) {
        engine_.correct(word, frame->features);
      } else {
        engine_.teach(word, frame->features);
      }
    } catch (const CapacityError&) {
      return respond(std::string(replies::kFull));
    }
    respond(std::string(replies::kOk));
  }

  const EmbeddingSet& embeddings_;
  PipelineConfig config_;
  NamingEngine engine_;
  std::shared_ptr<VirtualClock> virtual_clock_;
  std::unique_ptr<Space<Datum>> space_;
  std::unique_ptr<AgentHost<Datum>> host_;
  ManualHost<Datum>* manual_ = nullptr;
  TimePoint start_time_{};

  mutable std::mutex mutex_;
  TranscriptLog transcript_;
  std::vector<ProcessedCommand> processed_;
  std::vector<AskRecord> asks_;
  std::vector<PerceptionRecord> perception_;
  std::vector<EchoRecord> echoes_;
  std::vector<SpeakingChange> speaking_;
  std::vector<std::pair<TimePoint, std::string>> viewer_;
  std::uint64_t mouth_moves_ = 0;
  bool mouth_open_ = false;
  bool perceiving_ = false;
  int pending_speech_ = 0;
  int pending_echoes_ = 0;
};

inline TranscriptLog run_pipeline(const ScenarioScript& script, const EmbeddingSet& embeddings,
                                  const PipelineConfig& config) {
  Pipeline pipeline(embeddings, config);
  pipeline.run(script);
  return pipeline.transcript();
}

}  // namespace oneshot
