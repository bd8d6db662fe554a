#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "oneshot/engine.hpp"
#include "test_support.hpp"

namespace {

using namespace oneshot;
using testing_support::Rng;

FeatureVector random_features(Rng& rng, std::size_t n = 384) {
  return FeatureVector(testing_support::gaussian(rng, n));
}

FeatureVector basis(std::size_t n, std::size_t i, double scale = 1.0) {
  std::vector<double> v(n, 0.0);
  v[i] = scale;
  return FeatureVector(v);
}

TEST(NamingEngine, FreshSessionHasNoIdea) {
  NamingEngine engine;
  Rng rng(1);
  const auto outcome = engine.ask(random_features(rng));
  const auto* no = std::get_if<NoIdea>(&outcome);
  ASSERT_NE(no, nullptr);
  EXPECT_EQ(no->reason, NoIdeaReason::kEmptyStore);
  EXPECT_FALSE(no->relevance);
}

TEST(NamingEngine, TeachThenAskExactKey) {
  NamingEngine engine;
  Rng rng(2);
  const auto e = random_features(rng);
  const auto r = engine.teach("watch", e);
  EXPECT_EQ(r.index, 0u);
  EXPECT_TRUE(r.is_new_word);
  EXPECT_EQ(r.pair_count, 1u);
  const auto outcome = engine.ask(e);
  const Named* named = as_named(outcome);
  ASSERT_NE(named, nullptr);
  EXPECT_EQ(named->name, "watch");
  EXPECT_EQ(named->index, 0u);
  EXPECT_EQ(named->relevance, 1.0);
}

TEST(NamingEngine, ExactKeyAmongManyRandomKeys) {
  Rng rng(3);
  NamingEngine engine;
  std::vector<FeatureVector> keys;
  for (int i = 0; i < 20; ++i) {
    keys.push_back(random_features(rng));
    engine.teach("object " + std::to_string(i), keys.back());
  }
  for (int i = 0; i < 20; ++i) {
    const auto outcome = engine.ask(keys[i]);
    const Named* named = as_named(outcome);
    ASSERT_NE(named, nullptr);
    EXPECT_EQ(named->name, "object " + std::to_string(i));
    EXPECT_EQ(named->relevance, 1.0);
  }
}

TEST(NamingEngine, ProjectionInvarianceInRawMode) {
  NamingConfig cfg;
  cfg.dim = 8;
  NamingEngine engine(cfg);
  const auto e1 = basis(8, 0, 3.0);
  const auto e2 = basis(8, 1, 3.0);
  engine.teach("cup", e1);
  engine.teach("bottle", e2);
  FeatureVector q({3.0, 0.0, 0.0, 0.0, 7.0, -4.0, 0.0, 2.0});
  const auto outcome = engine.ask(q);
  ASSERT_NE(as_named(outcome), nullptr);
  EXPECT_EQ(as_named(outcome)->name, "cup");

  const auto with_w = engine.mixture(q);
  const auto without_w = engine.mixture(e1);
  EXPECT_DOUBLE_EQ(with_w.output.x, without_w.output.x);
  EXPECT_DOUBLE_EQ(with_w.output.y, without_w.output.y);

  const auto oracle = testing_support::oracle_attend(testing_support::to_vec(e1.values()),
                                                     {testing_support::to_vec(e1.values()),
                                                      testing_support::to_vec(e2.values())},
                                                     {encode_index(0, EncodingConfig()), encode_index(1, EncodingConfig())},
                                                     std::sqrt(8.0L));
  EXPECT_NEAR(with_w.output.x, static_cast<double>(oracle.x), 1e-12);
  EXPECT_NEAR(with_w.output.y, static_cast<double>(oracle.y), 1e-12);
}

TEST(NamingEngine, CorrectionFixesAnswerImmediately) {
  NamingConfig cfg;
  cfg.dim = 4;
  cfg.d = 0.1;
  NamingEngine engine(cfg);
  engine.teach("glass", FeatureVector{1.0, 0.0, 0.0, 0.0});
  engine.teach("bottle", FeatureVector{0.0, 1.0, 0.0, 0.0});
  const FeatureVector horizontal_bottle{0.9, 0.3, 0.2, 0.0};
  ASSERT_EQ(as_named(engine.ask(horizontal_bottle))->name, "glass");
  const auto r = engine.correct("bottle", horizontal_bottle);
  EXPECT_EQ(r.index, 1u);
  EXPECT_FALSE(r.is_new_word);
  EXPECT_EQ(r.pair_count, 3u);
  EXPECT_EQ(as_named(engine.ask(horizontal_bottle))->name, "bottle");
}

TEST(NamingEngine, CorrectionWithNewWordExtendsVocabulary) {
  NamingEngine engine(NamingConfig{.dim = 2});
  engine.teach("cup", FeatureVector{1.0, 0.0});
  const auto r = engine.correct("mug", FeatureVector{1.0, 0.1});
  EXPECT_TRUE(r.is_new_word);
  EXPECT_EQ(engine.words(), (std::vector<std::string>{"cup", "mug"}));
}

TEST(NamingEngine, DuplicateCorrectionsAppend) {
  NamingEngine engine(NamingConfig{.dim = 2});
  engine.correct("cup", FeatureVector{1.0, 0.0});
  engine.correct("cup", FeatureVector{1.0, 0.0});
  EXPECT_EQ(engine.pair_count(), 2u);
}

TEST(NamingEngine, NamesAreNormalized) {
  NamingEngine engine(NamingConfig{.dim = 2});
  engine.teach("  Coffee  MUG ", FeatureVector{1.0, 0.0});
  EXPECT_EQ(as_named(engine.ask(FeatureVector{1.0, 0.0}))->name, "coffee mug");
  EXPECT_FALSE(engine.teach("coffee mug", FeatureVector{0.0, 1.0}).is_new_word);
}

TEST(NamingEngine, TeachErrorsLeaveNoTrace) {
  NamingEngine engine(NamingConfig{.dim = 2});
  EXPECT_THROW(engine.teach("", FeatureVector{1.0, 0.0}), UsageError);
  EXPECT_THROW(engine.teach("cup", FeatureVector{1.0, 0.0, 0.0}), DimensionError);
  EXPECT_EQ(engine.pair_count(), 0u);
  EXPECT_TRUE(engine.words().empty());
  EXPECT_THROW(engine.ask(FeatureVector{1.0}), DimensionError);
}

TEST(NamingEngine, ThirtySecondNameIsCapacityError) {
  NamingEngine engine(NamingConfig{.dim = 2});
  for (int i = 0; i < 31; ++i) engine.teach("w" + std::to_string(i), FeatureVector{1.0, double(i)});
  EXPECT_THROW(engine.teach("w31", FeatureVector{1.0, 0.0}), CapacityError);
  EXPECT_EQ(engine.pair_count(), 31u);
  EXPECT_EQ(engine.teach("w0", FeatureVector{2.0, 0.0}).pair_count, 32u);
}

TEST(NamingEngine, ThresholdRejectsUnrelatedQueries) {
  NamingConfig cfg;
  cfg.dim = 3;
  cfg.relevance_threshold = 0.8;
  NamingEngine engine(cfg);
  engine.teach("cup", FeatureVector{1.0, 0.0, 0.0});
  const auto far = engine.ask(FeatureVector{0.0, 1.0, 0.0});
  const auto* no = std::get_if<NoIdea>(&far);
  ASSERT_NE(no, nullptr);
  EXPECT_EQ(no->reason, NoIdeaReason::kBelowThreshold);
  EXPECT_EQ(no->relevance, 0.0);
  EXPECT_NE(as_named(engine.ask(FeatureVector{1.0, 0.5, 0.0})), nullptr);
  // Exactly at the threshold is accepted.
  EXPECT_NE(as_named(engine.ask(FeatureVector{0.8, 0.6, 0.0})), nullptr);
}

TEST(NamingEngine, BelowThresholdWinsOverInvalidIndex) {
  NamingConfig cfg;
  cfg.dim = 2;
  cfg.relevance_threshold = 0.5;
  NamingEngine engine(cfg);
  engine.teach("cup", FeatureVector{1.0, 0.0});
  const auto outcome = engine.ask(FeatureVector{-1.0, 0.0});
  EXPECT_EQ(std::get<NoIdea>(outcome).reason, NoIdeaReason::kBelowThreshold);
}

TEST(NamingEngine, MixtureAcrossTheWrapIsInvalidIndex) {
  // Index 0 sits at angle 0 and index 30 at 6.0 rad (just below a full
  // turn). Their even mixture points between them, to a lattice point of
  // index -1 or 31, neither of which exists. Small d keeps the other keys out.
  NamingEngine engine(NamingConfig{.dim = 31, .d = 0.05});
  for (std::size_t i = 0; i < 31; ++i) engine.teach("w" + std::to_string(i), basis(31, i));
  std::vector<double> q(31, 0.0);
  q[0] = q[30] = 1.0;
  const auto outcome = engine.ask(FeatureVector(q));
  const auto* no = std::get_if<NoIdea>(&outcome);
  ASSERT_NE(no, nullptr);
  EXPECT_EQ(no->reason, NoIdeaReason::kInvalidIndex);
  EXPECT_NEAR(*no->relevance, std::sqrt(0.5), 1e-15);

  // Between neighbours away from the wrap the same mixture is a valid index.
  q[30] = 0.0;
  q[1] = 1.0;
  EXPECT_NE(as_named(engine.ask(FeatureVector(q))), nullptr);
}

TEST(NamingEngine, DefaultScalingIsSqrtDim) {
  EXPECT_DOUBLE_EQ(NamingConfig{}.scaling(), std::sqrt(384.0));
  NamingConfig c;
  c.d = 2.5;
  EXPECT_DOUBLE_EQ(c.scaling(), 2.5);
}

TEST(NamingEngine, InvalidConfigRejected) {
  EXPECT_THROW(NamingEngine(NamingConfig{.dim = 0}), UsageError);
  EXPECT_THROW(NamingEngine(NamingConfig{.dim = 4, .phi = 0.0}), UsageError);
  EXPECT_THROW(NamingEngine(NamingConfig{.dim = 4, .d = -1.0}), UsageError);
  EXPECT_THROW(NamingEngine(NamingConfig{.dim = 4, .relevance_threshold = 1.5}), UsageError);
}

NamingEngine trained(Rng& rng, std::size_t n = 16) {
  NamingConfig cfg;
  cfg.dim = n;
  cfg.relevance_threshold = 0.25;
  NamingEngine engine(cfg);
  for (int i = 0; i < 12; ++i) engine.teach("w" + std::to_string(i % 5), random_features(rng, n));
  return engine;
}

TEST(Session, SnapshotRestoreRoundTripIsBitExact) {
  Rng rng(9);
  const NamingEngine engine = trained(rng);
  const NamingEngine restored = NamingEngine::restore(engine.snapshot());
  EXPECT_EQ(restored.words(), engine.words());
  for (int t = 0; t < 50; ++t) {
    const auto q = random_features(rng, 16);
    const auto a = engine.mixture(q);
    const auto b = restored.mixture(q);
    EXPECT_EQ(a.output, b.output);
    EXPECT_EQ(a.coeffs, b.coeffs);
  }
}

TEST(Session, JsonRoundTripIsBitExact) {
  Rng rng(10);
  const NamingEngine engine = trained(rng);
  const auto path = std::filesystem::temp_directory_path() / "oneshot_session_test.json";
  save_session(engine, path.string());
  const NamingEngine loaded = load_session(path.string());
  std::filesystem::remove(path);
  const auto a = engine.snapshot();
  const auto b = loaded.snapshot();
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].key, b.pairs[i].key);
    EXPECT_EQ(a.pairs[i].value, b.pairs[i].value);
    EXPECT_EQ(a.pairs[i].name, b.pairs[i].name);
  }
  EXPECT_EQ(b.config.relevance_threshold, 0.25);
  EXPECT_EQ(b.teach_counter, a.teach_counter);
}

TEST(Session, InvalidSnapshotsRejected) {
  Rng rng(11);
  const auto good = trained(rng).snapshot();

  auto bad = good;
  bad.pairs[0].value = {0.5, 0.5};
  EXPECT_THROW(NamingEngine::restore(bad), ValidationError);

  bad = good;
  bad.pairs[0].value = encode_index(4, EncodingConfig());
  EXPECT_THROW(NamingEngine::restore(bad), ValidationError);

  bad = good;
  bad.pairs[0].name = "nonexistent";
  EXPECT_THROW(NamingEngine::restore(bad), ValidationError);

  bad = good;
  bad.vocabulary.push_back(bad.vocabulary[0]);
  EXPECT_THROW(NamingEngine::restore(bad), ValidationError);

  bad = good;
  bad.vocabulary[0] = "Not Normalized";
  EXPECT_THROW(NamingEngine::restore(bad), ValidationError);

  bad = good;
  bad.teach_counter += 1;
  EXPECT_THROW(NamingEngine::restore(bad), ValidationError);

  bad = good;
  bad.pairs[1].key = FeatureVector{1.0};
  EXPECT_THROW(NamingEngine::restore(bad), ValidationError);

  bad = good;
  bad.config.phi = -1.0;
  EXPECT_THROW(NamingEngine::restore(bad), ValidationError);
}

TEST(Session, MalformedJsonIsDataError) {
  EXPECT_THROW(snapshot_from_json(nlohmann::json::parse(R"({"format":"other"})")), DataError);
  EXPECT_THROW(snapshot_from_json(nlohmann::json::parse("[]")), DataError);
  Rng rng(12);
  auto doc = to_json(trained(rng).snapshot());
  doc["pairs"][0]["key"] = "***";
  EXPECT_THROW(snapshot_from_json(doc), DataError);
  EXPECT_THROW(load_session("/nonexistent/dir/session.json"), DataError);
}

TEST(NamingEngine, ConcurrentAsksDuringTeaching) {
  Rng rng(13);
  NamingEngine engine(NamingConfig{.dim = 32});
  const auto probe = random_features(rng, 32);
  engine.teach("probe", probe);
  std::vector<FeatureVector> more;
  for (int i = 0; i < 200; ++i) more.push_back(random_features(rng, 32));
  std::atomic<bool> wrong{false};
  std::thread reader([&] {
    for (int i = 0; i < 2000; ++i) {
      const auto outcome = engine.ask(probe);
      if (!as_named(outcome) || as_named(outcome)->relevance != 1.0) wrong = true;
    }
  });
  for (int i = 0; i < 200; ++i) engine.teach("w" + std::to_string(i % 20), more[i]);
  reader.join();
  EXPECT_FALSE(wrong.load());
  EXPECT_EQ(engine.pair_count(), 201u);
}

}  // namespace
