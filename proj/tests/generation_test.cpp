#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "trackfill/corpus.hpp"
#include "trackfill/dataset.hpp"
#include "trackfill/generation.hpp"
#include "trackfill/ngram.hpp"
#include "trackfill/transformer.hpp"

using namespace trackfill;

namespace {

/// Puts almost all mass on one fixed instrument and on BAR_END-friendly
/// tokens, to check that masks win over the model.
class StubbornPredictor : public SequencePredictor {
 public:
  explicit StubbornPredictor(int favourite) : favourite_(favourite) {}
  std::vector<float> predict(std::span<const TokenId>) const override {
    std::vector<float> s(vocab::kSize, 0.0f);
    s[vocab::instrument(favourite_)] = 50.0f;
    s[vocab::time_shift(48)] = 10.0f;
    s[vocab::kBarEnd] = 10.0f;
    s[vocab::kTrackEnd] = 10.0f;
    return s;
  }
  std::size_t window() const override { return std::numeric_limits<std::size_t>::max(); }
  std::string name() const override { return "stubborn"; }

 private:
  int favourite_;
};

Piece small_base(std::mt19937_64& rng, int n_tracks = 2, int n_bars = 2) {
  Piece p;
  p.n_bars = n_bars;
  for (int t = 0; t < n_tracks; ++t) {
    QuantizedTrack tr{testing_support::uniform(rng, 0, kNumInstruments - 1), {}};
    for (int b = 0; b < n_bars; ++b) tr.bars.push_back(testing_support::random_bar(rng, 4));
    p.tracks.push_back(tr);
  }
  return p;
}

GenerationRequest track_request(Piece base, int n, std::uint64_t seed) {
  GenerationRequest req;
  req.base = std::move(base);
  req.n_new_tracks = n;
  req.sampler.seed = seed;
  req.sampler.max_steps = 200000;
  req.max_bars = 2;
  return req;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::Io;
}

const UniformPredictor kUniform;

}  // namespace

// -- sampler ---------------------------------------------------------------------

TEST(Sampler, SingleAllowedTokenIsAlwaysChosen) {
  std::vector<float> scores(vocab::kSize, 0.0f);
  scores[5] = -100.0f;
  TokenMask mask;
  mask.set(5);
  std::mt19937_64 rng(1);
  for (double t : {0.1, 1.0, 7.0}) {
    SamplerParams p;
    p.temperature = t;
    for (int i = 0; i < 50; ++i) ASSERT_EQ(sample_token(scores, p, mask, rng), 5);
  }
}

TEST(Sampler, UniformScoresStayUniformAtAnyTemperature) {
  std::vector<float> scores(vocab::kSize, 1.5f);
  TokenMask mask;
  for (int i : {3, 9, 200, 404}) mask.set(i);
  for (double t : {0.05, 1.0, 20.0}) {
    SamplerParams p;
    p.temperature = t;
    auto dist = sampling_distribution(scores, p, mask);
    ASSERT_EQ(dist.size(), 4u);
    for (const auto& [id, prob] : dist) EXPECT_NEAR(prob, 0.25, 1e-12);
  }
}

TEST(Sampler, TopPKeepsSmallestPrefix) {
  std::vector<float> scores(vocab::kSize, 0.0f);
  scores[10] = std::log(0.6f);
  scores[11] = std::log(0.3f);
  scores[12] = std::log(0.1f);
  TokenMask mask;
  mask.set(10).set(11).set(12);
  SamplerParams p;
  p.top_p = 0.5;
  auto dist = sampling_distribution(scores, p, mask);
  ASSERT_EQ(dist.size(), 1u);
  EXPECT_EQ(dist[0].first, 10);
  EXPECT_DOUBLE_EQ(dist[0].second, 1.0);

  p.top_p = 0.85;
  dist = sampling_distribution(scores, p, mask);
  ASSERT_EQ(dist.size(), 2u);
  EXPECT_NEAR(dist[0].second, 2.0 / 3.0, 1e-6);
  EXPECT_NEAR(dist[1].second, 1.0 / 3.0, 1e-6);
}

TEST(Sampler, MaskedTokensNeverSampledAndEmptyMaskThrows) {
  std::vector<float> scores(vocab::kSize, 0.0f);
  scores[0] = 100.0f;
  TokenMask mask;
  mask.set(7).set(8);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    auto id = sample_token(scores, SamplerParams{}, mask, rng);
    ASSERT_TRUE(id == 7 || id == 8);
  }
  EXPECT_EQ(code_of([&] { sampling_distribution(scores, SamplerParams{}, TokenMask{}); }), ErrorCode::AllMasked);
  // Every allowed score at -inf falls back to uniform.
  std::vector<float> dead(vocab::kSize, -std::numeric_limits<float>::infinity());
  auto d = sampling_distribution(dead, SamplerParams{}, mask);
  EXPECT_DOUBLE_EQ(d[0].second, 0.5);
}

TEST(Sampler, RejectsBadParameters) {
  SamplerParams p;
  p.temperature = 0;
  EXPECT_THROW(p.check(), Error);
  p = {};
  p.top_p = 0;
  EXPECT_THROW(p.check(), Error);
  p.top_p = 1.01;
  EXPECT_THROW(p.check(), Error);
  EXPECT_EQ(default_max_steps(16), 32u);
  EXPECT_EQ(default_max_steps(std::numeric_limits<std::size_t>::max()), 4096u);
}

// -- track inpainting ------------------------------------------------------------

TEST(GenerateTracks, OutputAlwaysValidatesUnderUniformModel) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 60; ++i) {
    const bool empty = i % 3 == 0;
    Piece base = empty ? Piece{} : small_base(rng, testing_support::uniform(rng, 1, 3), 2);
    auto res = generate(kUniform, track_request(base, 1 + i % 2, 100 + i));
    ASSERT_TRUE(validate(res.tokens).empty()) << validate(res.tokens)[0].reason;
    ASSERT_NO_THROW(check_piece(res.decoded.piece));
  }
}

TEST(GenerateTracks, StopsAfterNthNewTrack) {
  std::mt19937_64 rng(4);
  for (int n = 1; n <= 3; ++n) {
    for (int run = 0; run < 5; ++run) {
      auto base = small_base(rng);
      auto res = generate(kUniform, track_request(base, n, 1000 * n + run));
      ASSERT_EQ(res.decoded.piece.tracks.size(), base.tracks.size() + n);
      std::vector<TokenId> sampled(res.tokens.ids.begin() + res.context_length, res.tokens.ids.end());
      ASSERT_EQ(std::count(sampled.begin(), sampled.end(), vocab::kTrackEnd), n);
      ASSERT_EQ(sampled.back(), vocab::kTrackEnd);
      ASSERT_EQ(res.steps, sampled.size());
      ASSERT_EQ(res.decoded.piece.n_bars, base.n_bars);
      for (std::size_t t = 0; t < base.tracks.size(); ++t) {
        ASSERT_EQ(res.decoded.piece.tracks[t], canonical(base).tracks[t]);
      }
    }
  }
}

TEST(GenerateTracks, FromScratchHonoursMaxBars) {
  for (int seed = 0; seed < 10; ++seed) {
    auto req = track_request(Piece{}, 2, seed);
    req.max_bars = 1 + seed % 3;
    auto res = generate(kUniform, req);
    EXPECT_LE(res.decoded.piece.n_bars, req.max_bars);
    EXPECT_EQ(res.decoded.piece.tracks.size(), 2u);
  }
}

TEST(GenerateTracks, InstrumentAndDensityConstraintsAreHard) {
  std::mt19937_64 rng(5);
  StubbornPredictor stubborn(0);
  for (int i = 0; i < 40; ++i) {
    std::vector<int> allowed;
    const int k = testing_support::uniform(rng, 1, 4);
    for (int j = 0; j < k; ++j) allowed.push_back(testing_support::uniform(rng, 1, kNumInstruments - 1));
    const int level = testing_support::uniform(rng, 0, 9);
    auto req = track_request(small_base(rng), 2, i);
    req.tracks = {{allowed, level}};
    const SequencePredictor& p = i % 2 ? static_cast<const SequencePredictor&>(stubborn) : kUniform;
    auto res = generate(p, req);
    const auto& tracks = res.decoded.piece.tracks;
    const int inst = tracks[tracks.size() - 2].instrument;
    ASSERT_NE(std::find(allowed.begin(), allowed.end(), inst), allowed.end()) << inst;
    ASSERT_EQ(res.decoded.density_levels[tracks.size() - 2], level);
  }
}

TEST(GenerateTracks, SameSeedSameOutput) {
  std::mt19937_64 rng(6);
  auto base = small_base(rng);
  auto a = generate(kUniform, track_request(base, 2, 42));
  auto b = generate(kUniform, track_request(base, 2, 42));
  auto c = generate(kUniform, track_request(base, 2, 43));
  EXPECT_EQ(a.tokens.ids, b.tokens.ids);
  EXPECT_NE(a.tokens.ids, c.tokens.ids);
}

TEST(GenerateTracks, RejectsBadRequests) {
  std::mt19937_64 rng(7);
  auto base = small_base(rng);
  auto req = track_request(base, 1, 0);
  req.tracks = {{{}, std::nullopt}};
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidRequest);
  req.tracks = {{{129}, std::nullopt}};
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidRequest);
  req.tracks = {{{1}, 10}};
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidRequest);
  req = track_request(base, 0, 0);
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidRequest);
  req = track_request(base, 1, 0);
  req.base_densities = {1};
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidRequest);
  req = track_request(base, 1, 0);
  req.sampler.max_steps = 3;
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::StepBudgetExceeded);
  req = track_request(base, 1, 0);
  req.sampler.top_p = 0;
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidRequest);
  UniformPredictor narrow(4);
  EXPECT_EQ(code_of([&] { generate(narrow, track_request(base, 1, 0)); }), ErrorCode::ContextTooLong);
}

TEST(GenerateTracks, SlidesPastTheModelWindow) {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.embed_dim = 8;
  cfg.ff_dim = 16;
  cfg.window = 64;
  Transformer<float> model(cfg);
  std::mt19937_64 rng(8);
  auto base = small_base(rng, 1, 1);
  base.tracks[0].bars[0].events.clear();
  auto req = track_request(base, 1, 9);
  req.sampler.max_steps = 0;  // default budget: twice the window
  req.sampler.max_steps = 100000;
  auto res = generate(model, req);
  EXPECT_TRUE(validate(res.tokens).empty());
  EXPECT_GT(res.tokens.ids.size(), 64u);
}

// -- bar inpainting ----------------------------------------------------------------

TEST(InpaintBars, OnlySelectedBarsChange) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 30; ++i) {
    auto base = canonical(small_base(rng, 3, 3));
    auto sel = testing_support::random_selection(rng, base, 0.3);
    if (sel.empty() || sel.size() == 9) continue;
    GenerationRequest req;
    req.mode = GenerationMode::BarInpaint;
    req.base = base;
    req.selection = sel;
    req.sampler.seed = i;
    req.sampler.max_steps = 200000;
    auto res = generate(kUniform, req);
    ASSERT_TRUE(validate(res.tokens).empty());
    std::vector<TokenId> sampled(res.tokens.ids.begin() + res.context_length, res.tokens.ids.end());
    ASSERT_EQ(std::count(sampled.begin(), sampled.end(), vocab::kFillEnd), static_cast<long>(sel.size()));
    ASSERT_EQ(sampled.back(), vocab::kFillEnd);
    const auto& out = res.decoded.piece;
    ASSERT_EQ(out.tracks.size(), base.tracks.size());
    ASSERT_EQ(out.n_bars, base.n_bars);
    for (int t = 0; t < 3; ++t) {
      ASSERT_EQ(out.tracks[t].instrument, base.tracks[t].instrument);
      for (int b = 0; b < 3; ++b) {
        if (!sel.contains({t, b})) ASSERT_EQ(out.tracks[t].bars[b], base.tracks[t].bars[b]);
      }
    }
  }
}

TEST(InpaintBars, DegenerateSelectionsAreRejected) {
  std::mt19937_64 rng(10);
  auto base = small_base(rng, 2, 2);
  GenerationRequest req;
  req.mode = GenerationMode::BarInpaint;
  req.base = base;
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidSelection);
  req.selection = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidSelection);
  req.selection = {{5, 0}};
  EXPECT_EQ(code_of([&] { generate(kUniform, req); }), ErrorCode::InvalidSelection);
}

// -- iterative resampling -----------------------------------------------------------

TEST(Resample, ZeroRoundsIsIdentity) {
  std::mt19937_64 rng(11);
  auto base = small_base(rng, 3, 2);
  auto res = resample_iteratively(kUniform, base, {1, 2, 3}, 0, SamplerParams{});
  EXPECT_EQ(res.decoded.piece, canonical(base));
  EXPECT_EQ(res.decoded.density_levels, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(res.generations, 0);
}

TEST(Resample, KeepsInstrumentsAndDensitiesAcrossRounds) {
  std::mt19937_64 rng(12);
  auto base = small_base(rng, 3, 2);
  SamplerParams p;
  p.max_steps = 200000;
  p.seed = 5;
  auto res = resample_iteratively(kUniform, base, {4, 0, 9}, 2, p);
  EXPECT_EQ(res.generations, 6);
  ASSERT_EQ(res.decoded.piece.tracks.size(), 3u);
  for (int t = 0; t < 3; ++t) EXPECT_EQ(res.decoded.piece.tracks[t].instrument, base.tracks[t].instrument);
  EXPECT_EQ(res.decoded.density_levels, (std::vector<int>{4, 0, 9}));
  EXPECT_NE(res.decoded.piece, canonical(base));
  auto again = resample_iteratively(kUniform, base, {4, 0, 9}, 2, p);
  EXPECT_EQ(again.decoded.piece, res.decoded.piece);

  EXPECT_THROW(resample_iteratively(kUniform, small_base(rng, 1, 2), {}, 1, p), Error);
  EXPECT_THROW(resample_iteratively(kUniform, base, {}, -1, p), Error);
}

// -- n-gram end to end ----------------------------------------------------------------

TEST(NGramGeneration, TrainedOnCorpusProducesValidTracks) {
  auto corpus = load_corpus({testing_support::corpus_dir().string()});
  ASSERT_FALSE(corpus.pieces.empty());
  DensityTable table = build_table(accumulate(corpus.pieces));
  DatasetStats stats;
  auto ds = build_dataset(corpus.pieces, BuildConfig::for_bars(4), table, stats);
  auto model = NGramModel::fit(ds.sequences, 4);

  std::mt19937_64 rng(13);
  for (int i = 0; i < 5; ++i) {
    Piece base = corpus.pieces[i];
    BuildConfig window_cfg = BuildConfig::for_bars(4);
    window_cfg.max_tracks = 3;
    base = sample_window(base, window_cfg, rng);
    auto req = track_request(base, 1, i);
    req.base_densities = density_levels(base, table);
    req.tracks = {{{kDrumInstrument}, std::nullopt}};
    auto res = generate(model, req);
    EXPECT_TRUE(validate(res.tokens).empty());
    EXPECT_EQ(res.decoded.piece.tracks.back().instrument, kDrumInstrument);
    EXPECT_EQ(res.decoded.piece.n_bars, 4);
  }
}
