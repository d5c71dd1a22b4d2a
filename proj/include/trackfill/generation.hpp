#pragma once

// Constrained autoregressive generation: track inpainting, bar inpainting,
// instrument and density control, and iterative track resampling.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "trackfill/codec.hpp"
#include "trackfill/error.hpp"
#include "trackfill/grammar.hpp"
#include "trackfill/piece.hpp"
#include "trackfill/predictor.hpp"
#include "trackfill/vocab.hpp"

namespace trackfill {

struct SamplerParams {
  double temperature = 1.0;
  double top_p = 1.0;
  /// Upper bound on sampled tokens; 0 means default_max_steps(window).
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;

  void check() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw Error(ErrorCode::InvalidRequest, "temperature must be positive");
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidRequest, "top_p must be in (0, 1]");
  }
};

/// Twice the predictor window, with unbounded windows counted as 2048.
inline std::size_t default_max_steps(std::size_t window) { return 2 * std::min<std::size_t>(window, 2048); }

/// Sampling distribution after masking, temperature and nucleus filtering:
/// (id, probability) pairs in descending probability, ties by ascending id.
inline std::vector<std::pair<TokenId, double>> sampling_distribution(std::span<const float> scores,
                                                                     const SamplerParams& params,
                                                                     const TokenMask& mask) {
  std::vector<std::pair<TokenId, double>> dist;
  double mx = -std::numeric_limits<double>::infinity();
  for (TokenId id = 0; id < vocab::kSize; ++id) {
    if (!mask.test(id)) continue;
    double s = static_cast<double>(scores[id]) / params.temperature;
    if (std::isnan(s)) s = -std::numeric_limits<double>::infinity();
    dist.emplace_back(id, s);
    mx = std::max(mx, s);
  }
  if (dist.empty()) throw Error(ErrorCode::AllMasked, "no token is allowed at this position");
  double sum = 0.0;
  for (auto& [id, s] : dist) {
    // All allowed scores at -inf: fall back to uniform over the allowed set.
    s = std::isinf(mx) ? 1.0 : std::exp(s - mx);
    sum += s;
  }
  for (auto& [id, p] : dist) p /= sum;
  std::stable_sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  if (params.top_p < 1.0) {
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < dist.size()) {
      cum += dist[keep++].second;
      if (cum >= params.top_p) break;
    }
    dist.resize(keep);
    for (auto& [id, p] : dist) p /= cum;
  }
  return dist;
}

/// Masked ids get probability exactly zero; the rest are tempered, softmaxed,
/// restricted to the smallest prefix whose mass reaches top_p, and sampled.
template <typename Rng>
TokenId sample_token(std::span<const float> scores, const SamplerParams& params, const TokenMask& mask, Rng& rng) {
  auto dist = sampling_distribution(scores, params, mask);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  for (const auto& [id, p] : dist) {
    cum += p;
    if (u < cum) return id;
  }
  return dist.back().first;
}

enum class GenerationMode { TrackInpaint, BarInpaint };

struct TrackConstraint {
  /// Allowed instruments (0-127 programs, 128 drums); must be nonempty.
  std::vector<int> instruments;
  std::optional<int> density;
};

struct GenerationRequest {
  Piece base;
  /// Density level of each base track; empty means all zero.
  std::vector<int> base_densities;
  GenerationMode mode = GenerationMode::TrackInpaint;
  int n_new_tracks = 1;
  BarSelection selection;
  /// Constraints per new track; tracks beyond the list may use any instrument.
  std::vector<TrackConstraint> tracks;
  SamplerParams sampler;
  /// Bar count of the first new track when the base piece is empty.
  int max_bars = 16;
};

struct GenerationResult {
  DecodedPiece decoded;
  TokenSequence tokens;       // context followed by everything sampled
  std::size_t context_length = 0;
  std::size_t steps = 0;
};

namespace generation_detail {

inline std::vector<int> base_levels(const GenerationRequest& req) {
  if (req.base_densities.empty()) return std::vector<int>(req.base.tracks.size(), 0);
  if (req.base_densities.size() != req.base.tracks.size()) {
    throw Error(ErrorCode::InvalidRequest, "base_densities must have one entry per base track");
  }
  return req.base_densities;
}

inline TokenMask instrument_mask(const TrackConstraint* c) {
  TokenMask m;
  if (!c) {
    for (int i = 0; i < kNumInstruments; ++i) m.set(vocab::instrument(i));
    return m;
  }
  for (int i : c->instruments) m.set(vocab::instrument(i));
  return m;
}

inline void check_constraints(const GenerationRequest& req) {
  for (const auto& c : req.tracks) {
    if (c.instruments.empty()) throw Error(ErrorCode::InvalidRequest, "allowed instrument set is empty");
    for (int i : c.instruments) {
      if (!is_valid_instrument(i)) throw Error(ErrorCode::InvalidRequest, "instrument out of range");
    }
    if (c.density && (*c.density < 0 || *c.density >= kNumDensityLevels)) {
      throw Error(ErrorCode::InvalidRequest, "density level out of range");
    }
  }
}

/// Feeds the context, then samples under grammar and attribute masks until
/// `finished` holds. Returns the sampled tokens only.
template <typename Finished>
std::vector<TokenId> run(const SequencePredictor& predictor, const std::vector<TokenId>& context, GrammarState& grammar,
                         const GenerationRequest& req, Finished finished, std::size_t& steps) {
  const auto& params = req.sampler;
  const std::size_t budget = params.max_steps ? params.max_steps : default_max_steps(predictor.window());
  check_context(context, predictor.window());
  auto session = predictor.session();
  for (TokenId id : context) {
    grammar.advance(id);
    session->push(id);
  }
  std::vector<TokenId> history = context;
  // A full window restarts the session on the newest half of the history.
  auto push = [&](TokenId id) {
    if (history.size() >= predictor.window()) {
      const std::size_t keep = std::max<std::size_t>(predictor.window() / 2, 1) - 1;
      session = predictor.session();
      for (auto it = history.end() - static_cast<std::ptrdiff_t>(keep); it != history.end(); ++it) session->push(*it);
    }
    session->push(id);
    history.push_back(id);
  };
  std::mt19937_64 rng(params.seed);
  std::vector<TokenId> out;
  int new_track = 0;
  steps = 0;
  while (!finished(grammar)) {
    if (steps >= budget) {
      throw Error(ErrorCode::StepBudgetExceeded, "sampled " + std::to_string(steps) + " tokens without finishing");
    }
    TokenMask mask = grammar.legal();
    const TrackConstraint* c =
        new_track < static_cast<int>(req.tracks.size()) ? &req.tracks[static_cast<std::size_t>(new_track)] : nullptr;
    if (grammar.phase() == GrammarState::Phase::AfterTrackStart) mask &= instrument_mask(c);
    if (grammar.phase() == GrammarState::Phase::AfterInstrument && c && c->density) {
      mask &= TokenMask().set(vocab::density(*c->density));
    }
    auto scores = session->scores();
    TokenId id = sample_token(scores, params, mask, rng);
    grammar.advance(id);
    out.push_back(id);
    ++steps;
    if (id == vocab::kTrackEnd) ++new_track;
    if (!finished(grammar)) push(id);
  }
  return out;
}

}  // namespace generation_detail

/// Conditions on the base tracks (or just PIECE_START when there are none)
/// and samples until the n-th new TRACK_END. New tracks follow the base
/// tracks and always have the base bar count.
inline GenerationResult generate_tracks(const SequencePredictor& predictor, const GenerationRequest& req) {
  if (req.mode != GenerationMode::TrackInpaint) throw Error(ErrorCode::InvalidRequest, "expected track mode");
  if (req.n_new_tracks < 1) throw Error(ErrorCode::InvalidRequest, "n_new_tracks must be at least 1");
  if (req.max_bars < 1) throw Error(ErrorCode::InvalidRequest, "max_bars must be at least 1");
  req.sampler.check();
  generation_detail::check_constraints(req);
  const auto levels = generation_detail::base_levels(req);

  std::vector<TokenId> context{vocab::kPieceStart};
  if (!req.base.tracks.empty()) context = encode_multitrack(canonical(req.base), levels).ids;

  GrammarState grammar(SequenceKind::MultiTrack);
  if (req.base.tracks.empty()) grammar.set_max_bars(req.max_bars);
  const int target = static_cast<int>(req.base.tracks.size()) + req.n_new_tracks;
  GenerationResult result;
  result.context_length = context.size();
  auto sampled = generation_detail::run(
      predictor, context, grammar, req, [target](const GrammarState& g) { return g.tracks_done() == target; },
      result.steps);
  result.tokens.kind = SequenceKind::MultiTrack;
  result.tokens.ids = std::move(context);
  result.tokens.ids.insert(result.tokens.ids.end(), sampled.begin(), sampled.end());
  result.decoded = decode(result.tokens);
  return result;
}

/// Replaces each selected bar with a placeholder and samples until the n-th
/// FILL_END; all other bars come back unchanged.
inline GenerationResult inpaint_bars(const SequencePredictor& predictor, const GenerationRequest& req) {
  if (req.mode != GenerationMode::BarInpaint) throw Error(ErrorCode::InvalidRequest, "expected bar mode");
  req.sampler.check();
  const auto levels = generation_detail::base_levels(req);
  const auto cells = static_cast<std::size_t>(req.base.tracks.size()) * static_cast<std::size_t>(req.base.n_bars);
  if (req.selection.empty()) throw Error(ErrorCode::InvalidSelection, "no bars selected");
  if (req.selection.size() >= cells) throw Error(ErrorCode::InvalidSelection, "every bar is selected");

  // The encoding ends with the original fill bodies; the model sees only the
  // part up to and including the last TRACK_END.
  auto context = encode_barfill(canonical(req.base), req.selection, levels).ids;
  context.erase(std::find(context.rbegin(), context.rend(), vocab::kTrackEnd).base(), context.end());
  GrammarState grammar(SequenceKind::BarFill);
  grammar.set_max_tracks(static_cast<int>(req.base.tracks.size()));
  GenerationResult result;
  result.context_length = context.size();
  auto sampled = generation_detail::run(
      predictor, context, grammar, req,
      [](const GrammarState& g) { return g.phase() == GrammarState::Phase::Done; }, result.steps);
  result.tokens.kind = SequenceKind::BarFill;
  result.tokens.ids = std::move(context);
  result.tokens.ids.insert(result.tokens.ids.end(), sampled.begin(), sampled.end());
  result.decoded = decode(result.tokens);
  return result;
}

inline GenerationResult generate(const SequencePredictor& predictor, const GenerationRequest& req) {
  return req.mode == GenerationMode::TrackInpaint ? generate_tracks(predictor, req) : inpaint_bars(predictor, req);
}

struct ResampleResult {
  DecodedPiece decoded;
  int generations = 0;
};

/// Each round visits tracks 0..n-1 in order and regenerates track i from all
/// the others, keeping its instrument and density level. Call k (0-based)
/// samples with seed params.seed + k.
inline ResampleResult resample_iteratively(const SequencePredictor& predictor, const Piece& piece,
                                           std::vector<int> densities, int rounds, const SamplerParams& params) {
  if (piece.tracks.size() < 2) throw Error(ErrorCode::InvalidRequest, "iterative resampling needs two tracks");
  if (rounds < 0) throw Error(ErrorCode::InvalidRequest, "rounds must be nonnegative");
  if (densities.empty()) densities.assign(piece.tracks.size(), 0);
  if (densities.size() != piece.tracks.size()) throw Error(ErrorCode::InvalidRequest, "one density per track");

  ResampleResult out{{canonical(piece), std::move(densities)}, 0};
  for (int r = 0; r < rounds; ++r) {
    for (std::size_t i = 0; i < out.decoded.piece.tracks.size(); ++i) {
      GenerationRequest req;
      req.mode = GenerationMode::TrackInpaint;
      req.n_new_tracks = 1;
      req.base = out.decoded.piece;
      req.base.tracks.erase(req.base.tracks.begin() + static_cast<std::ptrdiff_t>(i));
      req.base_densities = out.decoded.density_levels;
      req.base_densities.erase(req.base_densities.begin() + static_cast<std::ptrdiff_t>(i));
      req.tracks = {{{out.decoded.piece.tracks[i].instrument}, out.decoded.density_levels[i]}};
      req.sampler = params;
      req.sampler.seed = params.seed + static_cast<std::uint64_t>(out.generations);
      req.max_bars = out.decoded.piece.n_bars;

      auto res = generate_tracks(predictor, req);
      out.decoded.piece.tracks[i] = std::move(res.decoded.piece.tracks.back());
      ++out.generations;
    }
  }
  return out;
}

}  // namespace trackfill
