#pragma once

// JSON views shared by the service and the CLI: the pianoroll document for a
// piece and the wire form of a generation request.

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "trackfill/codec.hpp"
#include "trackfill/error.hpp"
#include "trackfill/generation.hpp"
#include "trackfill/piece.hpp"

namespace trackfill {

/// {n_bars, tracks: [{instrument, density, bars: [[{pitch, onset, offset}]]}]}
/// Instrument 128 denotes drums.
inline nlohmann::json to_pianoroll(const DecodedPiece& d) {
  nlohmann::json tracks = nlohmann::json::array();
  for (std::size_t t = 0; t < d.piece.tracks.size(); ++t) {
    const auto& track = d.piece.tracks[t];
    nlohmann::json bars = nlohmann::json::array();
    for (const auto& bar : track.bars) {
      nlohmann::json events = nlohmann::json::array();
      for (const auto& e : canonical(bar).events) {
        events.push_back({{"pitch", e.pitch}, {"onset", e.onset}, {"offset", e.offset}});
      }
      bars.push_back(std::move(events));
    }
    tracks.push_back({{"instrument", track.instrument},
                      {"density", t < d.density_levels.size() ? d.density_levels[t] : 0},
                      {"bars", std::move(bars)}});
  }
  return {{"n_bars", d.piece.n_bars}, {"tracks", std::move(tracks)}};
}

namespace json_detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::InvalidRequest, std::string("missing field '") + key + "'");
  return *it;
}

inline int integer(const nlohmann::json& j, const char* what) {
  if (!j.is_number_integer()) throw Error(ErrorCode::InvalidRequest, std::string(what) + " must be an integer");
  return j.get<int>();
}

inline double number(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) throw Error(ErrorCode::InvalidRequest, std::string(what) + " must be a number");
  return j.get<double>();
}

inline void only_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys, const char* what) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidRequest, std::string(what) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw Error(ErrorCode::InvalidRequest, std::string("unknown field '") + k + "' in " + what);
    }
  }
}

}  // namespace json_detail

inline DecodedPiece pianoroll_from_json(const nlohmann::json& j) {
  using namespace json_detail;
  only_keys(j, {"n_bars", "tracks"}, "pianoroll");
  DecodedPiece d;
  d.piece.n_bars = integer(field(j, "n_bars"), "n_bars");
  const auto& tracks = field(j, "tracks");
  if (!tracks.is_array()) throw Error(ErrorCode::InvalidRequest, "tracks must be an array");
  for (const auto& tj : tracks) {
    only_keys(tj, {"instrument", "density", "bars"}, "track");
    QuantizedTrack track;
    track.instrument = integer(field(tj, "instrument"), "instrument");
    d.density_levels.push_back(integer(field(tj, "density"), "density"));
    const auto& bars = field(tj, "bars");
    if (!bars.is_array()) throw Error(ErrorCode::InvalidRequest, "bars must be an array");
    for (const auto& bj : bars) {
      if (!bj.is_array()) throw Error(ErrorCode::InvalidRequest, "a bar must be an array of notes");
      Bar bar;
      for (const auto& ej : bj) {
        only_keys(ej, {"pitch", "onset", "offset"}, "note");
        bar.events.push_back({integer(field(ej, "pitch"), "pitch"), integer(field(ej, "onset"), "onset"),
                              integer(field(ej, "offset"), "offset")});
      }
      track.bars.push_back(std::move(bar));
    }
    d.piece.tracks.push_back(std::move(track));
  }
  d.piece = canonical(std::move(d.piece));
  check_piece(d.piece);
  for (int level : d.density_levels) {
    if (level < 0 || level >= kNumDensityLevels) throw Error(ErrorCode::InvalidPiece, "density level out of range");
  }
  return d;
}

/// Wire form of a generation request against a stored base piece:
///   {mode: "track_inpaint" | "bar_inpaint",
///    n_new_tracks?, selection?: [[track, bar]], max_bars?,
///    tracks?: [{allowed_instruments: [int], density?: int | null}],
///    temperature?, top_p?, max_steps?, seed?}
/// Returns the request with `base` left empty; `seed` is unset when absent.
struct WireRequest {
  GenerationRequest request;
  std::optional<std::uint64_t> seed;
};

inline WireRequest generation_request_from_json(const nlohmann::json& j) {
  using namespace json_detail;
  only_keys(j,
            {"mode", "n_new_tracks", "selection", "tracks", "temperature", "top_p", "max_steps", "seed", "max_bars"},
            "request");
  WireRequest out;
  auto& req = out.request;
  const auto& mode = field(j, "mode");
  if (mode == "track_inpaint") {
    req.mode = GenerationMode::TrackInpaint;
  } else if (mode == "bar_inpaint") {
    req.mode = GenerationMode::BarInpaint;
  } else {
    throw Error(ErrorCode::InvalidRequest, "mode must be track_inpaint or bar_inpaint");
  }

  if (req.mode == GenerationMode::TrackInpaint) {
    if (j.contains("selection")) throw Error(ErrorCode::InvalidRequest, "selection is only valid for bar_inpaint");
    req.n_new_tracks = j.contains("n_new_tracks") ? integer(j["n_new_tracks"], "n_new_tracks") : 1;
    if (req.n_new_tracks < 1) throw Error(ErrorCode::InvalidRequest, "n_new_tracks must be at least 1");
  } else {
    if (j.contains("n_new_tracks") || j.contains("tracks")) {
      throw Error(ErrorCode::InvalidRequest, "n_new_tracks and tracks are only valid for track_inpaint");
    }
    const auto& sel = field(j, "selection");
    if (!sel.is_array()) throw Error(ErrorCode::InvalidRequest, "selection must be an array of [track, bar]");
    for (const auto& cell : sel) {
      if (!cell.is_array() || cell.size() != 2) {
        throw Error(ErrorCode::InvalidRequest, "selection cells must be [track, bar] pairs");
      }
      req.selection.insert({integer(cell[0], "selection track"), integer(cell[1], "selection bar")});
    }
    if (req.selection.empty()) throw Error(ErrorCode::InvalidSelection, "no bars selected");
  }

  if (j.contains("tracks")) {
    const auto& tracks = j["tracks"];
    if (!tracks.is_array()) throw Error(ErrorCode::InvalidRequest, "tracks must be an array");
    if (tracks.size() > static_cast<std::size_t>(req.n_new_tracks)) {
      throw Error(ErrorCode::InvalidRequest, "more track constraints than new tracks");
    }
    for (const auto& tj : tracks) {
      only_keys(tj, {"allowed_instruments", "density"}, "track constraint");
      TrackConstraint c;
      const auto& allowed = field(tj, "allowed_instruments");
      if (!allowed.is_array()) throw Error(ErrorCode::InvalidRequest, "allowed_instruments must be an array");
      for (const auto& i : allowed) c.instruments.push_back(integer(i, "instrument"));
      if (tj.contains("density") && !tj["density"].is_null()) c.density = integer(tj["density"], "density");
      req.tracks.push_back(std::move(c));
    }
  }

  if (j.contains("max_bars")) req.max_bars = integer(j["max_bars"], "max_bars");
  if (j.contains("temperature")) req.sampler.temperature = number(j["temperature"], "temperature");
  if (j.contains("top_p")) req.sampler.top_p = number(j["top_p"], "top_p");
  if (j.contains("max_steps")) {
    int steps = integer(j["max_steps"], "max_steps");
    if (steps < 1) throw Error(ErrorCode::InvalidRequest, "max_steps must be positive");
    req.sampler.max_steps = static_cast<std::size_t>(steps);
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
      throw Error(ErrorCode::InvalidRequest, "seed must be a nonnegative integer");
    }
    out.seed = j["seed"].get<std::uint64_t>();
  }
  req.sampler.check();
  generation_detail::check_constraints(req);
  return out;
}

inline nlohmann::json to_json(const GenerationRequest& req) {
  nlohmann::json j;
  if (req.mode == GenerationMode::TrackInpaint) {
    j["mode"] = "track_inpaint";
    j["n_new_tracks"] = req.n_new_tracks;
    j["max_bars"] = req.max_bars;
    nlohmann::json tracks = nlohmann::json::array();
    for (const auto& c : req.tracks) {
      nlohmann::json tj{{"allowed_instruments", c.instruments}};
      tj["density"] = c.density ? nlohmann::json(*c.density) : nlohmann::json(nullptr);
      tracks.push_back(std::move(tj));
    }
    j["tracks"] = std::move(tracks);
  } else {
    j["mode"] = "bar_inpaint";
    nlohmann::json sel = nlohmann::json::array();
    for (auto [t, b] : req.selection) sel.push_back({t, b});
    j["selection"] = std::move(sel);
  }
  j["temperature"] = req.sampler.temperature;
  j["top_p"] = req.sampler.top_p;
  if (req.sampler.max_steps) j["max_steps"] = req.sampler.max_steps;
  j["seed"] = req.sampler.seed;
  return j;
}

}  // namespace trackfill
