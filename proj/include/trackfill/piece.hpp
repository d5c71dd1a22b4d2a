#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "trackfill/error.hpp"

namespace trackfill {

inline constexpr int kSubdivisionsPerBeat = 12;
inline constexpr int kBeatsPerBar = 4;
inline constexpr int kBarLength = kSubdivisionsPerBeat * kBeatsPerBar;  // 48
inline constexpr int kNumPrograms = 128;
inline constexpr int kNumPitches = 128;
/// Percussion (MIDI channel 10) has no program; it gets its own instrument id.
inline constexpr int kDrumInstrument = 128;
inline constexpr int kNumInstruments = kNumPrograms + 1;
inline constexpr int kNumDensityLevels = 10;
inline constexpr int kDrumChannel = 9;

/// A note inside one bar, in subdivisions relative to the bar start.
struct NoteEvent {
  int pitch = 0;
  int onset = 0;
  int offset = 1;

  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
  friend auto operator<=>(const NoteEvent& a, const NoteEvent& b) {
    return std::tie(a.onset, a.pitch, a.offset) <=> std::tie(b.onset, b.pitch, b.offset);
  }
};

struct Bar {
  std::vector<NoteEvent> events;

  friend bool operator==(const Bar&, const Bar&) = default;
};

struct QuantizedTrack {
  int instrument = 0;
  std::vector<Bar> bars;

  friend bool operator==(const QuantizedTrack&, const QuantizedTrack&) = default;
};

struct Piece {
  std::vector<QuantizedTrack> tracks;
  int n_bars = 0;

  friend bool operator==(const Piece&, const Piece&) = default;
};

inline bool is_valid_instrument(int instrument) {
  return instrument >= 0 && instrument < kNumInstruments;
}

inline int count_onsets(const Bar& bar) { return static_cast<int>(bar.events.size()); }

/// Sorts events by (onset, pitch). Encoding and decoding are exact inverses
/// on canonical pieces.
inline Bar canonical(Bar bar) {
  std::sort(bar.events.begin(), bar.events.end());
  return bar;
}

inline Piece canonical(Piece piece) {
  for (auto& track : piece.tracks) {
    for (auto& bar : track.bars) bar = canonical(std::move(bar));
  }
  return piece;
}

/// Returns an empty string when the bar is well formed, else the reason.
inline std::string bar_violation(const Bar& bar) {
  std::vector<NoteEvent> sorted = bar.events;
  std::sort(sorted.begin(), sorted.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return std::tie(a.pitch, a.onset) < std::tie(b.pitch, b.onset);
  });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& e = sorted[i];
    if (e.pitch < 0 || e.pitch >= kNumPitches) return "pitch out of range";
    if (e.onset < 0 || e.onset >= e.offset || e.offset > kBarLength) return "event outside bar";
    if (i > 0 && sorted[i - 1].pitch == e.pitch && sorted[i - 1].offset > e.onset) {
      return "overlapping events of equal pitch";
    }
  }
  return {};
}

/// Throws InvalidPiece unless every structural invariant of a Piece holds.
inline void check_piece(const Piece& piece) {
  if (piece.n_bars <= 0 && !piece.tracks.empty()) {
    throw Error(ErrorCode::InvalidPiece, "n_bars must be positive");
  }
  for (std::size_t t = 0; t < piece.tracks.size(); ++t) {
    const auto& track = piece.tracks[t];
    if (!is_valid_instrument(track.instrument)) {
      throw Error(ErrorCode::InvalidPiece, "track " + std::to_string(t) + ": bad instrument");
    }
    if (static_cast<int>(track.bars.size()) != piece.n_bars) {
      throw Error(ErrorCode::InvalidPiece, "track " + std::to_string(t) + ": bar count mismatch");
    }
    for (std::size_t b = 0; b < track.bars.size(); ++b) {
      if (auto why = bar_violation(track.bars[b]); !why.empty()) {
        throw Error(ErrorCode::InvalidPiece,
                    "track " + std::to_string(t) + " bar " + std::to_string(b) + ": " + why);
      }
    }
  }
}

/// Pads every track with empty bars up to the longest one.
inline Piece assemble_piece(std::vector<QuantizedTrack> tracks) {
  if (tracks.empty()) throw Error(ErrorCode::EmptyPiece, "no tracks to assemble");
  std::size_t n_bars = 0;
  for (const auto& t : tracks) n_bars = std::max(n_bars, t.bars.size());
  for (auto& t : tracks) t.bars.resize(n_bars);
  return Piece{std::move(tracks), static_cast<int>(n_bars)};
}

}  // namespace trackfill
