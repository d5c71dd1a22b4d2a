#pragma once

// MultiTrack and BarFill encodings of a Piece, their inverse, and a grammar
// checker that reports every violation it can find.

#include <algorithm>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trackfill/error.hpp"
#include "trackfill/piece.hpp"
#include "trackfill/vocab.hpp"

namespace trackfill {

enum class SequenceKind { MultiTrack, BarFill };

struct TokenSequence {
  SequenceKind kind = SequenceKind::MultiTrack;
  std::vector<TokenId> ids;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// (track_index, bar_index) pairs; std::set order is the traversal order
/// used for the fill suffix.
using BarSelection = std::set<std::pair<int, int>>;

struct DecodedPiece {
  Piece piece;
  std::vector<int> density_levels;

  friend bool operator==(const DecodedPiece&, const DecodedPiece&) = default;
};

struct Violation {
  std::size_t position = 0;
  std::string reason;
};

namespace codec_detail {

/// Emits the interior of one bar: OFFs before ONs at equal times, ascending
/// pitch within each group, shifts merged, padded to the full bar.
inline void emit_bar_body(const Bar& bar, std::vector<TokenId>& out) {
  struct Edge {
    int time;
    int rank;  // 0 = off, 1 = on
    int pitch;
    auto operator<=>(const Edge&) const = default;
  };
  std::vector<Edge> edges;
  edges.reserve(bar.events.size() * 2);
  for (const auto& e : bar.events) {
    edges.push_back({e.onset, 1, e.pitch});
    edges.push_back({e.offset, 0, e.pitch});
  }
  std::sort(edges.begin(), edges.end());
  int cursor = 0;
  for (const auto& edge : edges) {
    if (edge.time > cursor) {
      out.push_back(vocab::time_shift(edge.time - cursor));
      cursor = edge.time;
    }
    out.push_back(edge.rank == 0 ? vocab::note_off(edge.pitch) : vocab::note_on(edge.pitch));
  }
  if (cursor < kBarLength) out.push_back(vocab::time_shift(kBarLength - cursor));
}

inline void check_densities(const Piece& piece, std::span<const int> density_levels) {
  if (density_levels.size() != piece.tracks.size()) {
    throw Error(ErrorCode::InvalidPiece, "need one density level per track");
  }
  for (int d : density_levels) {
    if (d < 0 || d >= kNumDensityLevels) throw Error(ErrorCode::InvalidPiece, "density level out of range");
  }
}

}  // namespace codec_detail

inline TokenSequence encode_barfill(const Piece& piece, const BarSelection& selection,
                                    std::span<const int> density_levels) {
  check_piece(piece);
  codec_detail::check_densities(piece, density_levels);
  for (auto [t, b] : selection) {
    if (t < 0 || t >= static_cast<int>(piece.tracks.size()) || b < 0 || b >= piece.n_bars) {
      throw Error(ErrorCode::InvalidSelection,
                  "cell (" + std::to_string(t) + "," + std::to_string(b) + ") outside the piece");
    }
  }

  TokenSequence seq;
  seq.kind = selection.empty() ? SequenceKind::MultiTrack : SequenceKind::BarFill;
  auto& out = seq.ids;
  out.push_back(vocab::kPieceStart);
  for (std::size_t t = 0; t < piece.tracks.size(); ++t) {
    const auto& track = piece.tracks[t];
    out.push_back(vocab::kTrackStart);
    out.push_back(vocab::instrument(track.instrument));
    out.push_back(vocab::density(density_levels[t]));
    for (int b = 0; b < piece.n_bars; ++b) {
      if (selection.contains({static_cast<int>(t), b})) {
        out.push_back(vocab::kFillPlaceholder);
        continue;
      }
      out.push_back(vocab::kBarStart);
      codec_detail::emit_bar_body(canonical(track.bars[b]), out);
      out.push_back(vocab::kBarEnd);
    }
    out.push_back(vocab::kTrackEnd);
  }
  for (auto [t, b] : selection) {
    out.push_back(vocab::kFillStart);
    codec_detail::emit_bar_body(canonical(piece.tracks[t].bars[b]), out);
    out.push_back(vocab::kFillEnd);
  }
  return seq;
}

/// PIECE_START, then per track TRACK_START INSTRUMENT DENSITY_LEVEL bars
/// TRACK_END. There is no end-of-piece token.
inline TokenSequence encode_multitrack(const Piece& piece, std::span<const int> density_levels) {
  return encode_barfill(piece, {}, density_levels);
}

/// Moves the i-th fill body back into the i-th placeholder.
inline TokenSequence reinsert_fills(const TokenSequence& seq) {
  const auto& ids = seq.ids;
  auto suffix = std::find(ids.begin(), ids.end(), vocab::kFillStart);

  std::vector<std::pair<std::size_t, std::size_t>> bodies;  // [begin, end) indices
  for (auto it = suffix; it != ids.end();) {
    if (*it != vocab::kFillStart) {
      throw Error(ErrorCode::InvalidSequence, "token between fill groups at position " +
                                                  std::to_string(it - ids.begin()));
    }
    auto close = std::find(it + 1, ids.end(), vocab::kFillEnd);
    if (close == ids.end()) throw Error(ErrorCode::FillCountMismatch, "unterminated fill group");
    bodies.emplace_back(static_cast<std::size_t>(it + 1 - ids.begin()),
                        static_cast<std::size_t>(close - ids.begin()));
    it = close + 1;
  }
  auto placeholders = static_cast<std::size_t>(std::count(ids.begin(), suffix, vocab::kFillPlaceholder));
  if (placeholders != bodies.size()) {
    throw Error(ErrorCode::FillCountMismatch, std::to_string(placeholders) + " placeholders but " +
                                                  std::to_string(bodies.size()) + " fill groups");
  }

  TokenSequence out;
  out.kind = SequenceKind::MultiTrack;
  out.ids.reserve(ids.size());
  std::size_t next = 0;
  for (auto it = ids.begin(); it != suffix; ++it) {
    if (*it != vocab::kFillPlaceholder) {
      out.ids.push_back(*it);
      continue;
    }
    auto [begin, end] = bodies[next++];
    out.ids.push_back(vocab::kBarStart);
    out.ids.insert(out.ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(begin),
                   ids.begin() + static_cast<std::ptrdiff_t>(end));
    out.ids.push_back(vocab::kBarEnd);
  }
  return out;
}

namespace codec_detail {

/// Recursive-descent reader shared by validate() and decode(). Structural
/// violations stop the walk; local ones (timing, note pairing) are recorded
/// and the walk continues.
class Reader {
 public:
  Reader(std::span<const TokenId> ids, SequenceKind kind) : ids_(ids), kind_(kind) {}

  DecodedPiece run() {
    if (!parse_piece()) return {};
    if (!out_.piece.tracks.empty()) out_.piece.n_bars = static_cast<int>(out_.piece.tracks.front().bars.size());
    return std::move(out_);
  }

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  bool at_end() const { return pos_ >= ids_.size(); }
  TokenId peek() const { return ids_[pos_]; }

  bool fail(std::string reason) {
    violations_.push_back({pos_, std::move(reason)});
    return false;
  }
  void note(std::size_t at, std::string reason) { violations_.push_back({at, std::move(reason)}); }

  bool expect(TokenId id, std::string_view what) {
    if (at_end()) return fail("expected " + std::string(what) + ", found end of sequence");
    if (peek() != id) return fail("expected " + std::string(what) + ", found " + vocab::mnemonic(peek()));
    ++pos_;
    return true;
  }

  bool parse_piece() {
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!vocab::in_range(ids_[i])) {
        pos_ = i;
        return fail("token id " + std::to_string(ids_[i]) + " outside vocabulary");
      }
    }
    if (!expect(vocab::kPieceStart, "PIECE_START")) return false;
    if (at_end() || peek() != vocab::kTrackStart) return fail("piece needs at least one track");
    while (!at_end() && peek() == vocab::kTrackStart) {
      if (!parse_track()) return false;
    }
    std::size_t n_fills = 0;
    while (!at_end() && peek() == vocab::kFillStart) {
      if (kind_ == SequenceKind::MultiTrack) return fail("FILL_START in a multitrack sequence");
      ++pos_;
      if (n_fills < fill_targets_.size()) {
        auto [t, b] = fill_targets_[n_fills];
        if (!parse_bar_body(vocab::kFillEnd, &out_.piece.tracks[t].bars[b])) return false;
      } else if (!parse_bar_body(vocab::kFillEnd, nullptr)) {
        return false;
      }
      ++n_fills;
    }
    if (!at_end()) return fail("unexpected " + vocab::mnemonic(peek()) + " after last track");
    if (n_fills != fill_targets_.size()) {
      note(pos_, std::to_string(fill_targets_.size()) + " placeholders but " + std::to_string(n_fills) +
                     " fill groups");
    }
    return true;
  }

  bool parse_track() {
    const std::size_t start = pos_;
    ++pos_;  // TRACK_START
    QuantizedTrack track;
    if (at_end() || vocab::to_token(peek()).type != TokenType::Instrument) {
      return fail("INSTRUMENT must follow TRACK_START");
    }
    track.instrument = vocab::to_token(ids_[pos_++]).value;
    if (at_end() || vocab::to_token(peek()).type != TokenType::DensityLevel) {
      return fail("DENSITY_LEVEL must follow INSTRUMENT");
    }
    int level = vocab::to_token(ids_[pos_++]).value;
    const int track_index = static_cast<int>(out_.piece.tracks.size());
    while (!at_end() && (peek() == vocab::kBarStart || peek() == vocab::kFillPlaceholder)) {
      if (peek() == vocab::kFillPlaceholder) {
        if (kind_ == SequenceKind::MultiTrack) return fail("FILL_PLACEHOLDER in a multitrack sequence");
        fill_targets_.emplace_back(track_index, static_cast<int>(track.bars.size()));
        track.bars.emplace_back();
        ++pos_;
        continue;
      }
      ++pos_;
      track.bars.emplace_back();
      if (!parse_bar_body(vocab::kBarEnd, &track.bars.back())) return false;
    }
    if (track.bars.empty()) return fail("track has no bars");
    if (!expect(vocab::kTrackEnd, "TRACK_END")) return false;
    if (!out_.piece.tracks.empty() && out_.piece.tracks.front().bars.size() != track.bars.size()) {
      note(start, "track " + std::to_string(track_index) + " has " + std::to_string(track.bars.size()) +
                      " bars, first track has " + std::to_string(out_.piece.tracks.front().bars.size()));
    }
    out_.piece.tracks.push_back(std::move(track));
    out_.density_levels.push_back(level);
    return true;
  }

  bool parse_bar_body(TokenId terminator, Bar* bar) {
    int time = 0;
    std::array<int, kNumPitches> open;
    open.fill(-1);
    Bar local;
    while (true) {
      if (at_end()) return fail("bar not terminated");
      TokenId id = peek();
      Token tok = vocab::to_token(id);
      if (id == terminator) break;
      switch (tok.type) {
        case TokenType::TimeShift:
          if (time + tok.value > kBarLength) {
            note(pos_, "bar overfull");
            time = kBarLength;
          } else {
            time += tok.value;
          }
          break;
        case TokenType::NoteOn:
          if (time >= kBarLength) {
            note(pos_, "NOTE_ON at end of bar");
          } else if (open[tok.value] >= 0) {
            note(pos_, "NOTE_ON for sounding pitch " + std::to_string(tok.value));
          } else {
            open[tok.value] = time;
          }
          break;
        case TokenType::NoteOff:
          if (open[tok.value] < 0) {
            note(pos_, "unmatched NOTE_OFF " + std::to_string(tok.value));
          } else if (open[tok.value] == time) {
            note(pos_, "zero-length note " + std::to_string(tok.value));
            open[tok.value] = -1;
          } else {
            local.events.push_back({tok.value, open[tok.value], time});
            open[tok.value] = -1;
          }
          break;
        default:
          return fail("unexpected " + vocab::mnemonic(id) + " inside bar");
      }
      ++pos_;
    }
    if (time < kBarLength) note(pos_, "bar underfull (" + std::to_string(time) + " of 48)");
    ++pos_;  // terminator
    for (int p = 0; p < kNumPitches; ++p) {
      if (open[p] >= 0 && open[p] < kBarLength) local.events.push_back({p, open[p], kBarLength});
    }
    if (bar) *bar = canonical(std::move(local));
    return true;
  }

  std::span<const TokenId> ids_;
  SequenceKind kind_;
  std::size_t pos_ = 0;
  DecodedPiece out_;
  std::vector<std::pair<int, int>> fill_targets_;
  std::vector<Violation> violations_;
};

}  // namespace codec_detail

/// Checks the token grammar. An empty result means the sequence is valid.
inline std::vector<Violation> validate(const TokenSequence& seq) {
  codec_detail::Reader reader(seq.ids, seq.kind);
  reader.run();
  return reader.violations();
}

/// Inverse of encode_multitrack (BarFill input is reinserted first). Notes
/// still sounding at the end of a bar close at subdivision 48.
inline DecodedPiece decode(const TokenSequence& seq) {
  if (seq.kind == SequenceKind::BarFill) return decode(reinsert_fills(seq));
  codec_detail::Reader reader(seq.ids, seq.kind);
  DecodedPiece out = reader.run();
  if (!reader.violations().empty()) {
    const auto& v = reader.violations().front();
    throw Error(ErrorCode::InvalidSequence, "position " + std::to_string(v.position) + ": " + v.reason);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string to_text(const TokenSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab::mnemonic(seq.ids[i]);
  }
  out += '\n';
  return out;
}

/// Whitespace-separated mnemonics. The kind is BarFill iff a fill token occurs.
inline TokenSequence from_text(std::string_view text) {
  TokenSequence seq;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    auto id = vocab::parse_mnemonic(word);
    if (!id) throw Error(ErrorCode::InvalidSequence, "unknown token '" + word + "'");
    if (*id == vocab::kFillPlaceholder || *id == vocab::kFillStart) seq.kind = SequenceKind::BarFill;
    seq.ids.push_back(*id);
  }
  return seq;
}

inline constexpr int kSequenceJsonVersion = 1;

inline nlohmann::json to_json(const TokenSequence& seq) {
  return {{"version", kSequenceJsonVersion},
          {"kind", seq.kind == SequenceKind::BarFill ? "barfill" : "multitrack"},
          {"vocab_hash", vocab::hash_hex()},
          {"ids", seq.ids}};
}

inline TokenSequence sequence_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("version", 0) != kSequenceJsonVersion) {
    throw Error(ErrorCode::InvalidSequence, "unsupported token container");
  }
  TokenSequence seq;
  std::string kind = j.value("kind", "multitrack");
  if (kind != "multitrack" && kind != "barfill") throw Error(ErrorCode::InvalidSequence, "bad kind " + kind);
  seq.kind = kind == "barfill" ? SequenceKind::BarFill : SequenceKind::MultiTrack;
  seq.ids = j.at("ids").get<std::vector<TokenId>>();
  for (TokenId id : seq.ids) {
    if (!vocab::in_range(id)) throw Error(ErrorCode::InvalidSequence, "id out of range");
  }
  return seq;
}

}  // namespace trackfill
