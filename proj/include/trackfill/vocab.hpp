#pragma once

// The token alphabet. Ids are laid out in fixed contiguous blocks so a token
// and its integer id convert without lookup tables.

#include <array>
#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "trackfill/error.hpp"
#include "trackfill/piece.hpp"

namespace trackfill {

using TokenId = std::int32_t;

enum class TokenType : std::uint8_t {
  PieceStart,
  TrackStart,
  TrackEnd,
  BarStart,
  BarEnd,
  FillPlaceholder,
  FillStart,
  FillEnd,
  Instrument,
  DensityLevel,
  NoteOn,
  NoteOff,
  TimeShift,
};

struct Token {
  TokenType type = TokenType::PieceStart;
  int value = 0;  // program, density level, pitch, or shift length

  friend bool operator==(const Token&, const Token&) = default;
};

namespace vocab {

inline constexpr int kStructural = 8;
inline constexpr int kMaxShift = kBarLength;

inline constexpr TokenId kInstrumentBase = kStructural;
inline constexpr TokenId kDensityBase = kInstrumentBase + kNumInstruments;
inline constexpr TokenId kNoteOnBase = kDensityBase + kNumDensityLevels;
inline constexpr TokenId kNoteOffBase = kNoteOnBase + kNumPitches;
inline constexpr TokenId kTimeShiftBase = kNoteOffBase + kNumPitches;
inline constexpr TokenId kSize = kTimeShiftBase + kMaxShift;

static_assert(kSize == 451);

inline constexpr TokenId kPieceStart = 0;
inline constexpr TokenId kTrackStart = 1;
inline constexpr TokenId kTrackEnd = 2;
inline constexpr TokenId kBarStart = 3;
inline constexpr TokenId kBarEnd = 4;
inline constexpr TokenId kFillPlaceholder = 5;
inline constexpr TokenId kFillStart = 6;
inline constexpr TokenId kFillEnd = 7;

constexpr TokenId instrument(int program) { return kInstrumentBase + program; }
constexpr TokenId density(int level) { return kDensityBase + level; }
constexpr TokenId note_on(int pitch) { return kNoteOnBase + pitch; }
constexpr TokenId note_off(int pitch) { return kNoteOffBase + pitch; }
constexpr TokenId time_shift(int n) { return kTimeShiftBase + n - 1; }

constexpr bool in_range(TokenId id) { return id >= 0 && id < kSize; }

constexpr Token to_token(TokenId id) {
  if (id < kStructural) return {static_cast<TokenType>(id), 0};
  if (id < kDensityBase) return {TokenType::Instrument, id - kInstrumentBase};
  if (id < kNoteOnBase) return {TokenType::DensityLevel, id - kDensityBase};
  if (id < kNoteOffBase) return {TokenType::NoteOn, id - kNoteOnBase};
  if (id < kTimeShiftBase) return {TokenType::NoteOff, id - kNoteOffBase};
  return {TokenType::TimeShift, id - kTimeShiftBase + 1};
}

constexpr TokenId to_id(Token t) {
  switch (t.type) {
    case TokenType::Instrument: return instrument(t.value);
    case TokenType::DensityLevel: return density(t.value);
    case TokenType::NoteOn: return note_on(t.value);
    case TokenType::NoteOff: return note_off(t.value);
    case TokenType::TimeShift: return time_shift(t.value);
    default: return static_cast<TokenId>(t.type);
  }
}

inline constexpr std::array<std::string_view, 13> kTypeNames = {
    "PIECE_START", "TRACK_START",   "TRACK_END", "BAR_START", "BAR_END",  "FILL_PLACEHOLDER", "FILL_START",
    "FILL_END",    "INSTRUMENT", "DENSITY_LEVEL", "NOTE_ON", "NOTE_OFF", "TIME_SHIFT"};

/// Text mnemonic, e.g. `NOTE_ON:60`, `INSTRUMENT:DRUM`, `BAR_END`.
inline std::string mnemonic(TokenId id) {
  Token t = to_token(id);
  std::string name(kTypeNames[static_cast<int>(t.type)]);
  if (t.type < TokenType::Instrument) return name;
  if (t.type == TokenType::Instrument && t.value == kDrumInstrument) return name + ":DRUM";
  return name + ":" + std::to_string(t.value);
}

inline std::optional<TokenId> parse_mnemonic(std::string_view text) {
  auto colon = text.find(':');
  std::string_view name = text.substr(0, colon);
  int type = -1;
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) type = static_cast<int>(i);
  }
  if (type < 0) return std::nullopt;
  auto tt = static_cast<TokenType>(type);
  if (tt < TokenType::Instrument) {
    if (colon != std::string_view::npos) return std::nullopt;
    return static_cast<TokenId>(type);
  }
  if (colon == std::string_view::npos) return std::nullopt;
  std::string_view arg = text.substr(colon + 1);
  int value = 0;
  if (tt == TokenType::Instrument && arg == "DRUM") {
    value = kDrumInstrument;
  } else {
    auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), value);
    if (ec != std::errc{} || ptr != arg.data() + arg.size()) return std::nullopt;
  }
  int lo = tt == TokenType::TimeShift ? 1 : 0;
  int hi = 0;
  switch (tt) {
    case TokenType::Instrument: hi = kNumPrograms - 1; break;
    case TokenType::DensityLevel: hi = kNumDensityLevels - 1; break;
    case TokenType::TimeShift: hi = kMaxShift; break;
    default: hi = kNumPitches - 1; break;
  }
  if (value < lo || value > hi) {
    if (!(tt == TokenType::Instrument && value == kDrumInstrument)) return std::nullopt;
  }
  return to_id({tt, value});
}

/// The vocabulary table as text, one mnemonic per line in id order.
inline std::string table() {
  std::string out;
  for (TokenId id = 0; id < kSize; ++id) out += mnemonic(id) + "\n";
  return out;
}

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Fingerprint of the id layout; stored in datasets and checkpoints.
inline std::uint64_t hash() {
  static const std::uint64_t h = fnv1a(table());
  return h;
}

inline std::string hash_hex() {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << hash();
  return os.str();
}

}  // namespace vocab
}  // namespace trackfill
