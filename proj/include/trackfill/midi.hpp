#pragma once

// Standard MIDI File (format 0/1) reading and writing, per-(instrument,
// channel, chunk) track extraction, and quantization onto the 48-step bar grid.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "trackfill/error.hpp"
#include "trackfill/piece.hpp"

namespace trackfill::midi {

enum class MessageKind { NoteOn, NoteOff, ProgramChange, TimeSignature, Other };

struct Message {
  MessageKind kind = MessageKind::Other;
  int channel = 0;
  int pitch = 0;
  int velocity = 0;
  int program = 0;
  int numerator = 4;    // time signature only
  int denominator = 4;  // time signature only, as a note value (4 = quarter)
  std::int64_t tick = 0;

  friend bool operator==(const Message&, const Message&) = default;
};

struct TrackChunk {
  std::vector<Message> messages;
  std::int64_t end_tick = 0;

  friend bool operator==(const TrackChunk&, const TrackChunk&) = default;
};

struct MidiFileIR {
  int format = 1;
  int ticks_per_beat = 480;
  std::vector<TrackChunk> track_chunks;

  friend bool operator==(const MidiFileIR&, const MidiFileIR&) = default;
};

struct RawNote {
  int pitch = 0;
  std::int64_t onset_tick = 0;
  std::int64_t offset_tick = 0;

  friend bool operator==(const RawNote&, const RawNote&) = default;
};

struct RawTrack {
  int instrument = 0;
  int channel = 0;
  int chunk_index = 0;
  std::vector<RawNote> notes;

  friend bool operator==(const RawTrack&, const RawTrack&) = default;
};

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ >= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint8_t peek() const {
    need(1);
    return bytes_[pos_];
  }
  std::uint32_t be(int n) {
    need(static_cast<std::size_t>(n));
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }
  std::uint32_t vlq() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw Error(ErrorCode::MalformedFile, "variable-length quantity longer than 4 bytes");
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::MalformedFile, "unexpected end of data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint8_t data_byte(ByteReader& in) {
  std::uint8_t b = in.u8();
  if (b & 0x80) throw Error(ErrorCode::MalformedFile, "status byte where data byte expected");
  return b;
}

inline TrackChunk parse_track(std::span<const std::uint8_t> body) {
  ByteReader in(body);
  TrackChunk chunk;
  std::int64_t tick = 0;
  std::uint8_t running = 0;
  while (!in.done()) {
    tick += in.vlq();
    std::uint8_t status = in.peek();
    if (status & 0x80) {
      in.u8();
    } else if (running == 0) {
      throw Error(ErrorCode::MalformedFile, "data byte without running status");
    } else {
      status = running;
    }

    if (status == 0xFF) {
      running = 0;
      std::uint8_t type = in.u8();
      std::uint32_t len = in.vlq();
      auto data = in.take(len);
      if (type == 0x2F) {
        chunk.end_tick = tick;
        return chunk;
      }
      if (type == 0x58) {
        if (len < 2) throw Error(ErrorCode::MalformedFile, "short time-signature event");
        if (data[1] > 7) throw Error(ErrorCode::MalformedFile, "time-signature denominator");
        Message m;
        m.kind = MessageKind::TimeSignature;
        m.numerator = data[0];
        m.denominator = 1 << data[1];
        m.tick = tick;
        chunk.messages.push_back(m);
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running = 0;
      in.skip(in.vlq());
      continue;
    }
    if (status >= 0xF0) throw Error(ErrorCode::MalformedFile, "system message inside track");

    running = status;
    Message m;
    m.channel = status & 0x0F;
    m.tick = tick;
    switch (status & 0xF0) {
      case 0x80:
        m.kind = MessageKind::NoteOff;
        m.pitch = data_byte(in);
        m.velocity = data_byte(in);
        break;
      case 0x90:
        m.pitch = data_byte(in);
        m.velocity = data_byte(in);
        m.kind = m.velocity == 0 ? MessageKind::NoteOff : MessageKind::NoteOn;
        break;
      case 0xC0:
        m.kind = MessageKind::ProgramChange;
        m.program = data_byte(in);
        break;
      case 0xD0:
        data_byte(in);
        break;
      default:  // 0xA0 aftertouch, 0xB0 controller, 0xE0 pitch bend
        data_byte(in);
        data_byte(in);
        break;
    }
    chunk.messages.push_back(m);
  }
  // Missing end-of-track: tolerated, the last delta defines the end.
  chunk.end_tick = tick;
  return chunk;
}

inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::array<std::uint8_t, 5> buf{};
  int n = 0;
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n) out.push_back(buf[--n]);
}

inline void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

}  // namespace detail

/// Parses a Standard MIDI File. Delta times and running status are resolved
/// into absolute ticks; note-on with velocity 0 becomes note-off.
inline MidiFileIR parse_midi(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  if (in.remaining() < 14) throw Error(ErrorCode::MalformedFile, "file too short for header");
  auto magic = in.take(4);
  if (std::string(magic.begin(), magic.end()) != "MThd") {
    throw Error(ErrorCode::MalformedFile, "missing MThd");
  }
  std::uint32_t header_len = in.be(4);
  if (header_len < 6 || header_len > in.remaining()) {
    throw Error(ErrorCode::MalformedFile, "bad header length");
  }
  MidiFileIR ir;
  ir.format = static_cast<int>(in.be(2));
  std::uint32_t n_tracks = in.be(2);
  std::uint32_t division = in.be(2);
  in.skip(header_len - 6);

  if (ir.format == 2) throw Error(ErrorCode::UnsupportedFormat, "format 2 (sequential tracks)");
  if (ir.format > 2) throw Error(ErrorCode::MalformedFile, "unknown format " + std::to_string(ir.format));
  if (division & 0x8000) throw Error(ErrorCode::UnsupportedFormat, "SMPTE time division");
  if (division == 0) throw Error(ErrorCode::MalformedFile, "zero ticks per beat");
  ir.ticks_per_beat = static_cast<int>(division);

  while (!in.done()) {
    if (in.remaining() < 8) throw Error(ErrorCode::MalformedFile, "truncated chunk header");
    auto id = in.take(4);
    std::uint32_t len = in.be(4);
    if (len > in.remaining()) throw Error(ErrorCode::MalformedFile, "chunk length exceeds file");
    auto body = in.take(len);
    if (std::string(id.begin(), id.end()) == "MTrk") ir.track_chunks.push_back(detail::parse_track(body));
  }
  if (ir.track_chunks.size() != n_tracks) {
    throw Error(ErrorCode::MalformedFile, "header announces " + std::to_string(n_tracks) +
                                              " tracks, found " + std::to_string(ir.track_chunks.size()));
  }
  return ir;
}

/// Serializes an IR back to SMF bytes. Note-on messages use their stored
/// velocity (or 96 when it is zero); `Other` messages carry no payload and are
/// skipped.
inline std::vector<std::uint8_t> write_midi(const MidiFileIR& ir, std::optional<double> tempo_bpm = {}) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  detail::put_be(out, 6, 4);
  detail::put_be(out, static_cast<std::uint32_t>(ir.format), 2);
  detail::put_be(out, static_cast<std::uint32_t>(ir.track_chunks.size()), 2);
  detail::put_be(out, static_cast<std::uint32_t>(ir.ticks_per_beat), 2);

  for (std::size_t k = 0; k < ir.track_chunks.size(); ++k) {
    const auto& chunk = ir.track_chunks[k];
    std::vector<std::uint8_t> body;
    std::int64_t last = 0;
    if (k == 0 && tempo_bpm) {
      auto us = static_cast<std::uint32_t>(60'000'000.0 / *tempo_bpm + 0.5);
      body.insert(body.end(), {0x00, 0xFF, 0x51, 0x03});
      detail::put_be(body, us, 3);
    }
    for (const auto& m : chunk.messages) {
      if (m.kind == MessageKind::Other) continue;
      detail::put_vlq(body, static_cast<std::uint32_t>(m.tick - last));
      last = m.tick;
      switch (m.kind) {
        case MessageKind::NoteOn:
          body.push_back(static_cast<std::uint8_t>(0x90 | m.channel));
          body.push_back(static_cast<std::uint8_t>(m.pitch));
          body.push_back(static_cast<std::uint8_t>(m.velocity > 0 ? m.velocity : 96));
          break;
        case MessageKind::NoteOff:
          body.push_back(static_cast<std::uint8_t>(0x80 | m.channel));
          body.push_back(static_cast<std::uint8_t>(m.pitch));
          body.push_back(0);
          break;
        case MessageKind::ProgramChange:
          body.push_back(static_cast<std::uint8_t>(0xC0 | m.channel));
          body.push_back(static_cast<std::uint8_t>(m.program));
          break;
        case MessageKind::TimeSignature: {
          int dd = 0;
          while ((1 << dd) < m.denominator) ++dd;
          body.insert(body.end(), {0xFF, 0x58, 0x04, static_cast<std::uint8_t>(m.numerator),
                                   static_cast<std::uint8_t>(dd), 24, 8});
          break;
        }
        case MessageKind::Other: break;
      }
    }
    detail::put_vlq(body, static_cast<std::uint32_t>(std::max<std::int64_t>(chunk.end_tick - last, 0)));
    body.insert(body.end(), {0xFF, 0x2F, 0x00});

    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    detail::put_be(out, static_cast<std::uint32_t>(body.size()), 4);
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

/// Splits every chunk into one track per (instrument, channel, chunk) triple
/// that sounds at least one note. Program state is tracked per channel within
/// a chunk and starts at 0; channel 10 (index 9) maps to the drum instrument.
/// A note-on for a pitch that is already sounding ends the earlier note.
inline std::vector<RawTrack> extract_tracks(const MidiFileIR& ir) {
  using Key = std::tuple<int, int, int>;  // chunk, channel, instrument
  std::map<Key, RawTrack> tracks;

  for (std::size_t k = 0; k < ir.track_chunks.size(); ++k) {
    const auto& chunk = ir.track_chunks[k];
    std::array<int, 16> program{};
    struct Open {
      std::int64_t onset;
      int instrument;
    };
    std::map<std::pair<int, int>, Open> open;  // (channel, pitch)

    auto close = [&](int channel, int pitch, const Open& note, std::int64_t tick) {
      Key key{static_cast<int>(k), channel, note.instrument};
      auto& track = tracks[key];
      track.instrument = note.instrument;
      track.channel = channel;
      track.chunk_index = static_cast<int>(k);
      track.notes.push_back({pitch, note.onset, std::max(tick, note.onset + 1)});
    };

    for (const auto& m : chunk.messages) {
      switch (m.kind) {
        case MessageKind::ProgramChange: program[m.channel] = m.program; break;
        case MessageKind::NoteOn: {
          auto key = std::make_pair(m.channel, m.pitch);
          if (auto it = open.find(key); it != open.end()) {
            close(m.channel, m.pitch, it->second, m.tick);
            open.erase(it);
          }
          int instrument = m.channel == kDrumChannel ? kDrumInstrument : program[m.channel];
          open.emplace(key, Open{m.tick, instrument});
          break;
        }
        case MessageKind::NoteOff: {
          auto key = std::make_pair(m.channel, m.pitch);
          if (auto it = open.find(key); it != open.end()) {
            close(m.channel, m.pitch, it->second, m.tick);
            open.erase(it);
          }
          break;
        }
        default: break;
      }
    }
    for (const auto& [key, note] : open) close(key.first, key.second, note, chunk.end_tick);
  }

  std::vector<RawTrack> out;
  out.reserve(tracks.size());
  for (auto& [key, track] : tracks) {
    std::sort(track.notes.begin(), track.notes.end(), [](const RawNote& a, const RawNote& b) {
      return std::tie(a.onset_tick, a.pitch, a.offset_tick) < std::tie(b.onset_tick, b.pitch, b.offset_tick);
    });
    out.push_back(std::move(track));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bar map and quantization

/// Ticks -> subdivision index, 12 per beat, rounding half up.
inline std::int64_t to_grid(std::int64_t tick, int ticks_per_beat) {
  const std::int64_t num = 2 * tick * kSubdivisionsPerBeat + ticks_per_beat;
  const std::int64_t den = 2 * static_cast<std::int64_t>(ticks_per_beat);
  return num >= 0 ? num / den : -((-num + den - 1) / den);
}

struct BarSpan {
  std::int64_t start_tick = 0;
  std::int64_t end_tick = 0;
  int numerator = 4;
  int denominator = 4;

  bool is_quadruple() const { return numerator == 4 && denominator == 4; }
};

/// Consecutive bars from tick 0. A time signature takes effect at its tick
/// and starts a new bar there.
struct BarMap {
  int ticks_per_beat = 480;
  std::vector<BarSpan> bars;

  static std::int64_t bar_ticks(int ticks_per_beat, int numerator, int denominator) {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(numerator) * ticks_per_beat * 4 / denominator);
  }

  /// Appends bars (continuing the last signature) until `tick` lies inside.
  void extend_to(std::int64_t tick) {
    int num = bars.empty() || bars.back().numerator <= 0 ? 4 : bars.back().numerator;
    int den = bars.empty() || bars.back().numerator <= 0 ? 4 : bars.back().denominator;
    std::int64_t start = bars.empty() ? 0 : bars.back().end_tick;
    while (start <= tick) {
      std::int64_t end = start + bar_ticks(ticks_per_beat, num, den);
      bars.push_back({start, end, num, den});
      start = end;
    }
  }
};

/// Builds bars covering [0, end) where end is the latest chunk end or note tick.
inline BarMap build_bar_map(const MidiFileIR& ir) {
  std::vector<std::tuple<std::int64_t, int, int>> changes;
  std::int64_t end = 0;
  for (const auto& chunk : ir.track_chunks) {
    end = std::max(end, chunk.end_tick);
    for (const auto& m : chunk.messages) {
      end = std::max(end, m.tick);
      if (m.kind == MessageKind::TimeSignature) changes.emplace_back(m.tick, m.numerator, m.denominator);
    }
  }
  std::stable_sort(changes.begin(), changes.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });

  BarMap map;
  map.ticks_per_beat = ir.ticks_per_beat;
  int num = 4;
  int den = 4;
  std::int64_t start = 0;
  std::size_t next = 0;
  while (next < changes.size() && std::get<0>(changes[next]) == 0) {
    num = std::get<1>(changes[next]);
    den = std::get<2>(changes[next]);
    ++next;
  }
  while (start < end) {
    std::int64_t bar_end = start + BarMap::bar_ticks(ir.ticks_per_beat, num, den);
    std::int64_t change_tick = next < changes.size() ? std::get<0>(changes[next]) : -1;
    bool truncated = change_tick > start && change_tick < bar_end;
    if (truncated) bar_end = change_tick;
    // A bar cut short by a signature change is irregular whatever its label.
    map.bars.push_back({start, bar_end, truncated ? 0 : num, den});
    start = bar_end;
    while (next < changes.size() && std::get<0>(changes[next]) <= start) {
      num = std::get<1>(changes[next]);
      den = std::get<2>(changes[next]);
      ++next;
    }
  }
  return map;
}

namespace detail {

/// Removes duplicate (pitch, onset) events, keeping the longest, and cuts
/// same-pitch overlaps at the later onset.
inline void tidy_bar(Bar& bar) {
  auto& ev = bar.events;
  std::sort(ev.begin(), ev.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return std::tie(a.pitch, a.onset, b.offset) < std::tie(b.pitch, b.onset, a.offset);
  });
  std::vector<NoteEvent> kept;
  for (const auto& e : ev) {
    if (!kept.empty() && kept.back().pitch == e.pitch) {
      if (kept.back().onset == e.onset) continue;
      kept.back().offset = std::min(kept.back().offset, e.onset);
    }
    kept.push_back(e);
  }
  std::sort(kept.begin(), kept.end());
  ev = std::move(kept);
}

/// Quantizes onto the grid of `map` (extended as needed). Segments landing in
/// non-4/4 bars either throw or are dropped; the returned track has one bar
/// per map entry.
inline QuantizedTrack quantize_impl(const RawTrack& raw, int ticks_per_beat, BarMap& map, bool drop_irregular) {
  QuantizedTrack out;
  out.instrument = raw.instrument;
  for (const auto& note : raw.notes) {
    std::int64_t on = to_grid(note.onset_tick, ticks_per_beat);
    std::int64_t off = to_grid(note.offset_tick, ticks_per_beat);
    if (off <= on) off = on + 1;

    std::size_t b = 0;
    while (on >= 0) {
      if (b >= map.bars.size()) map.extend_to(map.bars.empty() ? 0 : map.bars.back().end_tick);
      const auto& bar = map.bars[b];
      std::int64_t bar_start = to_grid(bar.start_tick, ticks_per_beat);
      std::int64_t bar_end = to_grid(bar.end_tick, ticks_per_beat);
      if (on >= bar_end) {
        ++b;
        continue;
      }
      std::int64_t seg_end = std::min(off, bar_end);
      if (!bar.is_quadruple() || bar_end - bar_start != kBarLength) {
        if (!drop_irregular) {
          throw Error(ErrorCode::NonQuadrupleMeter, "note at tick " + std::to_string(note.onset_tick) +
                                                        " covers a bar that is not 4/4");
        }
      } else {
        if (out.bars.size() <= b) out.bars.resize(b + 1);
        out.bars[b].events.push_back(
            {note.pitch, static_cast<int>(on - bar_start), static_cast<int>(seg_end - bar_start)});
      }
      if (seg_end >= off) break;
      on = seg_end;
      ++b;
    }
  }
  out.bars.resize(std::max(out.bars.size(), map.bars.size()));
  for (auto& bar : out.bars) tidy_bar(bar);
  return out;
}

}  // namespace detail

/// Snaps onsets and offsets to 12 subdivisions per beat (ties round up),
/// lengthens zero-length notes to one subdivision, and splits notes at bar
/// boundaries. Throws NonQuadrupleMeter if any note touches a non-4/4 bar.
inline QuantizedTrack quantize(const RawTrack& raw, int ticks_per_beat, const BarMap& bar_map) {
  BarMap map = bar_map;
  map.ticks_per_beat = ticks_per_beat;
  return detail::quantize_impl(raw, ticks_per_beat, map, /*drop_irregular=*/false);
}

/// Full pipeline: extract tracks, quantize, keep only 4/4 bars (concatenated
/// in order), drop tracks left without notes, and pad to equal length.
inline Piece piece_from_ir(const MidiFileIR& ir) {
  auto raws = extract_tracks(ir);
  BarMap map = build_bar_map(ir);
  std::int64_t last = 0;
  for (const auto& r : raws) {
    for (const auto& n : r.notes) last = std::max(last, n.offset_tick);
  }
  if (last > 0) map.extend_to(last - 1);

  std::vector<bool> keep(map.bars.size());
  for (std::size_t b = 0; b < map.bars.size(); ++b) {
    const auto& bar = map.bars[b];
    keep[b] = bar.is_quadruple() &&
              to_grid(bar.end_tick, ir.ticks_per_beat) - to_grid(bar.start_tick, ir.ticks_per_beat) == kBarLength;
  }

  std::vector<QuantizedTrack> tracks;
  for (const auto& raw : raws) {
    auto q = detail::quantize_impl(raw, ir.ticks_per_beat, map, /*drop_irregular=*/true);
    QuantizedTrack kept{q.instrument, {}};
    bool any = false;
    for (std::size_t b = 0; b < q.bars.size(); ++b) {
      if (b < keep.size() && !keep[b]) continue;
      any = any || !q.bars[b].events.empty();
      kept.bars.push_back(std::move(q.bars[b]));
    }
    if (any) tracks.push_back(std::move(kept));
  }
  if (tracks.empty()) throw Error(ErrorCode::NoQuadrupleContent, "no notes inside 4/4 bars");
  return assemble_piece(std::move(tracks));
}

inline Piece piece_from_midi(std::span<const std::uint8_t> bytes) { return piece_from_ir(parse_midi(bytes)); }

/// Renders a piece as a format-1 file: a conductor chunk (tempo, 4/4) followed
/// by one chunk per track with its program change. Drums go to channel 10;
/// other tracks cycle through the remaining 15 channels.
inline MidiFileIR piece_to_ir(const Piece& piece, int ticks_per_beat = 480, int velocity = 96) {
  MidiFileIR ir;
  ir.format = 1;
  ir.ticks_per_beat = ticks_per_beat;
  const std::int64_t sub = ticks_per_beat / kSubdivisionsPerBeat;
  if (sub * kSubdivisionsPerBeat != ticks_per_beat) {
    throw Error(ErrorCode::InvalidConfig, "ticks_per_beat must be a multiple of 12 for export");
  }
  const std::int64_t end = static_cast<std::int64_t>(piece.n_bars) * kBarLength * sub;

  TrackChunk conductor;
  Message ts;
  ts.kind = MessageKind::TimeSignature;
  conductor.messages.push_back(ts);
  conductor.end_tick = end;
  ir.track_chunks.push_back(conductor);

  int next_channel = 0;
  for (const auto& track : piece.tracks) {
    int channel = kDrumChannel;
    if (track.instrument != kDrumInstrument) {
      channel = next_channel;
      next_channel = (next_channel + 1) % 16;
      if (next_channel == kDrumChannel) next_channel = kDrumChannel + 1;
    }
    TrackChunk chunk;
    chunk.end_tick = end;
    if (track.instrument != kDrumInstrument) {
      Message pc;
      pc.kind = MessageKind::ProgramChange;
      pc.channel = channel;
      pc.program = track.instrument;
      chunk.messages.push_back(pc);
    }
    std::vector<Message> notes;
    for (std::size_t b = 0; b < track.bars.size(); ++b) {
      const std::int64_t base = static_cast<std::int64_t>(b) * kBarLength;
      for (const auto& e : track.bars[b].events) {
        Message on;
        on.kind = MessageKind::NoteOn;
        on.channel = channel;
        on.pitch = e.pitch;
        on.velocity = velocity;
        on.tick = (base + e.onset) * sub;
        Message off = on;
        off.kind = MessageKind::NoteOff;
        off.velocity = 0;
        off.tick = (base + e.offset) * sub;
        notes.push_back(on);
        notes.push_back(off);
      }
    }
    // Offs sort before ons at the same tick so touching notes stay separate.
    std::stable_sort(notes.begin(), notes.end(), [](const Message& a, const Message& b) {
      auto rank = [](const Message& m) { return m.kind == MessageKind::NoteOff ? 0 : 1; };
      return std::tuple(a.tick, rank(a), a.pitch) < std::tuple(b.tick, rank(b), b.pitch);
    });
    chunk.messages.insert(chunk.messages.end(), notes.begin(), notes.end());
    ir.track_chunks.push_back(std::move(chunk));
  }
  return ir;
}

inline std::vector<std::uint8_t> piece_to_midi(const Piece& piece, double tempo_bpm = 120.0) {
  return write_midi(piece_to_ir(piece), tempo_bpm);
}

// ---------------------------------------------------------------------------
// Debug JSON for the IR

inline std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::NoteOn: return "note_on";
    case MessageKind::NoteOff: return "note_off";
    case MessageKind::ProgramChange: return "program_change";
    case MessageKind::TimeSignature: return "time_signature";
    case MessageKind::Other: return "other";
  }
  return "other";
}

inline nlohmann::json to_json(const MidiFileIR& ir) {
  nlohmann::json chunks = nlohmann::json::array();
  for (const auto& chunk : ir.track_chunks) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : chunk.messages) {
      nlohmann::json j{{"kind", to_string(m.kind)}, {"tick", m.tick}};
      switch (m.kind) {
        case MessageKind::NoteOn:
        case MessageKind::NoteOff:
          j["channel"] = m.channel;
          j["pitch"] = m.pitch;
          break;
        case MessageKind::ProgramChange:
          j["channel"] = m.channel;
          j["program"] = m.program;
          break;
        case MessageKind::TimeSignature:
          j["numerator"] = m.numerator;
          j["denominator"] = m.denominator;
          break;
        case MessageKind::Other: j["channel"] = m.channel; break;
      }
      msgs.push_back(std::move(j));
    }
    chunks.push_back({{"end_tick", chunk.end_tick}, {"messages", std::move(msgs)}});
  }
  return {{"format", ir.format}, {"ticks_per_beat", ir.ticks_per_beat}, {"track_chunks", std::move(chunks)}};
}

}  // namespace trackfill::midi
