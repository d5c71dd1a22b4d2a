// Writes a deterministic corpus of small multi-track MIDI files: varied
// resolutions, drums on channel 10, humanized timing, occasional 3/4
// sections and program changes, and one format-0 file.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "trackfill/midi.hpp"

namespace {

using trackfill::midi::Message;
using trackfill::midi::MessageKind;
using trackfill::midi::MidiFileIR;
using trackfill::midi::TrackChunk;

enum class Role { Bass, Chords, Melody, Drums, Pad };

struct Part {
  Role role;
  int program;
  int channel;
  double rate;  // onset probability per grid slot
};

struct Meter {
  int first_bar;
  int numerator;
};

struct Layout {
  int tpb;
  int n_bars;
  std::vector<Meter> meters;  // sorted by first_bar

  int numerator(int bar) const {
    int n = 4;
    for (const auto& m : meters) {
      if (bar >= m.first_bar) n = m.numerator;
    }
    return n;
  }
  std::int64_t bar_start(int bar) const {
    std::int64_t t = 0;
    for (int b = 0; b < bar; ++b) t += static_cast<std::int64_t>(numerator(b)) * tpb;
    return t;
  }
};

void add_note(TrackChunk& chunk, int channel, int pitch, std::int64_t on, std::int64_t off, int velocity) {
  Message m;
  m.kind = MessageKind::NoteOn;
  m.channel = channel;
  m.pitch = std::clamp(pitch, 0, 127);
  m.velocity = velocity;
  m.tick = on;
  chunk.messages.push_back(m);
  m.kind = MessageKind::NoteOff;
  m.velocity = 0;
  m.tick = std::max(off, on + 1);
  chunk.messages.push_back(m);
}

void sort_chunk(TrackChunk& chunk) {
  std::stable_sort(chunk.messages.begin(), chunk.messages.end(), [](const Message& a, const Message& b) {
    auto rank = [](const Message& m) {
      switch (m.kind) {
        case MessageKind::TimeSignature: return 0;
        case MessageKind::ProgramChange: return 1;
        case MessageKind::NoteOff: return 2;
        default: return 3;
      }
    };
    return std::pair(a.tick, rank(a)) < std::pair(b.tick, rank(b));
  });
  chunk.end_tick = chunk.messages.empty() ? 0 : chunk.messages.back().tick;
}

TrackChunk render_part(const Part& part, const Layout& layout, std::mt19937_64& rng, bool humanize) {
  TrackChunk chunk;
  if (part.role != Role::Drums) {
    Message pc;
    pc.kind = MessageKind::ProgramChange;
    pc.channel = part.channel;
    pc.program = part.program;
    chunk.messages.push_back(pc);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int root = 48 + static_cast<int>(rng() % 12);
  const int scale[7] = {0, 2, 4, 5, 7, 9, 11};
  auto degree = [&](int d, int octave) { return root + 12 * octave + scale[((d % 7) + 7) % 7] + 12 * (d / 7); };
  const int jitter_max = humanize ? std::max(1, layout.tpb / 40) : 0;
  auto jitter = [&]() -> std::int64_t {
    return jitter_max ? static_cast<std::int64_t>(rng() % (2 * jitter_max + 1)) - jitter_max : 0;
  };

  for (int bar = 0; bar < layout.n_bars; ++bar) {
    const std::int64_t start = layout.bar_start(bar);
    const int beats = layout.numerator(bar);
    const int chord = static_cast<int>(rng() % 7);
    switch (part.role) {
      case Role::Bass:
        for (int beat = 0; beat < beats; ++beat) {
          if (u(rng) > part.rate) continue;
          std::int64_t on = start + static_cast<std::int64_t>(beat) * layout.tpb;
          add_note(chunk, part.channel, degree(chord, -1), std::max<std::int64_t>(0, on + jitter()),
                   on + layout.tpb * 9 / 10, 90);
        }
        break;
      case Role::Chords:
      case Role::Pad: {
        const int len = part.role == Role::Pad ? beats : 2;
        for (int beat = 0; beat < beats; beat += len) {
          if (u(rng) > part.rate) continue;
          std::int64_t on = start + static_cast<std::int64_t>(beat) * layout.tpb;
          std::int64_t off = on + static_cast<std::int64_t>(std::min(len, beats - beat)) * layout.tpb;
          for (int k = 0; k < 3; ++k) add_note(chunk, part.channel, degree(chord + 2 * k, 0), on, off, 70);
        }
        break;
      }
      case Role::Melody: {
        const int slots = beats * 4;  // sixteenths
        int d = chord + 7;
        for (int s = 0; s < slots; ++s) {
          if (u(rng) > part.rate) continue;
          int dur = 1 + static_cast<int>(rng() % 3);
          d += static_cast<int>(rng() % 5) - 2;
          d = std::clamp(d, 0, 20);
          std::int64_t on = start + static_cast<std::int64_t>(s) * layout.tpb / 4;
          std::int64_t off = start + static_cast<std::int64_t>(std::min(s + dur, slots)) * layout.tpb / 4;
          add_note(chunk, part.channel, degree(d, 0), std::max<std::int64_t>(0, on + jitter()), off + jitter(), 100);
        }
        break;
      }
      case Role::Drums: {
        const int slots = beats * 4;
        for (int s = 0; s < slots; ++s) {
          std::int64_t on = start + static_cast<std::int64_t>(s) * layout.tpb / 4;
          std::int64_t off = on + layout.tpb / 8;
          if (s % 2 == 0 && u(rng) < part.rate) add_note(chunk, 9, 42, on, off, 80);
          if (s % 8 == 0) add_note(chunk, 9, 36, on, off, 110);
          if (s % 8 == 4 && u(rng) < 0.9) add_note(chunk, 9, 38, on, off, 105);
          if (u(rng) < part.rate * 0.15) add_note(chunk, 9, 45 + static_cast<int>(rng() % 6), on, off, 90);
        }
        break;
      }
    }
  }
  sort_chunk(chunk);
  return chunk;
}

MidiFileIR make_file(int index, std::mt19937_64& rng) {
  static constexpr int kResolutions[] = {480, 384, 96, 220, 960};
  static constexpr Part kPalette[] = {
      {Role::Bass, 33, 0, 0.9},    {Role::Chords, 0, 1, 0.8},  {Role::Melody, 73, 2, 0.45},
      {Role::Drums, 0, 9, 0.8},    {Role::Pad, 48, 3, 0.9},    {Role::Melody, 65, 4, 0.25},
      {Role::Bass, 38, 5, 0.5},    {Role::Chords, 24, 6, 0.6}, {Role::Melody, 40, 7, 0.7},
      {Role::Pad, 89, 8, 0.7},     {Role::Melody, 56, 10, 0.35}, {Role::Chords, 4, 11, 0.4},
      {Role::Melody, 0, 12, 0.6},  {Role::Bass, 32, 13, 0.7},
  };
  Layout layout;
  layout.tpb = kResolutions[rng() % std::size(kResolutions)];
  layout.n_bars = 2 + static_cast<int>(rng() % 30);
  if (index % 7 == 3 && layout.n_bars > 6) layout.meters = {{0, 4}, {layout.n_bars / 2, 3}, {layout.n_bars / 2 + 2, 4}};

  const int n_parts = 1 + static_cast<int>(rng() % (index % 11 == 5 ? 14 : 6));
  std::vector<Part> parts(std::begin(kPalette), std::end(kPalette));
  std::shuffle(parts.begin(), parts.end(), rng);
  parts.resize(static_cast<std::size_t>(n_parts));
  const bool humanize = index % 3 != 0;

  MidiFileIR ir;
  ir.ticks_per_beat = layout.tpb;
  TrackChunk conductor;
  for (const auto& m : layout.meters.empty() ? std::vector<Meter>{{0, 4}} : layout.meters) {
    Message ts;
    ts.kind = MessageKind::TimeSignature;
    ts.numerator = m.numerator;
    ts.tick = layout.bar_start(m.first_bar);
    conductor.messages.push_back(ts);
  }
  ir.track_chunks.push_back(conductor);
  for (const auto& p : parts) ir.track_chunks.push_back(render_part(p, layout, rng, humanize));

  // A mid-piece program change splits one part into two tracks.
  if (index % 5 == 2) {
    for (auto& chunk : ir.track_chunks) {
      auto it = std::find_if(chunk.messages.begin(), chunk.messages.end(),
                             [](const Message& m) { return m.kind == MessageKind::ProgramChange; });
      if (it == chunk.messages.end()) continue;
      Message pc = *it;
      pc.program = (pc.program + 8) % 128;
      pc.tick = layout.bar_start(layout.n_bars / 2);
      chunk.messages.push_back(pc);
      sort_chunk(chunk);
      break;
    }
  }

  const std::int64_t end = layout.bar_start(layout.n_bars);
  if (index % 13 == 6) {
    TrackChunk merged;
    for (const auto& c : ir.track_chunks) merged.messages.insert(merged.messages.end(), c.messages.begin(), c.messages.end());
    sort_chunk(merged);
    ir.format = 0;
    ir.track_chunks = {merged};
  }
  for (auto& c : ir.track_chunks) c.end_tick = std::max(c.end_tick, end);
  return ir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write the deterministic synthetic MIDI corpus"};
  std::string out_dir = "data/corpus";
  int count = 48;
  std::uint64_t seed = 20201;
  app.add_option("out", out_dir, "Output directory");
  app.add_option("--count", count, "Number of files")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Random seed");
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(out_dir);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    auto ir = make_file(i, rng);
    auto bytes = trackfill::midi::write_midi(ir, 100.0 + (i % 5) * 10.0);
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03d.mid", i);
    std::ofstream out(std::filesystem::path(out_dir) / name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::cout << "wrote " << count << " files to " << out_dir << "\n";
  return 0;
}
