#pragma once

// Training-example construction: random n-bar windows with shuffled track
// order, optional bar masking for fill examples, and a length filter.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trackfill/codec.hpp"
#include "trackfill/density.hpp"
#include "trackfill/error.hpp"
#include "trackfill/piece.hpp"

namespace trackfill {

struct BuildConfig {
  int n_bars = 4;
  int max_tracks = 12;
  std::size_t max_len = 2048;
  SequenceKind mode = SequenceKind::MultiTrack;
  double mask_rate = 0.2;
  std::uint64_t seed = 0;
  int windows_per_piece = 1;

  /// The two standard shapes: 4 bars with up to 12 tracks, 8 bars with up to 6.
  static BuildConfig for_bars(int n_bars) {
    BuildConfig cfg;
    cfg.n_bars = n_bars;
    cfg.max_tracks = n_bars >= 8 ? 6 : 12;
    return cfg;
  }

  void check() const {
    if (n_bars <= 0) throw Error(ErrorCode::InvalidConfig, "n_bars must be positive");
    if (max_tracks <= 0) throw Error(ErrorCode::InvalidConfig, "max_tracks must be positive");
    if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) throw Error(ErrorCode::InvalidConfig, "mask_rate outside [0,1]");
    if (windows_per_piece <= 0) throw Error(ErrorCode::InvalidConfig, "windows_per_piece must be positive");
  }
};

using Rng = std::mt19937_64;

/// Contiguous window of cfg.n_bars bars at a uniform start, with at most
/// cfg.max_tracks tracks in uniformly random order.
inline Piece sample_window(const Piece& piece, const BuildConfig& cfg, Rng& rng) {
  if (piece.n_bars < cfg.n_bars) {
    throw Error(ErrorCode::TooShort, "piece has " + std::to_string(piece.n_bars) + " bars, window needs " +
                                         std::to_string(cfg.n_bars));
  }
  std::uniform_int_distribution<int> start_dist(0, piece.n_bars - cfg.n_bars);
  const int start = start_dist(rng);

  std::vector<std::size_t> order(piece.tracks.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  if (order.size() > static_cast<std::size_t>(cfg.max_tracks)) order.resize(cfg.max_tracks);

  Piece window;
  window.n_bars = cfg.n_bars;
  for (std::size_t t : order) {
    const auto& src = piece.tracks[t];
    QuantizedTrack track;
    track.instrument = src.instrument;
    track.bars.assign(src.bars.begin() + start, src.bars.begin() + start + cfg.n_bars);
    window.tracks.push_back(std::move(track));
  }
  return window;
}

/// Each (track, bar) cell is masked independently with probability
/// `mask_rate`. An empty or total draw is redrawn once; if the redraw is still
/// degenerate a single random cell is added (empty) or removed (total), unless
/// mask_rate is exactly 0, which yields the empty selection.
inline BarSelection draw_selection(const Piece& window, double mask_rate, Rng& rng) {
  const int n_tracks = static_cast<int>(window.tracks.size());
  const int cells = n_tracks * window.n_bars;
  if (cells == 0) return {};
  std::bernoulli_distribution coin(mask_rate);
  BarSelection sel;
  for (int attempt = 0; attempt < 2; ++attempt) {
    sel.clear();
    for (int t = 0; t < n_tracks; ++t) {
      for (int b = 0; b < window.n_bars; ++b) {
        if (coin(rng)) sel.insert({t, b});
      }
    }
    if (!sel.empty() && static_cast<int>(sel.size()) < cells) return sel;
  }
  if (mask_rate == 0.0 || cells == 1) return {};
  std::uniform_int_distribution<int> cell(0, cells - 1);
  int c = cell(rng);
  std::pair<int, int> pick{c / window.n_bars, c % window.n_bars};
  if (sel.empty()) {
    sel.insert(pick);
  } else {
    sel.erase(pick);
  }
  return sel;
}

inline TokenSequence make_example(const Piece& window, const BuildConfig& cfg, const DensityTable& table,
                                  Rng& rng) {
  auto levels = density_levels(window, table);
  if (cfg.mode == SequenceKind::MultiTrack) return encode_multitrack(window, levels);
  return encode_barfill(window, draw_selection(window, cfg.mask_rate, rng), levels);
}

// ---------------------------------------------------------------------------
// Dataset file
//
// Little-endian layout:
//   char[4]  magic "TFDS"
//   u32      version (1)
//   u64      vocabulary hash
//   u32      max_len
//   u64      sequence count N
//   u64[N]   byte offset of each record, relative to the first record
//   records  u32 length L, then L x u16 token ids

struct Dataset {
  std::size_t max_len = 2048;
  std::vector<std::vector<TokenId>> sequences;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetStats {
  std::size_t windows = 0;
  std::size_t too_short = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t max_len = 0;
  std::size_t longest = 0;

  double kept_fraction() const {
    std::size_t total = kept + dropped;
    return total ? static_cast<double>(kept) / static_cast<double>(total) : 1.0;
  }
};

inline nlohmann::json to_json(const DatasetStats& s) {
  return {{"windows", s.windows},   {"too_short", s.too_short}, {"kept", s.kept},
          {"dropped", s.dropped},   {"max_len", s.max_len},     {"longest", s.longest},
          {"kept_fraction", s.kept_fraction()}};
}

namespace dataset_detail {

inline constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T get(const std::vector<char>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::Io, "truncated dataset file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace dataset_detail

inline std::vector<char> serialize(const Dataset& ds) {
  using namespace dataset_detail;
  std::vector<char> records;
  std::vector<std::uint64_t> offsets;
  for (const auto& seq : ds.sequences) {
    offsets.push_back(records.size());
    put<std::uint32_t>(records, static_cast<std::uint32_t>(seq.size()));
    for (TokenId id : seq) put<std::uint16_t>(records, static_cast<std::uint16_t>(id));
  }
  std::vector<char> out{'T', 'F', 'D', 'S'};
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, vocab::hash());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.max_len));
  put<std::uint64_t>(out, ds.sequences.size());
  for (auto o : offsets) put<std::uint64_t>(out, o);
  out.insert(out.end(), records.begin(), records.end());
  return out;
}

inline Dataset deserialize(const std::vector<char>& bytes) {
  using namespace dataset_detail;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "TFDS", 4) != 0) throw Error(ErrorCode::Io, "not a dataset file");
  std::size_t pos = 4;
  if (get<std::uint32_t>(bytes, pos) != kVersion) throw Error(ErrorCode::Io, "unsupported dataset version");
  if (get<std::uint64_t>(bytes, pos) != vocab::hash()) throw Error(ErrorCode::Io, "dataset vocabulary mismatch");
  Dataset ds;
  ds.max_len = get<std::uint32_t>(bytes, pos);
  auto n = get<std::uint64_t>(bytes, pos);
  std::vector<std::uint64_t> offsets(n);
  for (auto& o : offsets) o = get<std::uint64_t>(bytes, pos);
  const std::size_t base = pos;
  for (auto o : offsets) {
    std::size_t p = base + o;
    auto len = get<std::uint32_t>(bytes, p);
    std::vector<TokenId> seq(len);
    for (auto& id : seq) {
      id = get<std::uint16_t>(bytes, p);
      if (!vocab::in_range(id)) throw Error(ErrorCode::Io, "token id out of range in dataset");
    }
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  auto bytes = serialize(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

/// Drops (never truncates) sequences longer than max_len.
inline Dataset filter_and_pack(std::vector<TokenSequence> examples, std::size_t max_len, DatasetStats& stats) {
  Dataset ds;
  ds.max_len = max_len;
  stats.max_len = max_len;
  for (auto& ex : examples) {
    stats.longest = std::max(stats.longest, ex.ids.size());
    if (ex.ids.size() > max_len) {
      ++stats.dropped;
      continue;
    }
    ++stats.kept;
    ds.sequences.push_back(std::move(ex.ids));
  }
  return ds;
}

/// Pieces are dealt round-robin to `shards` workers; worker s draws from an
/// rng seeded with (seed, s) and results are concatenated in shard order, so
/// the output depends only on (corpus, cfg, shards).
inline Dataset build_dataset(const std::vector<Piece>& corpus, const BuildConfig& cfg, const DensityTable& table,
                             DatasetStats& stats, unsigned shards = 1) {
  cfg.check();
  shards = std::max(1u, shards);
  struct ShardOut {
    std::vector<TokenSequence> examples;
    std::size_t windows = 0;
    std::size_t too_short = 0;
    std::exception_ptr error;
  };
  std::vector<ShardOut> outs(shards);
  auto work = [&](unsigned s) noexcept {
    try {
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), s};
      Rng rng(seq);
      for (std::size_t i = s; i < corpus.size(); i += shards) {
        if (corpus[i].n_bars < cfg.n_bars) {
          ++outs[s].too_short;
          continue;
        }
        for (int w = 0; w < cfg.windows_per_piece; ++w) {
          auto window = sample_window(corpus[i], cfg, rng);
          outs[s].examples.push_back(make_example(window, cfg, table, rng));
          ++outs[s].windows;
        }
      }
    } catch (...) {
      outs[s].error = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> workers;
    for (unsigned s = 1; s < shards; ++s) workers.emplace_back(work, s);
    work(0);
  }
  std::vector<TokenSequence> all;
  stats = {};
  for (auto& o : outs) {
    if (o.error) std::rethrow_exception(o.error);
    stats.windows += o.windows;
    stats.too_short += o.too_short;
    std::move(o.examples.begin(), o.examples.end(), std::back_inserter(all));
  }
  return filter_and_pack(std::move(all), cfg.max_len, stats);
}

}  // namespace trackfill
