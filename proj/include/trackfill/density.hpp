#pragma once

// Per-instrument note-density bins: deciles of the onsets-per-bar
// distribution, and the level (0-9) a track falls into.

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "trackfill/error.hpp"
#include "trackfill/piece.hpp"

namespace trackfill {

inline constexpr int kNumDensityBoundaries = kNumDensityLevels - 1;

/// Histogram of onsets-per-bar for every instrument. Merging is associative
/// and commutative, so shards can be accumulated independently.
struct OnsetCounts {
  std::array<std::map<int, std::uint64_t>, kNumInstruments> histograms;

  void add(int instrument, int onsets, std::uint64_t times = 1) { histograms.at(instrument)[onsets] += times; }

  void merge(const OnsetCounts& other) {
    for (int i = 0; i < kNumInstruments; ++i) {
      for (auto [count, n] : other.histograms[i]) histograms[i][count] += n;
    }
  }

  std::uint64_t total(int instrument) const {
    std::uint64_t n = 0;
    for (auto [count, times] : histograms[instrument]) n += times;
    return n;
  }

  /// Sorted multiset for one instrument.
  std::vector<int> values(int instrument) const {
    std::vector<int> out;
    for (auto [count, times] : histograms[instrument]) out.insert(out.end(), times, count);
    return out;
  }

  friend bool operator==(const OnsetCounts&, const OnsetCounts&) = default;
};

struct DensityTable {
  using Boundaries = std::array<double, kNumDensityBoundaries>;
  std::array<Boundaries, kNumInstruments> boundaries{};

  friend bool operator==(const DensityTable&, const DensityTable&) = default;
};

inline void accumulate(const Piece& piece, OnsetCounts& counts) {
  for (const auto& track : piece.tracks) {
    for (const auto& bar : track.bars) counts.add(track.instrument, count_onsets(bar));
  }
}

template <typename Range>
OnsetCounts accumulate(const Range& corpus) {
  OnsetCounts counts;
  for (const Piece& piece : corpus) accumulate(piece, counts);
  return counts;
}

/// Boundary j (1..9) is the nearest-rank quantile at probability j/10:
/// the value of rank ceil(j*N/10) in the sorted multiset.
inline DensityTable build_table(const OnsetCounts& counts) {
  DensityTable table;
  for (int inst = 0; inst < kNumInstruments; ++inst) {
    const auto& hist = counts.histograms[inst];
    const std::uint64_t n = counts.total(inst);
    if (n == 0) continue;
    for (int j = 1; j <= kNumDensityBoundaries; ++j) {
      const std::uint64_t rank = (static_cast<std::uint64_t>(j) * n + 9) / 10;
      std::uint64_t seen = 0;
      for (auto [count, times] : hist) {
        seen += times;
        if (seen >= rank) {
          table.boundaries[inst][j - 1] = count;
          break;
        }
      }
    }
  }
  return table;
}

inline double mean_onsets_per_bar(const QuantizedTrack& track) {
  if (track.bars.empty()) return 0.0;
  double total = 0.0;
  for (const auto& bar : track.bars) total += count_onsets(bar);
  return total / static_cast<double>(track.bars.size());
}

/// Number of boundaries strictly below the track's mean onsets per bar, so a
/// mean equal to a boundary lands in the lower bin.
inline int density_level(const QuantizedTrack& track, const DensityTable& table) {
  const double mean = mean_onsets_per_bar(track);
  const auto& b = table.boundaries.at(track.instrument);
  return static_cast<int>(std::lower_bound(b.begin(), b.end(), mean) - b.begin());
}

inline std::vector<int> density_levels(const Piece& piece, const DensityTable& table) {
  std::vector<int> out;
  out.reserve(piece.tracks.size());
  for (const auto& t : piece.tracks) out.push_back(density_level(t, table));
  return out;
}

// density.json: {"version": 1, "boundaries": {"<instrument>": [9 numbers]}}
// Instrument keys are "0".."127" and "drum".

inline constexpr int kDensityJsonVersion = 1;

inline std::string instrument_key(int instrument) {
  return instrument == kDrumInstrument ? "drum" : std::to_string(instrument);
}

inline nlohmann::json to_json(const DensityTable& table) {
  nlohmann::json b = nlohmann::json::object();
  for (int i = 0; i < kNumInstruments; ++i) b[instrument_key(i)] = table.boundaries[i];
  return {{"version", kDensityJsonVersion}, {"boundaries", std::move(b)}};
}

inline DensityTable density_table_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("version", 0) != kDensityJsonVersion) {
    throw Error(ErrorCode::InvalidConfig, "unsupported density table version");
  }
  DensityTable table;
  const auto& b = j.at("boundaries");
  for (int i = 0; i < kNumInstruments; ++i) {
    auto key = instrument_key(i);
    if (!b.contains(key)) continue;
    auto values = b.at(key).get<std::vector<double>>();
    if (values.size() != kNumDensityBoundaries || !std::is_sorted(values.begin(), values.end())) {
      throw Error(ErrorCode::InvalidConfig, "instrument " + key + ": need 9 nondecreasing boundaries");
    }
    std::copy(values.begin(), values.end(), table.boundaries[i].begin());
  }
  return table;
}

inline DensityTable load_density_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  try {
    return density_table_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

inline void save_density_table(const DensityTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << to_json(table).dump(2) << '\n';
}

}  // namespace trackfill
