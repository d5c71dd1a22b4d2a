#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "trackfill/error.hpp"
#include "trackfill/midi.hpp"
#include "trackfill/piece.hpp"

namespace trackfill {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Expands directories to their *.mid / *.midi files (non-recursive), sorted
/// by path; plain file arguments are kept as given.
inline std::vector<std::filesystem::path> midi_paths(const std::vector<std::string>& inputs) {
  std::vector<std::filesystem::path> out;
  for (const auto& in : inputs) {
    std::filesystem::path p(in);
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> found;
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && (ext == ".mid" || ext == ".midi")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (std::filesystem::exists(p)) {
      out.push_back(p);
    } else {
      throw Error(ErrorCode::Io, "no such file or directory: " + in);
    }
  }
  return out;
}

struct LoadedCorpus {
  std::vector<Piece> pieces;
  std::vector<std::filesystem::path> sources;
  /// (file, reason) for every file that could not be turned into a piece.
  std::vector<std::pair<std::filesystem::path, std::string>> skipped;
};

/// Parses every file; files that fail the MIDI pipeline are skipped, not fatal.
inline LoadedCorpus load_corpus(const std::vector<std::string>& inputs) {
  LoadedCorpus corpus;
  for (const auto& path : midi_paths(inputs)) {
    try {
      auto bytes = read_file(path);
      corpus.pieces.push_back(midi::piece_from_midi(bytes));
      corpus.sources.push_back(path);
    } catch (const Error& e) {
      corpus.skipped.emplace_back(path, e.what());
    }
  }
  return corpus;
}

}  // namespace trackfill
