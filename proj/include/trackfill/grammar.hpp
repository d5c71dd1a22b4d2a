#pragma once

// Incremental automaton over the token grammar. It answers "which tokens may
// come next" in O(vocabulary) and is what keeps constrained sampling inside
// the language. It is deliberately independent from the validator in
// codec.hpp, which re-checks everything the sampler produces.

#include <array>
#include <bitset>
#include <optional>
#include <string>

#include "trackfill/codec.hpp"
#include "trackfill/error.hpp"
#include "trackfill/vocab.hpp"

namespace trackfill {

using TokenMask = std::bitset<vocab::kSize>;

class GrammarState {
 public:
  enum class Phase {
    Start,            // expects PIECE_START
    BetweenTracks,    // after PIECE_START or TRACK_END
    AfterTrackStart,  // expects INSTRUMENT
    AfterInstrument,  // expects DENSITY_LEVEL
    InTrack,          // expects a bar, a placeholder or TRACK_END
    InBar,            // inside BAR_START .. BAR_END
    FillSuffix,       // after the last track of a BarFill sequence
    InFill,           // inside FILL_START .. FILL_END
    Done,             // every placeholder has been filled
  };

  explicit GrammarState(SequenceKind kind = SequenceKind::MultiTrack) : kind_(kind) { open_.fill(-1); }

  Phase phase() const { return phase_; }
  int time() const { return time_; }
  int tracks_done() const { return track_ends_; }
  int fills_done() const { return fill_ends_; }
  int placeholders() const { return placeholders_; }
  int bars_in_track() const { return bars_in_track_; }
  std::optional<int> bars_per_track() const { return bars_per_track_; }
  bool is_open(int pitch) const { return open_[pitch] >= 0; }

  /// Caps the bar count of the first track while no reference length exists.
  void set_max_bars(int n) { max_bars_ = n; }

  /// Forbids TRACK_START once `n` tracks have ended.
  void set_max_tracks(int n) { max_tracks_ = n; }

  TokenMask legal() const {
    TokenMask m;
    switch (phase_) {
      case Phase::Start: m.set(vocab::kPieceStart); break;
      case Phase::BetweenTracks:
        if (!max_tracks_ || track_ends_ < *max_tracks_) m.set(vocab::kTrackStart);
        if (kind_ == SequenceKind::BarFill && track_ends_ > 0 && placeholders_ > 0) m.set(vocab::kFillStart);
        break;
      case Phase::AfterTrackStart:
        for (int i = 0; i < kNumInstruments; ++i) m.set(vocab::instrument(i));
        break;
      case Phase::AfterInstrument:
        for (int d = 0; d < kNumDensityLevels; ++d) m.set(vocab::density(d));
        break;
      case Phase::InTrack: {
        const int cap = bars_per_track_ ? *bars_per_track_ : max_bars_;
        if (bars_in_track_ < cap) {
          m.set(vocab::kBarStart);
          if (kind_ == SequenceKind::BarFill) m.set(vocab::kFillPlaceholder);
        }
        const bool length_ok = bars_per_track_ ? bars_in_track_ == *bars_per_track_ : bars_in_track_ >= 1;
        if (length_ok) m.set(vocab::kTrackEnd);
        break;
      }
      case Phase::InBar: bar_interior(m, vocab::kBarEnd); break;
      case Phase::FillSuffix:
        if (fill_ends_ < placeholders_) m.set(vocab::kFillStart);
        break;
      case Phase::InFill: bar_interior(m, vocab::kFillEnd); break;
      case Phase::Done: break;
    }
    return m;
  }

  /// Consumes one token; throws InvalidSequence if it is not legal here.
  void advance(TokenId id) {
    if (!vocab::in_range(id) || !legal().test(id)) {
      throw Error(ErrorCode::InvalidSequence,
                  "token " + (vocab::in_range(id) ? vocab::mnemonic(id) : std::to_string(id)) + " not allowed here");
    }
    Token t = vocab::to_token(id);
    switch (phase_) {
      case Phase::Start: phase_ = Phase::BetweenTracks; break;
      case Phase::BetweenTracks:
        if (id == vocab::kTrackStart) {
          phase_ = Phase::AfterTrackStart;
        } else {
          start_bar();
          phase_ = Phase::InFill;
        }
        break;
      case Phase::AfterTrackStart: phase_ = Phase::AfterInstrument; break;
      case Phase::AfterInstrument:
        phase_ = Phase::InTrack;
        bars_in_track_ = 0;
        break;
      case Phase::InTrack:
        if (id == vocab::kTrackEnd) {
          if (!bars_per_track_) bars_per_track_ = bars_in_track_;
          ++track_ends_;
          phase_ = Phase::BetweenTracks;
        } else if (id == vocab::kFillPlaceholder) {
          ++placeholders_;
          ++bars_in_track_;
        } else {
          ++bars_in_track_;
          start_bar();
          phase_ = Phase::InBar;
        }
        break;
      case Phase::InBar:
      case Phase::InFill:
        if (id == vocab::kBarEnd) {
          phase_ = Phase::InTrack;
        } else if (id == vocab::kFillEnd) {
          ++fill_ends_;
          phase_ = fill_ends_ == placeholders_ ? Phase::Done : Phase::FillSuffix;
        } else if (t.type == TokenType::TimeShift) {
          time_ += t.value;
        } else if (t.type == TokenType::NoteOn) {
          open_[t.value] = time_;
          ++n_open_;
        } else {
          open_[t.value] = -1;
          --n_open_;
        }
        break;
      case Phase::FillSuffix:
        start_bar();
        phase_ = Phase::InFill;
        break;
      case Phase::Done: break;
    }
  }

 private:
  void start_bar() {
    time_ = 0;
    open_.fill(-1);
    n_open_ = 0;
  }

  /// Notes start strictly inside the bar, end after they start, and every
  /// note is closed before the bar terminator, which needs the full 48 steps.
  void bar_interior(TokenMask& m, TokenId terminator) const {
    for (int p = 0; p < kNumPitches; ++p) {
      if (open_[p] < 0) {
        if (time_ < kBarLength) m.set(vocab::note_on(p));
      } else if (open_[p] < time_) {
        m.set(vocab::note_off(p));
      }
    }
    for (int n = 1; time_ + n <= kBarLength; ++n) m.set(vocab::time_shift(n));
    if (time_ == kBarLength && n_open_ == 0) m.set(terminator);
  }

  SequenceKind kind_;
  Phase phase_ = Phase::Start;
  int time_ = 0;
  std::array<int, kNumPitches> open_{};
  int n_open_ = 0;
  int bars_in_track_ = 0;
  std::optional<int> bars_per_track_;
  int max_bars_ = 64;
  std::optional<int> max_tracks_;
  int track_ends_ = 0;
  int placeholders_ = 0;
  int fill_ends_ = 0;
};

}  // namespace trackfill
