#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "trackfill/codec.hpp"

using namespace trackfill;
using testing_support::random_levels;
using testing_support::random_piece;
using testing_support::random_selection;

namespace {

Piece one_bar_piece(int instrument, std::vector<NoteEvent> events, int n_bars = 1) {
  Piece p;
  p.n_bars = n_bars;
  QuantizedTrack t{instrument, std::vector<Bar>(static_cast<std::size_t>(n_bars))};
  t.bars[0].events = std::move(events);
  p.tracks.push_back(t);
  return p;
}

std::vector<TokenId> ids(std::initializer_list<TokenId> l) { return l; }

bool has_reason(const std::vector<Violation>& vs, const std::string& needle) {
  for (const auto& v : vs) {
    if (v.reason.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(Encode, SilentBarIsOneFullShift) {
  auto seq = encode_multitrack(one_bar_piece(0, {}), std::vector{0});
  EXPECT_EQ(seq.kind, SequenceKind::MultiTrack);
  EXPECT_EQ(seq.ids, ids({vocab::kPieceStart, vocab::kTrackStart, vocab::instrument(0), vocab::density(0),
                          vocab::kBarStart, vocab::time_shift(48), vocab::kBarEnd, vocab::kTrackEnd}));
}

TEST(Encode, SingleNoteHandTrace) {
  auto seq = encode_multitrack(one_bar_piece(30, {{60, 0, 12}}), std::vector{7});
  EXPECT_EQ(seq.ids, ids({vocab::kPieceStart, vocab::kTrackStart, vocab::instrument(30), vocab::density(7),
                          vocab::kBarStart, vocab::note_on(60), vocab::time_shift(12), vocab::note_off(60),
                          vocab::time_shift(36), vocab::kBarEnd, vocab::kTrackEnd}));
}

TEST(Encode, SimultaneousOnsetsAscendByPitch) {
  auto seq = encode_multitrack(one_bar_piece(0, {{64, 0, 48}, {60, 0, 48}}), std::vector{0});
  std::vector<TokenId> body(seq.ids.begin() + 5, seq.ids.end() - 2);
  EXPECT_EQ(body, ids({vocab::note_on(60), vocab::note_on(64), vocab::time_shift(48), vocab::note_off(60),
                       vocab::note_off(64)}));
}

TEST(Encode, OffsPrecedeOnsAtEqualTime) {
  auto seq = encode_multitrack(one_bar_piece(0, {{62, 12, 48}, {60, 0, 12}, {70, 0, 12}}), std::vector{0});
  std::vector<TokenId> body(seq.ids.begin() + 5, seq.ids.end() - 2);
  EXPECT_EQ(body, ids({vocab::note_on(60), vocab::note_on(70), vocab::time_shift(12), vocab::note_off(60),
                       vocab::note_off(70), vocab::note_on(62), vocab::time_shift(36), vocab::note_off(62)}));
}

TEST(Encode, RejectsInvalidInput) {
  auto p = one_bar_piece(0, {{60, 10, 5}});
  EXPECT_THROW(encode_multitrack(p, std::vector{0}), Error);
  auto ok = one_bar_piece(0, {});
  try {
    encode_multitrack(ok, std::vector{10});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidPiece);
  }
  EXPECT_THROW(encode_multitrack(ok, std::vector<int>{}), Error);
  try {
    encode_barfill(ok, {{0, 1}}, std::vector{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidSelection);
  }
}

TEST(BarFill, OneSelectedBarMovesToSuffix) {
  auto p = one_bar_piece(5, {}, 2);
  p.tracks[0].bars[1].events = {{67, 6, 30}};
  auto seq = encode_barfill(p, {{0, 1}}, std::vector{3});
  EXPECT_EQ(seq.kind, SequenceKind::BarFill);
  EXPECT_EQ(seq.ids, ids({vocab::kPieceStart, vocab::kTrackStart, vocab::instrument(5), vocab::density(3),
                          vocab::kBarStart, vocab::time_shift(48), vocab::kBarEnd, vocab::kFillPlaceholder,
                          vocab::kTrackEnd, vocab::kFillStart, vocab::time_shift(6), vocab::note_on(67),
                          vocab::time_shift(24), vocab::note_off(67), vocab::time_shift(18), vocab::kFillEnd}));
  EXPECT_TRUE(validate(seq).empty());
}

TEST(BarFill, FillBodiesFollowTraversalOrder) {
  Piece p;
  p.n_bars = 3;
  for (int t = 0; t < 2; ++t) p.tracks.push_back({t, std::vector<Bar>(3)});
  p.tracks[0].bars[0].events = {{40, 0, 1}};
  p.tracks[1].bars[2].events = {{41, 0, 1}};
  auto seq = encode_barfill(p, {{1, 2}, {0, 0}}, std::vector{0, 0});
  auto first = std::find(seq.ids.begin(), seq.ids.end(), vocab::kFillStart);
  ASSERT_NE(first, seq.ids.end());
  EXPECT_EQ(*(first + 1), vocab::note_on(40));
  auto second = std::find(first + 1, seq.ids.end(), vocab::kFillStart);
  ASSERT_NE(second, seq.ids.end());
  EXPECT_EQ(*(second + 1), vocab::note_on(41));
}

TEST(BarFill, EmptySelectionDegeneratesToMultiTrack) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    auto p = random_piece(rng);
    auto d = random_levels(rng, p.tracks.size());
    auto a = encode_barfill(p, {}, d);
    auto b = encode_multitrack(p, d);
    ASSERT_EQ(a.ids, b.ids);
    ASSERT_EQ(a.kind, SequenceKind::MultiTrack);
  }
}

TEST(Reinsert, InvertsBarFillForRandomSelections) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    auto p = random_piece(rng);
    auto d = random_levels(rng, p.tracks.size());
    auto sel = random_selection(rng, p, std::uniform_real_distribution<double>(0, 1)(rng));
    auto filled = encode_barfill(p, sel, d);
    ASSERT_TRUE(validate(filled).empty());
    ASSERT_EQ(reinsert_fills(filled).ids, encode_multitrack(p, d).ids);
    ASSERT_EQ(decode(filled).piece, canonical(p));
  }
}

TEST(Reinsert, WithoutPlaceholdersIsIdentity) {
  auto seq = encode_multitrack(one_bar_piece(0, {{60, 0, 12}}), std::vector{0});
  EXPECT_EQ(reinsert_fills(seq).ids, seq.ids);
}

TEST(Reinsert, CountMismatchIsReported) {
  auto p = one_bar_piece(0, {}, 2);
  auto seq = encode_barfill(p, {{0, 0}, {0, 1}}, std::vector{0});
  auto second = std::find(seq.ids.begin() + 1, seq.ids.end(), vocab::kFillEnd);
  seq.ids.erase(second + 1, seq.ids.end());  // keep only the first group
  try {
    reinsert_fills(seq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FillCountMismatch);
  }
}

TEST(Decode, InvertsHandTraces) {
  auto silent = decode(from_text("PIECE_START TRACK_START INSTRUMENT:0 DENSITY_LEVEL:0 BAR_START TIME_SHIFT:48 "
                                 "BAR_END TRACK_END"));
  EXPECT_EQ(silent.piece, one_bar_piece(0, {}));
  EXPECT_EQ(silent.density_levels, std::vector{0});

  auto note = decode(from_text("PIECE_START TRACK_START INSTRUMENT:30 DENSITY_LEVEL:4 BAR_START NOTE_ON:60 "
                               "TIME_SHIFT:12 NOTE_OFF:60 TIME_SHIFT:36 BAR_END TRACK_END"));
  EXPECT_EQ(note.piece, one_bar_piece(30, {{60, 0, 12}}));
  EXPECT_EQ(note.density_levels, std::vector{4});
}

TEST(Decode, ToleratesSplitShiftsAndClosesOpenNotes) {
  auto d = decode(from_text("PIECE_START TRACK_START INSTRUMENT:DRUM DENSITY_LEVEL:1 BAR_START NOTE_ON:36 "
                            "TIME_SHIFT:20 TIME_SHIFT:28 BAR_END TRACK_END"));
  EXPECT_EQ(d.piece.tracks[0].instrument, kDrumInstrument);
  EXPECT_EQ(d.piece.tracks[0].bars[0].events, (std::vector<NoteEvent>{{36, 0, 48}}));
}

TEST(RoundTrip, RandomPiecesDecodeExactly) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    auto p = random_piece(rng);
    auto d = random_levels(rng, p.tracks.size());
    auto seq = encode_multitrack(p, d);
    ASSERT_TRUE(validate(seq).empty());
    auto back = decode(seq);
    ASSERT_EQ(back.piece, canonical(p));
    ASSERT_EQ(back.density_levels, d);
  }
}

TEST(Validate, ReportsUnderfullBar) {
  auto v = validate(from_text("PIECE_START TRACK_START INSTRUMENT:0 DENSITY_LEVEL:0 BAR_START TIME_SHIFT:47 "
                              "BAR_END TRACK_END"));
  ASSERT_FALSE(v.empty());
  EXPECT_TRUE(has_reason(v, "bar underfull"));
}

TEST(Validate, ReportsUnmatchedNoteOff) {
  auto v = validate(from_text("PIECE_START TRACK_START INSTRUMENT:0 DENSITY_LEVEL:0 BAR_START NOTE_OFF:61 "
                              "TIME_SHIFT:48 BAR_END TRACK_END"));
  EXPECT_TRUE(has_reason(v, "unmatched NOTE_OFF"));
}

TEST(Validate, ReportsStructuralAndTimingFaults) {
  const std::string head = "PIECE_START TRACK_START INSTRUMENT:0 DENSITY_LEVEL:0 ";
  EXPECT_TRUE(has_reason(validate(from_text(head + "BAR_START TIME_SHIFT:40 TIME_SHIFT:10 BAR_END TRACK_END")),
                         "bar overfull"));
  EXPECT_TRUE(has_reason(validate(from_text(head + "BAR_START NOTE_ON:60 NOTE_ON:60 TIME_SHIFT:48 BAR_END TRACK_END")),
                         "sounding pitch"));
  EXPECT_TRUE(has_reason(validate(from_text(head + "BAR_START NOTE_ON:60 NOTE_OFF:60 TIME_SHIFT:48 BAR_END TRACK_END")),
                         "zero-length"));
  EXPECT_TRUE(has_reason(validate(from_text(head + "BAR_START TIME_SHIFT:48 NOTE_ON:60 BAR_END TRACK_END")),
                         "end of bar"));
  EXPECT_FALSE(validate(from_text(head + "BAR_START TIME_SHIFT:48 BAR_END")).empty());  // no TRACK_END
  EXPECT_FALSE(validate(from_text("TRACK_START INSTRUMENT:0 DENSITY_LEVEL:0 BAR_START TIME_SHIFT:48 BAR_END "
                                  "TRACK_END"))
                   .empty());
  EXPECT_FALSE(validate(from_text("PIECE_START")).empty());  // at least one track
  EXPECT_FALSE(validate(from_text(head + "TRACK_END")).empty());  // at least one bar
  // Unequal bar counts.
  EXPECT_FALSE(validate(from_text(head + "BAR_START TIME_SHIFT:48 BAR_END TRACK_END TRACK_START INSTRUMENT:1 "
                                         "DENSITY_LEVEL:0 BAR_START TIME_SHIFT:48 BAR_END BAR_START TIME_SHIFT:48 "
                                         "BAR_END TRACK_END"))
                   .empty());
  // Fill tokens in a MultiTrack sequence.
  TokenSequence bad = from_text(head + "FILL_PLACEHOLDER TRACK_END FILL_START TIME_SHIFT:48 FILL_END");
  bad.kind = SequenceKind::MultiTrack;
  EXPECT_FALSE(validate(bad).empty());
}

TEST(Validate, DecodeReportsFirstViolationPosition) {
  try {
    decode(from_text("PIECE_START TRACK_START INSTRUMENT:0 DENSITY_LEVEL:0 BAR_START TIME_SHIFT:47 BAR_END "
                     "TRACK_END"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidSequence);
    EXPECT_NE(std::string(e.what()).find("position 6"), std::string::npos) << e.what();
  }
}

TEST(Serialization, TextAndJsonRoundTrip) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 50; ++i) {
    auto p = random_piece(rng, 4, 4);
    auto d = random_levels(rng, p.tracks.size());
    auto seq = encode_barfill(p, random_selection(rng, p, 0.3), d);
    auto t = from_text(to_text(seq));
    EXPECT_EQ(t.ids, seq.ids);
    EXPECT_EQ(t.kind, seq.kind);
    auto j = sequence_from_json(nlohmann::json::parse(to_json(seq).dump()));
    EXPECT_EQ(j.ids, seq.ids);
    EXPECT_EQ(j.kind, seq.kind);
  }
  EXPECT_THROW(from_text("PIECE_START WHAT"), Error);
  EXPECT_THROW(sequence_from_json({{"version", 2}, {"ids", {0}}}), Error);
  EXPECT_THROW(sequence_from_json({{"version", 1}, {"ids", {451}}}), Error);
}
