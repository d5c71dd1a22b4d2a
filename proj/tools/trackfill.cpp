// Command-line entry points for every pipeline stage.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error
// (unreadable or invalid MIDI, tokens, selections, files), 3 model error
// (checkpoint loading, divergence, context or step budget, empty mask).

#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "trackfill/codec.hpp"
#include "trackfill/corpus.hpp"
#include "trackfill/dataset.hpp"
#include "trackfill/density.hpp"
#include "trackfill/generation.hpp"
#include "trackfill/midi.hpp"
#include "trackfill/ngram.hpp"
#include "trackfill/pianoroll.hpp"
#include "trackfill/service.hpp"
#include "trackfill/train.hpp"
#include "trackfill/transformer.hpp"

namespace tf = trackfill;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

/// Raised for failures that belong to the model side regardless of code.
struct ModelFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code(tf::ErrorCode code) {
  using tf::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidRequest:
    case ErrorCode::InvalidConfig: return kUsage;
    case ErrorCode::ContextTooLong:
    case ErrorCode::Diverged:
    case ErrorCode::StepBudgetExceeded:
    case ErrorCode::AllMasked: return kModel;
    default: return kData;
  }
}

std::string slurp(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tf::Error(tf::ErrorCode::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tf::Error(tf::ErrorCode::Io, "cannot write " + path);
  out << text;
}

std::optional<tf::DensityTable> maybe_table(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return tf::load_density_table(path);
}

std::vector<int> levels_for(const tf::Piece& piece, const std::optional<tf::DensityTable>& table) {
  return table ? tf::density_levels(piece, *table) : std::vector<int>(piece.tracks.size(), 0);
}

int parse_instrument(const std::string& s) {
  if (s == "drum" || s == "DRUM" || s == "drums") return tf::kDrumInstrument;
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used == s.size() && tf::is_valid_instrument(v)) return v;
  } catch (const std::exception&) {
  }
  throw tf::Error(tf::ErrorCode::InvalidRequest, "instrument must be 0-128 or 'drum', got '" + s + "'");
}

tf::BarSelection parse_selection(const std::vector<std::string>& cells) {
  tf::BarSelection sel;
  for (const auto& c : cells) {
    auto colon = c.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(c);
      std::size_t a = 0, b = 0;
      int t = std::stoi(c.substr(0, colon), &a);
      int bar = std::stoi(c.substr(colon + 1), &b);
      if (a != colon || b != c.size() - colon - 1) throw std::invalid_argument(c);
      sel.insert({t, bar});
    } catch (const std::exception&) {
      throw tf::Error(tf::ErrorCode::InvalidRequest, "selection cells are track:bar pairs, got '" + c + "'");
    }
  }
  return sel;
}

struct PredictorArgs {
  std::string model;
  std::string ngram;
  int order = 4;
  bool uniform = false;
};

void add_predictor_flags(CLI::App* cmd, PredictorArgs& a) {
  auto* m = cmd->add_option("--model", a.model, "Transformer checkpoint");
  auto* n = cmd->add_option("--ngram", a.ngram, "Dataset file to fit an n-gram predictor on");
  cmd->add_option("--order", a.order, "n-gram order")->check(CLI::PositiveNumber);
  auto* u = cmd->add_flag("--uniform", a.uniform, "Uniform-random predictor");
  m->excludes(n)->excludes(u);
  n->excludes(u);
}

std::shared_ptr<const tf::SequencePredictor> load_predictor(const PredictorArgs& a, bool required) {
  try {
    if (!a.model.empty()) return std::make_shared<tf::Transformer<float>>(tf::load_checkpoint<float>(a.model));
    if (!a.ngram.empty()) {
      auto ds = tf::load_dataset(a.ngram);
      return std::make_shared<tf::NGramModel>(tf::NGramModel::fit(ds.sequences, a.order));
    }
  } catch (const tf::Error& e) {
    throw ModelFailure(e.what());
  }
  if (a.uniform) return std::make_shared<tf::UniformPredictor>();
  if (required) throw tf::Error(tf::ErrorCode::InvalidRequest, "one of --model, --ngram or --uniform is required");
  return nullptr;
}

// ---------------------------------------------------------------------------

struct TokenizeArgs {
  std::string input;
  std::string output;
  std::string density;
  bool json = false;
};

int run_tokenize(const TokenizeArgs& a) {
  auto bytes = slurp(a.input);
  auto piece = tf::midi::piece_from_midi(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  auto seq = tf::encode_multitrack(piece, levels_for(piece, maybe_table(a.density)));
  emit(a.output, a.json ? tf::to_json(seq).dump() + "\n" : tf::to_text(seq));
  return kOk;
}

struct DetokenizeArgs {
  std::string input = "-";
  std::string output;
  bool pianoroll = false;
};

int run_detokenize(const DetokenizeArgs& a) {
  auto text = slurp(a.input);
  auto first = text.find_first_not_of(" \t\r\n");
  tf::TokenSequence seq;
  if (first != std::string::npos && text[first] == '{') {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw tf::Error(tf::ErrorCode::InvalidSequence, "input is not valid JSON");
    seq = tf::sequence_from_json(j);
  } else {
    seq = tf::from_text(text);
  }
  auto decoded = tf::decode(seq);
  if (a.pianoroll) {
    emit(a.output, tf::to_pianoroll(decoded).dump() + "\n");
    return kOk;
  }
  if (a.output.empty()) throw tf::Error(tf::ErrorCode::InvalidRequest, "detokenize needs -o FILE or --pianoroll");
  tf::write_file(a.output, tf::midi::piece_to_midi(decoded.piece));
  return kOk;
}

// ---------------------------------------------------------------------------

struct CorpusArgs {
  std::vector<std::string> inputs;
  std::string density;
  int bars = 4;
  int max_tracks = 0;  // 0: 12 for 4 bars, 6 for 8 or more
  std::size_t max_len = 2048;
  std::string mode = "multitrack";
  double mask_rate = 0.2;
  std::uint64_t seed = 0;
  int windows = 1;
  unsigned shards = 1;

  tf::BuildConfig config() const {
    auto cfg = tf::BuildConfig::for_bars(bars);
    if (max_tracks > 0) cfg.max_tracks = max_tracks;
    cfg.max_len = max_len;
    if (mode == "multitrack") {
      cfg.mode = tf::SequenceKind::MultiTrack;
    } else if (mode == "barfill") {
      cfg.mode = tf::SequenceKind::BarFill;
    } else {
      throw tf::Error(tf::ErrorCode::InvalidConfig, "mode must be multitrack or barfill");
    }
    cfg.mask_rate = mask_rate;
    cfg.seed = seed;
    cfg.windows_per_piece = windows;
    cfg.check();
    return cfg;
  }
};

void add_corpus_flags(CLI::App* cmd, CorpusArgs& a) {
  cmd->add_option("inputs", a.inputs, "MIDI files or directories")->required();
  cmd->add_option("--density", a.density, "density.json (levels default to 0 without it)");
  cmd->add_option("--bars", a.bars, "Window length in bars")->check(CLI::PositiveNumber);
  cmd->add_option("--max-tracks", a.max_tracks, "Tracks per window (default 12 for 4 bars, 6 for 8)");
  cmd->add_option("--max-len", a.max_len, "Longest kept sequence in tokens");
  cmd->add_option("--mode", a.mode, "multitrack or barfill")->check(CLI::IsMember({"multitrack", "barfill"}));
  cmd->add_option("--mask-rate", a.mask_rate, "Per-bar masking probability for barfill")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seed", a.seed, "Random seed");
  cmd->add_option("--windows", a.windows, "Windows drawn per piece")->check(CLI::PositiveNumber);
  cmd->add_option("--shards", a.shards, "Worker threads");
}

tf::LoadedCorpus load_reporting(const std::vector<std::string>& inputs) {
  auto corpus = tf::load_corpus(inputs);
  for (const auto& [path, why] : corpus.skipped) std::cerr << "skipped " << path.string() << ": " << why << "\n";
  if (corpus.pieces.empty()) throw tf::Error(tf::ErrorCode::NoQuadrupleContent, "no usable MIDI files in the input");
  return corpus;
}

/// Token lengths of every window a build with `cfg` would draw, ignoring max_len.
std::vector<std::size_t> window_lengths(const std::vector<tf::Piece>& pieces, tf::BuildConfig cfg,
                                        const tf::DensityTable& table, unsigned shards, std::size_t& too_short) {
  cfg.max_len = std::numeric_limits<std::uint32_t>::max();
  tf::DatasetStats st;
  auto ds = tf::build_dataset(pieces, cfg, table, st, shards);
  too_short = st.too_short;
  std::vector<std::size_t> lengths;
  for (const auto& s : ds.sequences) lengths.push_back(s.size());
  return lengths;
}

int run_stats(const CorpusArgs& a, const std::string& json_path) {
  const auto cfg = a.config();
  auto corpus = load_reporting(a.inputs);
  const auto table = maybe_table(a.density).value_or(tf::DensityTable{});

  std::size_t too_short = 0;
  auto lengths = window_lengths(corpus.pieces, cfg, table, a.shards, too_short);
  const std::size_t kept = static_cast<std::size_t>(
      std::count_if(lengths.begin(), lengths.end(), [&](std::size_t n) { return n <= cfg.max_len; }));
  const double fraction = lengths.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(lengths.size());

  constexpr std::size_t kBin = 256;
  std::map<std::size_t, std::size_t> histogram;
  for (auto n : lengths) ++histogram[n / kBin];

  nlohmann::json report{{"files", corpus.pieces.size() + corpus.skipped.size()},
                        {"pieces", corpus.pieces.size()},
                        {"skipped", corpus.skipped.size()},
                        {"n_bars", cfg.n_bars},
                        {"max_tracks", cfg.max_tracks},
                        {"max_len", cfg.max_len},
                        {"windows", lengths.size()},
                        {"too_short", too_short},
                        {"kept", kept},
                        {"kept_fraction", fraction}};
  nlohmann::json hist = nlohmann::json::array();

  std::ostringstream out;
  out << std::fixed;
  out << "corpus: " << report["files"] << " files, " << corpus.pieces.size() << " pieces, " << corpus.skipped.size()
      << " skipped\n";
  out << "windows: " << cfg.n_bars << " bars, up to " << cfg.max_tracks << " tracks, seed " << cfg.seed << ", "
      << lengths.size() << " drawn, " << too_short << " pieces too short\n";
  out << "token length histogram (bin width " << kBin << "):\n";
  for (auto [bin, count] : histogram) {
    out << "  [" << bin * kBin << ", " << (bin + 1) * kBin << "): " << count << "\n";
    hist.push_back({{"lo", bin * kBin}, {"hi", (bin + 1) * kBin}, {"count", count}});
  }
  out << std::setprecision(4) << "kept fraction (<= " << cfg.max_len << " tokens): " << fraction << " (" << kept << "/"
      << lengths.size() << ")\n";
  report["histogram"] = hist;

  nlohmann::json segments = nlohmann::json::array();
  for (int bars : {4, 8, 16}) {
    auto seg_cfg = cfg;
    seg_cfg.n_bars = bars;
    seg_cfg.max_tracks = 10;
    seg_cfg.mode = tf::SequenceKind::MultiTrack;
    std::size_t short_count = 0;
    auto seg = window_lengths(corpus.pieces, seg_cfg, table, a.shards, short_count);
    auto ok = std::count_if(seg.begin(), seg.end(), [](std::size_t n) { return n <= 2048; });
    double pct = seg.empty() ? 0.0 : 100.0 * static_cast<double>(ok) / static_cast<double>(seg.size());
    out << std::setprecision(1) << "segments of " << bars << " bars, up to 10 tracks, <= 2048 tokens: ";
    if (seg.empty()) {
      out << "n/a (no piece has " << bars << " bars)\n";
    } else {
      out << pct << "% (" << ok << "/" << seg.size() << ")\n";
    }
    segments.push_back({{"n_bars", bars}, {"max_tracks", 10}, {"windows", seg.size()}, {"within_2048", ok}});
  }
  report["segments"] = segments;
  const std::string note =
      "The Lakh MIDI Dataset reference figures (99.8% / 86.8% / 38.8% of 10-track 4/8/16-bar segments within 2048 "
      "tokens) are not asserted; the numbers above describe this corpus only.";
  report["note"] = note;
  out << "note: " << note << "\n";
  std::cout << out.str();
  if (!json_path.empty()) emit(json_path, report.dump(2) + "\n");
  return kOk;
}

int run_density_build(const std::vector<std::string>& inputs, const std::string& output) {
  auto corpus = load_reporting(inputs);
  tf::OnsetCounts counts;
  for (const auto& p : corpus.pieces) tf::accumulate(p, counts);
  tf::save_density_table(tf::build_table(counts), output);
  std::cerr << "density table from " << corpus.pieces.size() << " pieces written to " << output << "\n";
  return kOk;
}

int run_dataset_build(const CorpusArgs& a, const std::string& output, const std::string& stats_path) {
  const auto cfg = a.config();
  auto corpus = load_reporting(a.inputs);
  const auto table = maybe_table(a.density).value_or(tf::DensityTable{});
  tf::DatasetStats stats;
  auto ds = tf::build_dataset(corpus.pieces, cfg, table, stats, a.shards);
  tf::save_dataset(ds, output);
  auto j = tf::to_json(stats);
  if (!stats_path.empty()) emit(stats_path, j.dump(2) + "\n");
  std::cout << std::fixed << std::setprecision(4) << "kept fraction (<= " << cfg.max_len
            << " tokens): " << stats.kept_fraction() << " (" << stats.kept << "/" << stats.windows << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> data;
  std::string config;
  std::string output = "model.ckpt";
  std::string loss_csv = "loss.csv";
  std::optional<int> layers, heads, embed, window, ff, batch, steps, eval_every;
  std::optional<double> lr, target_loss;
  std::optional<std::uint64_t> seed;
  int log_every = 50;
};

int run_train(const TrainArgs& a) {
  tf::ModelConfig cfg;
  if (!a.config.empty()) {
    auto j = nlohmann::json::parse(slurp(a.config), nullptr, false);
    if (j.is_discarded()) throw tf::Error(tf::ErrorCode::InvalidConfig, a.config + " is not JSON");
    cfg = tf::model_config_from_json(j);
  }
  if (a.layers) cfg.layers = *a.layers;
  if (a.heads) cfg.heads = *a.heads;
  if (a.embed) cfg.embed_dim = *a.embed;
  if (a.window) cfg.window = *a.window;
  if (a.ff) cfg.ff_dim = *a.ff;
  if (a.batch) cfg.batch = *a.batch;
  if (a.steps) cfg.steps = *a.steps;
  if (a.eval_every) cfg.eval_every = *a.eval_every;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.target_loss) cfg.target_loss = *a.target_loss;
  if (a.seed) cfg.seed = *a.seed;
  cfg.check();

  std::vector<std::vector<tf::TokenId>> data;
  std::size_t dropped = 0;
  for (const auto& path : a.data) {
    for (auto& s : tf::load_dataset(path).sequences) {
      if (s.size() > static_cast<std::size_t>(cfg.window) + 1) {
        ++dropped;
        continue;
      }
      data.push_back(std::move(s));
    }
  }
  if (dropped) std::cerr << "dropped " << dropped << " sequences longer than the window\n";

  tf::Transformer<float> model(cfg);
  auto log = tf::train(model, data, [&](int step, double loss) {
    if (a.log_every > 0 && (step % a.log_every == 0 || step == 1)) {
      std::cerr << "step " << step << " loss " << std::fixed << std::setprecision(4) << loss << "\n";
    }
  });
  tf::save_checkpoint(model, a.output);
  if (!a.loss_csv.empty()) tf::write_loss_csv(log, a.loss_csv);
  std::cout << "trained " << log.steps_run << " steps, final loss " << std::fixed << std::setprecision(4)
            << (log.step_loss.empty() ? 0.0 : log.step_loss.back()) << ", checkpoint " << a.output << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string input;
  std::string output = "generated.mid";
  std::string pianoroll;
  std::string density;
  PredictorArgs predictor;
  std::string mode = "track";
  int n = 1;
  std::vector<std::string> instruments;
  std::optional<int> level;
  std::vector<std::string> select;
  int rounds = 1;
  int max_bars = 4;
  double temperature = 1.0;
  double top_p = 1.0;
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
  auto predictor = load_predictor(a.predictor, true);
  const auto table = maybe_table(a.density);
  tf::Piece base;
  if (!a.input.empty()) {
    auto bytes = slurp(a.input);
    base = tf::midi::piece_from_midi(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  }
  tf::SamplerParams sampler{a.temperature, a.top_p, a.max_steps, a.seed};
  sampler.check();

  tf::DecodedPiece result;
  if (a.mode == "resample") {
    if (!a.instruments.empty() || a.level || !a.select.empty()) {
      throw tf::Error(tf::ErrorCode::InvalidRequest, "resample keeps instruments and densities; drop those flags");
    }
    result = tf::resample_iteratively(*predictor, base, levels_for(base, table), a.rounds, sampler).decoded;
  } else {
    tf::GenerationRequest req;
    req.base = base;
    req.base_densities = levels_for(base, table);
    req.sampler = sampler;
    req.max_bars = a.max_bars;
    if (a.mode == "track") {
      req.mode = tf::GenerationMode::TrackInpaint;
      req.n_new_tracks = a.n;
      if (!a.select.empty()) throw tf::Error(tf::ErrorCode::InvalidRequest, "--select is for --mode bar");
      if (!a.instruments.empty() || a.level) {
        tf::TrackConstraint c;
        for (const auto& s : a.instruments) c.instruments.push_back(parse_instrument(s));
        if (c.instruments.empty()) {
          for (int i = 0; i < tf::kNumInstruments; ++i) c.instruments.push_back(i);
        }
        c.density = a.level;
        req.tracks.assign(static_cast<std::size_t>(std::max(a.n, 0)), c);
      }
    } else {
      req.mode = tf::GenerationMode::BarInpaint;
      if (!a.instruments.empty() || a.level) {
        throw tf::Error(tf::ErrorCode::InvalidRequest, "--instruments and --level are for --mode track");
      }
      req.selection = parse_selection(a.select);
    }
    result = tf::generate(*predictor, req).decoded;
  }
  tf::write_file(a.output, tf::midi::piece_to_midi(result.piece));
  if (!a.pianoroll.empty()) emit(a.pianoroll, tf::to_pianoroll(result).dump() + "\n");
  std::cout << "wrote " << a.output << " (" << result.piece.tracks.size() << " tracks, " << result.piece.n_bars
            << " bars)\n";
  return kOk;
}

// ---------------------------------------------------------------------------

tf::Service* g_service = nullptr;

int run_serve(tf::ServiceConfig cfg, const PredictorArgs& p) {
  std::shared_ptr<const tf::SequencePredictor> predictor;
  PredictorArgs args = p;
  if (args.model.empty()) args.model = cfg.model_path;
  predictor = load_predictor(args, false);
  tf::Service service(cfg, predictor, maybe_table(cfg.density_path));
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->http().stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->http().stop();
  });
  std::cerr << "serving on " << cfg.host << ":" << cfg.port << " (model: " << (predictor ? predictor->name() : "none")
            << ", data: " << cfg.data_dir << ")\n";
  service.run();
  g_service = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-track music tokenization, training and constrained generation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "trackfill 1.0 (vocabulary " + tf::vocab::hash_hex() + ")");

  TokenizeArgs tok;
  auto* c_tok = app.add_subcommand("tokenize", "MIDI file to MultiTrack tokens");
  c_tok->add_option("input", tok.input, "MIDI file ('-' for stdin)")->required();
  c_tok->add_option("-o,--output", tok.output, "Output file (default stdout)");
  c_tok->add_option("--density", tok.density, "density.json (levels default to 0 without it)");
  c_tok->add_flag("--json", tok.json, "Emit the JSON form instead of mnemonics");

  DetokenizeArgs detok;
  auto* c_detok = app.add_subcommand("detokenize", "Tokens (text or JSON) to MIDI");
  c_detok->add_option("input", detok.input, "Token file ('-' or omitted for stdin)");
  c_detok->add_option("-o,--output", detok.output, "Output MIDI file (pianoroll JSON with --pianoroll)");
  c_detok->add_flag("--pianoroll", detok.pianoroll, "Emit pianoroll JSON instead of MIDI");

  CorpusArgs stats_args;
  std::string stats_json;
  auto* c_stats = app.add_subcommand("stats", "Token-length histogram and the share of windows within max-len");
  add_corpus_flags(c_stats, stats_args);
  c_stats->add_option("--json", stats_json, "Also write the report as JSON");

  std::vector<std::string> density_inputs;
  std::string density_out = "density.json";
  auto* c_density = app.add_subcommand("density-build", "Per-instrument density boundaries from a corpus");
  c_density->add_option("inputs", density_inputs, "MIDI files or directories")->required();
  c_density->add_option("-o,--output", density_out, "Output density.json");

  CorpusArgs ds_args;
  std::string ds_out = "dataset.bin";
  std::string ds_stats = "stats.json";
  auto* c_ds = app.add_subcommand("dataset-build", "Windowed training sequences from a corpus");
  add_corpus_flags(c_ds, ds_args);
  c_ds->add_option("-o,--output", ds_out, "Output dataset file");
  c_ds->add_option("--stats", ds_stats, "Output stats.json");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the transformer on dataset files");
  c_train->add_option("data", tr.data, "Dataset files")->required();
  c_train->add_option("--config", tr.config, "Model config JSON; flags below override it");
  c_train->add_option("-o,--output", tr.output, "Checkpoint path");
  c_train->add_option("--loss-csv", tr.loss_csv, "Per-step loss CSV (empty to skip)");
  c_train->add_option("--layers", tr.layers, "Transformer blocks");
  c_train->add_option("--heads", tr.heads, "Attention heads");
  c_train->add_option("--embed", tr.embed, "Embedding width");
  c_train->add_option("--window", tr.window, "Context window");
  c_train->add_option("--ff", tr.ff, "Feed-forward width");
  c_train->add_option("--lr", tr.lr, "Adam learning rate");
  c_train->add_option("--batch", tr.batch, "Sequences per step");
  c_train->add_option("--steps", tr.steps, "Optimizer steps");
  c_train->add_option("--target-loss", tr.target_loss, "Stop once the full-data loss is below this");
  c_train->add_option("--eval-every", tr.eval_every, "Steps between full-data evaluations");
  c_train->add_option("--seed", tr.seed, "Initialization and shuffling seed");
  c_train->add_option("--log-every", tr.log_every, "Steps between progress lines (0 for none)");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Generate tracks or bars for a MIDI file");
  c_gen->add_option("input", gen.input, "Base MIDI file (omit for generation from scratch)");
  c_gen->add_option("-o,--output", gen.output, "Output MIDI file");
  c_gen->add_option("--pianoroll", gen.pianoroll, "Also write the result as pianoroll JSON");
  c_gen->add_option("--density", gen.density, "density.json for the base tracks' levels");
  add_predictor_flags(c_gen, gen.predictor);
  c_gen->add_option("--mode", gen.mode, "track, bar or resample")->check(CLI::IsMember({"track", "bar", "resample"}));
  c_gen->add_option("--n", gen.n, "New tracks (track mode)")->check(CLI::PositiveNumber);
  c_gen->add_option("--instruments", gen.instruments, "Allowed instruments for new tracks (0-127, drum)")
      ->delimiter(',');
  c_gen->add_option("--level", gen.level, "Density level 0-9 for new tracks")->check(CLI::Range(0, 9));
  c_gen->add_option("--select", gen.select, "Bars to regenerate as track:bar (bar mode)")->delimiter(',');
  c_gen->add_option("--rounds", gen.rounds, "Resampling rounds (resample mode)")->check(CLI::NonNegativeNumber);
  c_gen->add_option("--max-bars", gen.max_bars, "Bar count when generating from scratch")->check(CLI::PositiveNumber);
  c_gen->add_option("--temperature", gen.temperature, "Sampling temperature");
  c_gen->add_option("--top-p", gen.top_p, "Nucleus mass");
  c_gen->add_option("--max-steps", gen.max_steps, "Token budget (default twice the window)");
  c_gen->add_option("--seed", gen.seed, "Sampling seed");

  tf::ServiceConfig svc;
  PredictorArgs svc_pred;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP service");
  c_serve->add_option("--host", svc.host, "Bind address [env TRACKFILL_HOST]");
  c_serve->add_option("--port", svc.port, "Port, 0 for any [env TRACKFILL_PORT]");
  c_serve->add_option("--model", svc.model_path, "Transformer checkpoint [env TRACKFILL_MODEL]");
  c_serve->add_option("--ngram", svc_pred.ngram, "Dataset file to fit an n-gram predictor on");
  c_serve->add_option("--order", svc_pred.order, "n-gram order")->check(CLI::PositiveNumber);
  c_serve->add_option("--density", svc.density_path, "density.json [env TRACKFILL_DENSITY]");
  c_serve->add_option("--data-dir", svc.data_dir, "Piece store directory [env TRACKFILL_DATA_DIR]");

  // Environment values fill in anything not given as a flag.
  tf::ServiceConfig env_cfg = svc;
  env_cfg.apply_env();
  svc = env_cfg;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*c_tok) return run_tokenize(tok);
    if (*c_detok) return run_detokenize(detok);
    if (*c_stats) return run_stats(stats_args, stats_json);
    if (*c_density) return run_density_build(density_inputs, density_out);
    if (*c_ds) return run_dataset_build(ds_args, ds_out, ds_stats);
    if (*c_train) return run_train(tr);
    if (*c_gen) return run_generate(gen);
    if (*c_serve) {
      if (!svc_pred.ngram.empty() && !svc.model_path.empty()) {
        throw tf::Error(tf::ErrorCode::InvalidRequest, "--model and --ngram are exclusive");
      }
      return run_serve(svc, svc_pred);
    }
  } catch (const ModelFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kModel;
  } catch (const tf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
