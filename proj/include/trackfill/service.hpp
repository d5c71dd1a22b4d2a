#pragma once

// HTTP facade: upload MIDI, inspect pieces, run generation, download MIDI.
// Records are immutable and content-addressed; every generation stores a new
// record. The predictor is shared read-only between request threads.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <mutex>
#include <json.hpp>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>

#include "trackfill/codec.hpp"
#include "trackfill/density.hpp"
#include "trackfill/error.hpp"
#include "trackfill/generation.hpp"
#include "trackfill/midi.hpp"
#include "trackfill/pianoroll.hpp"
#include "trackfill/predictor.hpp"
#include "trackfill/vocab.hpp"

namespace trackfill {

struct PieceRecord {
  std::string id;
  DecodedPiece piece;
  std::string created_at;
  std::string source;
  std::string parent;  // empty for uploads

  nlohmann::json to_json() const {
    return {{"id", id},
            {"created_at", created_at},
            {"source", source},
            {"parent", parent.empty() ? nlohmann::json(nullptr) : nlohmann::json(parent)},
            {"pianoroll", to_pianoroll(piece)}};
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Id = FNV-1a of the serialized pianoroll, so equal content shares a record.
/// Records live in memory and as <dir>/<id>.json.
class PieceStore {
 public:
  explicit PieceStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  static std::string content_id(const DecodedPiece& piece) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(vocab::fnv1a(to_pianoroll(piece).dump())));
    return buf;
  }

  /// Returns the stored record; an existing record with the same id is kept as is.
  PieceRecord put(const DecodedPiece& piece, std::string source, std::string parent = {}) {
    PieceRecord rec{content_id(piece), piece, utc_timestamp(), std::move(source), std::move(parent)};
    if (auto existing = get(rec.id)) return *existing;
    std::unique_lock lock(mutex_);
    if (auto it = records_.find(rec.id); it != records_.end()) return it->second;
    const auto path = dir_ / (rec.id + ".json");
    if (!std::filesystem::exists(path)) {
      const auto tmp = dir_ / (rec.id + ".json.tmp");
      {
        std::ofstream out(tmp);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out << rec.to_json().dump();
      }
      std::filesystem::rename(tmp, path);
    }
    records_.emplace(rec.id, rec);
    return rec;
  }

  std::optional<PieceRecord> get(const std::string& id) {
    {
      std::shared_lock lock(mutex_);
      if (auto it = records_.find(id); it != records_.end()) return it->second;
    }
    if (!valid_id(id)) return std::nullopt;
    const auto path = dir_ / (id + ".json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    const auto& parent = j.value("parent", nlohmann::json());
    PieceRecord rec{id, pianoroll_from_json(j.at("pianoroll")), j.value("created_at", ""), j.value("source", ""),
                    parent.is_string() ? parent.get<std::string>() : std::string()};
    std::unique_lock lock(mutex_);
    return records_.emplace(id, std::move(rec)).first->second;
  }

 private:
  static bool valid_id(const std::string& id) {
    return id.size() == 16 && id.find_first_not_of("0123456789abcdef") == std::string::npos;
  }

  std::filesystem::path dir_;
  std::shared_mutex mutex_;
  std::unordered_map<std::string, PieceRecord> records_;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string model_path;
  std::string density_path;
  std::string data_dir = "trackfill-data";

  /// TRACKFILL_HOST, TRACKFILL_PORT, TRACKFILL_MODEL, TRACKFILL_DENSITY and
  /// TRACKFILL_DATA_DIR replace the corresponding field when set.
  void apply_env() {
    auto env = [](const char* name) -> std::optional<std::string> {
      const char* v = std::getenv(name);
      return v && *v ? std::optional<std::string>(v) : std::nullopt;
    };
    if (auto v = env("TRACKFILL_HOST")) host = *v;
    if (auto v = env("TRACKFILL_PORT")) {
      try {
        port = std::stoi(*v);
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "TRACKFILL_PORT is not a number");
      }
    }
    if (auto v = env("TRACKFILL_MODEL")) model_path = *v;
    if (auto v = env("TRACKFILL_DENSITY")) density_path = *v;
    if (auto v = env("TRACKFILL_DATA_DIR")) data_dir = *v;
  }
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::NonQuadrupleMeter:
    case ErrorCode::NoQuadrupleContent:
    case ErrorCode::EmptyPiece:
    case ErrorCode::ContextTooLong: return 422;
    case ErrorCode::StepBudgetExceeded: return 504;
    case ErrorCode::AllMasked:
    case ErrorCode::Diverged:
    case ErrorCode::Io: return 500;
    default: return 400;
  }
}

class Service {
 public:
  Service(ServiceConfig cfg, std::shared_ptr<const SequencePredictor> predictor = nullptr,
          std::optional<DensityTable> table = std::nullopt)
      : cfg_(std::move(cfg)), predictor_(std::move(predictor)), table_(std::move(table)), store_(cfg_.data_dir) {
    routes();
  }

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  PieceStore& store() { return store_; }
  httplib::Server& http() { return server_; }

  /// Binds and serves on a background thread; returns the bound port.
  int start() {
    int port = bind();
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  /// Binds and serves on the calling thread until stop().
  void run() {
    bind();
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  int bind() {
    if (cfg_.port == 0) return server_.bind_to_any_port(cfg_.host);
    if (!server_.bind_to_port(cfg_.host, cfg_.port)) {
      throw Error(ErrorCode::Io, "cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    }
    return cfg_.port;
  }

  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, std::string code, std::string message) {
    send_json(res, status, {{"error", {{"code", std::move(code)}, {"message", std::move(message)}}}});
  }

  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), std::string(to_string(e.code())), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  }

  void routes() {
    // Unrouted paths and other transport-level errors still answer in the error shape.
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      send_error(res, res.status, res.status == 404 ? "NotFound" : "HttpError", httplib::status_message(res.status));
    });

    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json model = predictor_ ? nlohmann::json(predictor_->name()) : nlohmann::json(nullptr);
      send_json(res, 200,
                {{"status", predictor_ ? "ok" : "degraded"},
                 {"model", model},
                 {"density_table", table_.has_value()},
                 {"vocab_hash", vocab::hash_hex()}});
    });

    server_.Post("/pieces", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::string body = req.body;
        std::string source = "upload.mid";
        if (req.is_multipart_form_data()) {
          if (req.files.empty()) throw Error(ErrorCode::MalformedFile, "multipart body has no file part");
          const auto& part = req.has_file("file") ? req.get_file_value("file") : req.files.begin()->second;
          body = part.content;
          if (!part.filename.empty()) source = part.filename;
        }
        if (body.empty()) throw Error(ErrorCode::MalformedFile, "empty body");
        auto bytes = std::span(reinterpret_cast<const std::uint8_t*>(body.data()), body.size());
        DecodedPiece d;
        d.piece = midi::piece_from_midi(bytes);
        d.density_levels = table_ ? density_levels(d.piece, *table_) : std::vector<int>(d.piece.tracks.size(), 0);
        auto rec = store_.put(d, source);
        send_json(res, 200, {{"id", rec.id}, {"pianoroll", to_pianoroll(rec.piece)}});
      });
    });

    server_.Get(R"(/pieces/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto rec = store_.get(req.matches[1]);
        if (!rec) return send_error(res, 404, "NotFound", "unknown piece id");
        send_json(res, 200, rec->to_json());
      });
    });

    server_.Get(R"(/pieces/([^/]+)/midi)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto rec = store_.get(req.matches[1]);
        if (!rec) return send_error(res, 404, "NotFound", "unknown piece id");
        auto bytes = midi::piece_to_midi(rec->piece.piece);
        res.status = 200;
        res.set_header("Content-Disposition", "attachment; filename=\"" + rec->id + ".mid\"");
        res.set_content(std::string(bytes.begin(), bytes.end()), "audio/midi");
      });
    });

    server_.Post(R"(/pieces/([^/]+)/generate)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto rec = store_.get(req.matches[1]);
        if (!rec) return send_error(res, 404, "NotFound", "unknown piece id");
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded()) throw Error(ErrorCode::InvalidRequest, "body is not JSON");
        auto wire = generation_request_from_json(body);
        if (!predictor_) return send_error(res, 409, "ModelNotLoaded", "no model is loaded");
        auto& gen = wire.request;
        gen.base = rec->piece.piece;
        gen.base_densities = rec->piece.density_levels;
        gen.sampler.seed = wire.seed ? *wire.seed : fresh_seed();
        auto result = generate(*predictor_, gen);
        auto stored = store_.put(result.decoded, rec->source, rec->id);
        send_json(res, 200,
                  {{"id", stored.id}, {"seed", gen.sampler.seed}, {"pianoroll", to_pianoroll(stored.piece)}});
      });
    });
  }

  std::uint64_t fresh_seed() {
    std::lock_guard lock(seed_mutex_);
    return seed_rng_() >> 11;  // fits a JSON double exactly
  }

  ServiceConfig cfg_;
  std::shared_ptr<const SequencePredictor> predictor_;
  std::optional<DensityTable> table_;
  PieceStore store_;
  httplib::Server server_;
  std::thread thread_;
  std::mutex seed_mutex_;
  std::mt19937_64 seed_rng_{std::random_device{}()};
};

}  // namespace trackfill
