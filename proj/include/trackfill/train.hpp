#pragma once

// Training loop (Adam, global-norm clipping), finite-difference gradient
// checking, and the single-file checkpoint format.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trackfill/error.hpp"
#include "trackfill/transformer.hpp"
#include "trackfill/vocab.hpp"

namespace trackfill {

template <typename T>
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, T(0)), v_(n, T(0)) {}

  void step(std::span<T> params, std::span<const T> grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      m_[i] = static_cast<T>(beta1_ * m_[i] + (1.0 - beta1_) * g);
      v_[i] = static_cast<T>(beta2_ * v_[i] + (1.0 - beta2_) * g * g);
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<T> m_, v_;
};

/// Scales `grads` so their L2 norm is at most `max_norm`; returns the norm
/// before clipping.
template <typename T>
double clip_grad_norm(std::span<T> grads, double max_norm) {
  double sq = 0.0;
  for (T g : grads) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (T& g : grads) g *= s;
  }
  return norm;
}

/// Mean per-token loss over every sequence.
template <typename T>
double mean_loss(const Transformer<T>& model, const std::vector<std::vector<TokenId>>& data) {
  double loss = 0.0;
  std::size_t tokens = 0;
  for (const auto& seq : data) {
    if (seq.size() < 2) continue;
    loss += model.sequence_loss(seq);
    tokens += seq.size() - 1;
  }
  return tokens ? loss / static_cast<double>(tokens) : 0.0;
}

struct TrainLog {
  std::vector<double> step_loss;  // mean loss per token of each step's batch
  std::vector<std::pair<int, double>> eval_loss;  // (step, full-dataset mean loss)
  int steps_run = 0;
};

/// Minimizes next-token cross-entropy. Each step draws `batch` sequences from
/// a reshuffled pass over the data (the whole dataset when batch >= size).
template <typename T>
TrainLog train(Transformer<T>& model, const std::vector<std::vector<TokenId>>& data,
               const std::function<void(int, double)>& on_step = {}) {
  const auto& cfg = model.config();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].size() > static_cast<std::size_t>(cfg.window) + 1) {
      throw Error(ErrorCode::ContextTooLong, "sequence " + std::to_string(i) + " longer than the window");
    }
    if (data[i].size() >= 2) usable.push_back(i);
  }
  if (usable.empty()) throw Error(ErrorCode::InvalidConfig, "training data has no sequence of length >= 2");

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam<T> opt(model.parameter_count(), cfg.learning_rate);
  std::vector<T> grads(model.parameter_count());
  std::vector<std::size_t> order = usable;
  std::size_t cursor = order.size();
  const bool full_batch = static_cast<std::size_t>(cfg.batch) >= usable.size();

  TrainLog log;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch;
    if (full_batch) {
      batch = usable;
    } else {
      while (batch.size() < static_cast<std::size_t>(cfg.batch)) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        batch.push_back(order[cursor++]);
      }
    }
    std::size_t tokens = 0;
    for (auto i : batch) tokens += data[i].size() - 1;
    std::fill(grads.begin(), grads.end(), T(0));
    double loss = 0.0;
    const T scale = T(1) / static_cast<T>(tokens);
    for (auto i : batch) loss += model.accumulate_gradient(data[i], grads, scale);
    loss /= static_cast<double>(tokens);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::Diverged, "loss is not finite at step " + std::to_string(step));
    }
    clip_grad_norm<T>(grads, cfg.grad_clip);
    opt.step(model.parameters(), grads);
    log.step_loss.push_back(loss);
    log.steps_run = step;
    if (on_step) on_step(step, loss);

    if (cfg.target_loss > 0.0 && cfg.eval_every > 0 && step % cfg.eval_every == 0) {
      double full = mean_loss(model, data);
      log.eval_loss.emplace_back(step, full);
      if (full < cfg.target_loss) break;
    }
  }
  return log;
}

inline void write_loss_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "step,loss\n";
  out.precision(9);
  for (std::size_t i = 0; i < log.step_loss.size(); ++i) out << i + 1 << ',' << log.step_loss[i] << '\n';
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckOptions {
  double step = 1e-4;
  int samples = 200;
  /// Every tensor contributes at least this many sampled entries.
  int min_per_tensor = 4;
  /// Denominator floor for the relative error, guarding near-zero gradients.
  double floor = 1e-6;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  int checked = 0;
};

/// Compares the analytic gradient of the summed batch loss with central
/// finite differences on a sample of parameters. `tamper` may modify the
/// analytic gradient before comparison (used for mutation testing).
template <typename T>
GradCheckReport grad_check(Transformer<T>& model, const std::vector<std::vector<TokenId>>& batch,
                           const GradCheckOptions& opt = {},
                           const std::function<void(const Transformer<T>&, std::span<T>)>& tamper = {}) {
  std::vector<T> grads(model.parameter_count(), T(0));
  for (const auto& seq : batch) model.accumulate_gradient(seq, grads, T(1));
  if (tamper) tamper(model, grads);

  auto total_loss = [&] {
    double l = 0.0;
    for (const auto& seq : batch) l += model.sequence_loss(seq);
    return l;
  };

  std::mt19937_64 rng(opt.seed);
  std::vector<std::pair<std::size_t, std::string>> picks;
  const auto& tensors = model.tensors();
  const double share = static_cast<double>(opt.samples) / static_cast<double>(model.parameter_count());
  for (const auto& t : tensors) {
    std::size_t want = std::max<std::size_t>(static_cast<std::size_t>(opt.min_per_tensor),
                                             static_cast<std::size_t>(std::ceil(share * t.size())));
    want = std::min(want, t.size());
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < want; ++i) picks.emplace_back(t.offset + idx[i], t.name);
  }

  GradCheckReport report;
  auto params = model.parameters();
  for (const auto& [i, name] : picks) {
    const T saved = params[i];
    params[i] = saved + static_cast<T>(opt.step);
    const double up = total_loss();
    params[i] = saved - static_cast<T>(opt.step);
    const double down = total_loss();
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * opt.step);
    const double analytic = grads[i];
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), opt.floor);
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_tensor = name;
    }
    ++report.checked;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoint
//
//   char[4]  magic "TFCK"
//   u32      header length H (little-endian)
//   H bytes  JSON header {version, vocab_hash, config, tensors: [{name, rows, cols}]}
//   float32  all parameters, little-endian, in header tensor order

inline constexpr int kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const Transformer<T>& model, const std::string& path) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : model.tensors()) tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  nlohmann::json header{{"version", kCheckpointVersion},
                        {"vocab_hash", vocab::hash_hex()},
                        {"config", to_json(model.config())},
                        {"tensors", std::move(tensors)}};
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write("TFCK", 4);
  const auto len = static_cast<std::uint32_t>(h.size());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xFF));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (T v : model.parameters()) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

template <typename T = float>
Transformer<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "TFCK", 4) != 0) {
    throw Error(ErrorCode::Io, path + " is not a checkpoint");
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  if (8 + static_cast<std::size_t>(len) > bytes.size()) throw Error(ErrorCode::Io, "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("version", 0) != kCheckpointVersion) throw Error(ErrorCode::Io, "unsupported checkpoint version");
  if (header.value("vocab_hash", std::string()) != vocab::hash_hex()) {
    throw Error(ErrorCode::Io, "checkpoint vocabulary does not match");
  }
  Transformer<T> model(model_config_from_json(header.at("config")));
  const auto& expect = header.at("tensors");
  if (expect.size() != model.tensors().size()) throw Error(ErrorCode::Io, "checkpoint tensor table mismatch");
  for (std::size_t i = 0; i < expect.size(); ++i) {
    const auto& t = model.tensors()[i];
    if (expect[i].at("name") != t.name || expect[i].at("rows") != t.rows || expect[i].at("cols") != t.cols) {
      throw Error(ErrorCode::Io, "checkpoint tensor " + t.name + " mismatch");
    }
  }
  auto params = model.parameters();
  const std::size_t base = 8 + len;
  if (bytes.size() != base + 4 * params.size()) throw Error(ErrorCode::Io, "checkpoint payload size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[base + 4 * i + b])) << (8 * b);
    }
    float f;
    std::memcpy(&f, &bits, 4);
    params[i] = static_cast<T>(f);
  }
  return model;
}

}  // namespace trackfill
