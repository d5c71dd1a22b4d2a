#pragma once

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "trackfill/predictor.hpp"
#include "trackfill/vocab.hpp"

namespace trackfill {

/// Count-based n-gram model with add-alpha smoothing. An unseen context backs
/// off to the next shorter one, ending at the unigram table.
class NGramModel : public SequencePredictor {
 public:
  static constexpr double kDefaultAlpha = 0.01;

  NGramModel(int order, double alpha = kDefaultAlpha) : order_(order), alpha_(alpha), tables_(order) {
    if (order < 1) throw Error(ErrorCode::InvalidConfig, "n-gram order must be at least 1");
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "smoothing alpha must be positive");
  }

  template <typename Sequences>
  static NGramModel fit(const Sequences& corpus, int order, double alpha = kDefaultAlpha) {
    NGramModel m(order, alpha);
    for (const auto& seq : corpus) m.add(std::span<const TokenId>(seq.data(), seq.size()));
    return m;
  }

  void add(std::span<const TokenId> seq) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      for (int k = 0; k < order_ && static_cast<std::size_t>(k) <= i; ++k) {
        std::vector<TokenId> ctx(seq.begin() + static_cast<std::ptrdiff_t>(i - k),
                                 seq.begin() + static_cast<std::ptrdiff_t>(i));
        auto& counts = tables_[k][ctx];
        ++counts.next[seq[i]];
        ++counts.total;
      }
    }
  }

  /// Length of the context actually used for `context` (0 = unigram, -1 = no data).
  int backoff_order(std::span<const TokenId> context) const {
    for (int k = std::min<int>(order_ - 1, static_cast<int>(context.size())); k >= 0; --k) {
      std::vector<TokenId> ctx(context.end() - k, context.end());
      if (tables_[k].contains(ctx)) return k;
    }
    return -1;
  }

  std::vector<double> probabilities(std::span<const TokenId> context) const {
    const double uniform = 1.0 / vocab::kSize;
    std::vector<double> p(vocab::kSize, uniform);
    int k = backoff_order(context);
    if (k < 0) return p;
    const auto& counts = tables_[k].at(std::vector<TokenId>(context.end() - k, context.end()));
    const double denom = static_cast<double>(counts.total) + alpha_ * vocab::kSize;
    for (auto& v : p) v = alpha_ / denom;
    for (auto [id, c] : counts.next) p[id] = (static_cast<double>(c) + alpha_) / denom;
    return p;
  }

  std::vector<float> predict(std::span<const TokenId> context) const override {
    auto p = probabilities(context);
    std::vector<float> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = static_cast<float>(std::log(p[i]));
    return out;
  }

  std::size_t window() const override { return std::numeric_limits<std::size_t>::max(); }
  std::string name() const override { return "ngram-" + std::to_string(order_); }
  int order() const { return order_; }

 private:
  struct Counts {
    std::map<TokenId, std::uint64_t> next;
    std::uint64_t total = 0;
  };

  int order_;
  double alpha_;
  std::vector<std::map<std::vector<TokenId>, Counts>> tables_;  // indexed by context length
};

}  // namespace trackfill
