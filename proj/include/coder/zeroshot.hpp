#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "coder/coder_core.hpp"
#include "coder/embedding_store.hpp"

namespace coder {

struct RerankConfig {
  std::size_t top_k = 5;
  // Rerank only when top1 - top2 of the stage-1 logits is below this.
  double gate_margin = 0.02;
  // When false every image is reranked.
  bool gating = true;

  void validate() const;
};

// k classes with the highest logits, descending; ties by lowest class id.
std::vector<int> top_k_classes(std::span<const double> logits, std::size_t k);

// All unordered pairs {classes[a], classes[b]} with a < b, in index order.
std::vector<std::pair<int, int>> pair_set(std::span<const int> classes);

struct PairScores {
  double first = 0.0;   // mean similarity over class_a's texts
  double second = 0.0;  // mean similarity over class_b's texts
};

// Per-side mean cosine of an image against a one-to-one pair bundle.
PairScores one_to_one_scores(std::span<const float> image_feature,
                             const EmbeddingBundle& pair_texts, int class_a,
                             int class_b);

// Score gaps for ordered class pairs; setting (a, b) also sets (b, a) to
// the exact negation.
class GapLedger {
 public:
  void set(int a, int b, double score_a, double score_b) {
    gaps_[{a, b}] = score_a - score_b;
    gaps_[{b, a}] = score_b - score_a;
  }
  double at(int c, int j) const;
  bool contains(int c, int j) const { return gaps_.contains({c, j}); }
  const std::map<std::pair<int, int>, double>& entries() const { return gaps_; }
  bool empty() const { return gaps_.empty(); }

 private:
  std::map<std::pair<int, int>, double> gaps_;
};

// argmax over c of sum_{j != c} gap(c, j), summing j in `classes` order;
// ties by lowest class id.
int select_by_gap_sum(std::span<const int> classes, const GapLedger& gaps);

class PairStore {
 public:
  virtual ~PairStore() = default;
  // Bundle of one-to-one texts for the unordered pair {a, b}.
  virtual std::shared_ptr<const EmbeddingBundle> get(int a, int b) = 0;
};

class MemoryPairStore : public PairStore {
 public:
  void put(int a, int b, EmbeddingBundle bundle);
  std::shared_ptr<const EmbeddingBundle> get(int a, int b) override;
  std::size_t lookups() const { return lookups_.load(); }

 private:
  std::mutex mutex_;
  std::map<std::pair<int, int>, std::shared_ptr<const EmbeddingBundle>> pairs_;
  std::atomic<std::size_t> lookups_{0};
};

// Pair bundles on disk as <dir>/pair_<lo>_<hi>.codr. Loaded bundles must
// carry the expected encoder tag. On a miss the optional generator is asked
// for the bundle (at most once per pair, even under concurrent lookups) and
// the result is persisted; without a generator a miss is a PairStoreMiss.
class DirectoryPairStore : public PairStore {
 public:
  using Generator = std::function<EmbeddingBundle(int lo, int hi)>;

  DirectoryPairStore(std::filesystem::path dir, std::string encoder_tag,
                     Generator generator = nullptr);

  std::shared_ptr<const EmbeddingBundle> get(int a, int b) override;

  static std::filesystem::path file_for(const std::filesystem::path& dir,
                                        int a, int b);

 private:
  struct Slot {
    std::once_flag once;
    std::shared_ptr<const EmbeddingBundle> bundle;
  };

  std::shared_ptr<const EmbeddingBundle> load(int lo, int hi);

  std::filesystem::path dir_;
  std::string encoder_tag_;
  Generator generator_;
  std::mutex mutex_;
  std::map<std::pair<int, int>, std::shared_ptr<Slot>> slots_;
};

struct RerankResult {
  std::vector<int> top_k;
  int stage1_class = -1;
  int final_class = -1;
  // True when the image went through the one-to-one rerank stage.
  bool gated = false;
  GapLedger gaps;
};

// Two-stage decision for one image given its stage-1 logits. If the
// configured top_k exceeds the class count it is clamped to the class count.
RerankResult rerank(std::span<const double> logits,
                    std::span<const float> image_feature, PairStore& store,
                    const RerankConfig& cfg);

}  // namespace coder
