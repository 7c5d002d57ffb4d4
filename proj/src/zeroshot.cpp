#include "coder/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coder/error.hpp"

namespace coder {

void RerankConfig::validate() const {
  if (top_k < 2) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 2");
  if (!(gate_margin >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "gate_margin must be >= 0");
  }
}

std::vector<int> top_k_classes(std::span<const double> logits, std::size_t k) {
  if (k > logits.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "k=" + std::to_string(k) + " exceeds class count " +
                    std::to_string(logits.size()));
  }
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return logits[a] > logits[b]; });
  order.resize(k);
  return order;
}

std::vector<std::pair<int, int>> pair_set(std::span<const int> classes) {
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      pairs.emplace_back(classes[a], classes[b]);
    }
  }
  return pairs;
}

PairScores one_to_one_scores(std::span<const float> image_feature,
                             const EmbeddingBundle& pair_texts, int class_a,
                             int class_b) {
  const auto& texts = pair_texts.features;
  if (texts.dim != image_feature.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "pair bundle dim " + std::to_string(texts.dim) +
                    " vs image dim " + std::to_string(image_feature.size()));
  }
  if (pair_texts.text_records.size() != texts.rows) {
    throw Error(ErrorCode::RowCountMismatch, "pair bundle records/rows differ");
  }

  double image_sq = 0.0;
  for (float v : image_feature) image_sq += static_cast<double>(v) * v;
  double image_norm = std::sqrt(image_sq);
  if (!(image_norm >= kDegenerateNorm)) throw DegenerateFeatureError(0, "image");

  double sum_a = 0.0, sum_b = 0.0;
  std::size_t n_a = 0, n_b = 0;
  for (std::size_t k = 0; k < texts.rows; ++k) {
    const auto& r = pair_texts.text_records[k];
    bool side_a = r.class_id == class_a && r.pair_class_id == class_b;
    bool side_b = r.class_id == class_b && r.pair_class_id == class_a;
    if (r.family != Family::OneToOne || !(side_a || side_b)) {
      throw Error(ErrorCode::InvariantViolation,
                  "pair bundle record " + std::to_string(r.id) +
                      " is not a one-to-one text for this pair");
    }
    auto t = texts.row(k);
    double dot = 0.0, text_sq = 0.0;
    for (std::size_t d = 0; d < t.size(); ++d) {
      dot += static_cast<double>(image_feature[d]) * t[d];
      text_sq += static_cast<double>(t[d]) * t[d];
    }
    double text_norm = std::sqrt(text_sq);
    if (!(text_norm >= kDegenerateNorm)) throw DegenerateFeatureError(k, "pair text");
    double cos = dot / (image_norm * text_norm);
    if (side_a) {
      sum_a += cos;
      ++n_a;
    } else {
      sum_b += cos;
      ++n_b;
    }
  }
  if (n_a == 0 || n_b == 0) {
    throw Error(ErrorCode::EmptyInput,
                "pair (" + std::to_string(class_a) + ", " +
                    std::to_string(class_b) + ") has a side with no texts");
  }
  return {sum_a / static_cast<double>(n_a), sum_b / static_cast<double>(n_b)};
}

double GapLedger::at(int c, int j) const {
  auto it = gaps_.find({c, j});
  if (it == gaps_.end()) {
    throw Error(ErrorCode::InvalidArgument, "no gap recorded for (" +
                                                std::to_string(c) + ", " +
                                                std::to_string(j) + ")");
  }
  return it->second;
}

int select_by_gap_sum(std::span<const int> classes, const GapLedger& gaps) {
  if (classes.empty()) throw Error(ErrorCode::EmptyInput, "no classes to rank");
  int best = -1;
  double best_sum = 0.0;
  for (int c : classes) {
    double sum = 0.0;
    for (int j : classes) {
      if (j != c) sum += gaps.at(c, j);
    }
    if (best < 0 || sum > best_sum || (sum == best_sum && c < best)) {
      best = c;
      best_sum = sum;
    }
  }
  return best;
}

void MemoryPairStore::put(int a, int b, EmbeddingBundle bundle) {
  std::lock_guard lock(mutex_);
  pairs_[{std::min(a, b), std::max(a, b)}] =
      std::make_shared<const EmbeddingBundle>(std::move(bundle));
}

std::shared_ptr<const EmbeddingBundle> MemoryPairStore::get(int a, int b) {
  ++lookups_;
  std::lock_guard lock(mutex_);
  auto it = pairs_.find({std::min(a, b), std::max(a, b)});
  if (it == pairs_.end()) {
    throw Error(ErrorCode::PairStoreMiss, "no one-to-one texts for pair (" +
                                              std::to_string(a) + ", " +
                                              std::to_string(b) + ")");
  }
  return it->second;
}

DirectoryPairStore::DirectoryPairStore(std::filesystem::path dir,
                                       std::string encoder_tag,
                                       Generator generator)
    : dir_(std::move(dir)),
      encoder_tag_(std::move(encoder_tag)),
      generator_(std::move(generator)) {}

std::filesystem::path DirectoryPairStore::file_for(
    const std::filesystem::path& dir, int a, int b) {
  return dir / ("pair_" + std::to_string(std::min(a, b)) + "_" +
                std::to_string(std::max(a, b)) + ".codr");
}

std::shared_ptr<const EmbeddingBundle> DirectoryPairStore::get(int a, int b) {
  int lo = std::min(a, b), hi = std::max(a, b);
  std::shared_ptr<Slot> slot;
  {
    std::lock_guard lock(mutex_);
    auto& s = slots_[{lo, hi}];
    if (!s) s = std::make_shared<Slot>();
    slot = s;
  }
  std::call_once(slot->once, [&] { slot->bundle = load(lo, hi); });
  return slot->bundle;
}

std::shared_ptr<const EmbeddingBundle> DirectoryPairStore::load(int lo, int hi) {
  auto path = file_for(dir_, lo, hi);
  EmbeddingBundle bundle;
  if (std::filesystem::exists(path)) {
    bundle = read_bundle(path);
  } else if (generator_) {
    bundle = generator_(lo, hi);
    std::filesystem::create_directories(dir_);
    write_bundle(bundle, path);
  } else {
    throw Error(ErrorCode::PairStoreMiss,
                "missing " + path.string() +
                    " (generate one-to-one texts and export them to this path)");
  }
  if (!encoder_tag_.empty() && bundle.encoder_tag != encoder_tag_) {
    throw Error(ErrorCode::InvariantViolation,
                path.string() + " was encoded with '" + bundle.encoder_tag +
                    "', expected '" + encoder_tag_ + "'");
  }
  return std::make_shared<const EmbeddingBundle>(std::move(bundle));
}

RerankResult rerank(std::span<const double> logits,
                    std::span<const float> image_feature, PairStore& store,
                    const RerankConfig& cfg) {
  cfg.validate();
  if (logits.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "rerank needs at least two classes");
  }
  RerankResult result;
  result.top_k = top_k_classes(logits, std::min(cfg.top_k, logits.size()));
  result.stage1_class = result.top_k.front();
  result.final_class = result.stage1_class;

  double margin = logits[result.top_k[0]] - logits[result.top_k[1]];
  if (cfg.gating && !(margin < cfg.gate_margin)) return result;

  result.gated = true;
  for (auto [a, b] : pair_set(result.top_k)) {
    auto bundle = store.get(a, b);
    auto scores = one_to_one_scores(image_feature, *bundle, a, b);
    result.gaps.set(a, b, scores.first, scores.second);
  }
  result.final_class = select_by_gap_sum(result.top_k, result.gaps);
  return result;
}

}  // namespace coder
