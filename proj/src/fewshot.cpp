#include "coder/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "coder/error.hpp"
#include "coder/log.hpp"

namespace coder {

std::string_view to_string(NormMode mode) noexcept {
  return mode == NormMode::MinMax ? "minmax" : "l2";
}

NormMode norm_mode_from_string(std::string_view name) {
  if (name == "minmax") return NormMode::MinMax;
  if (name == "l2") return NormMode::L2;
  throw Error(ErrorCode::InvalidArgument,
              "unknown norm mode '" + std::string(name) + "'");
}

void AdapterParams::validate() const {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
  if (!(beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be > 0");
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "T must be > 0");
}

SupportCache build_support_cache(const EmbeddingBundle& support_images,
                                 const EmbeddingBundle& texts,
                                 bool normalize_image_features) {
  if (support_images.kind != BundleKind::Image || texts.kind != BundleKind::Text) {
    throw Error(ErrorCode::InvalidArgument,
                "support cache needs an image bundle and a text bundle");
  }
  if (support_images.encoder_tag != texts.encoder_tag) {
    warn("support encoder '" + support_images.encoder_tag +
         "' differs from text encoder '" + texts.encoder_tag + "'");
  }
  SupportCache cache;
  cache.num_classes = texts.class_names.size();
  std::map<int, std::size_t> per_class;
  for (const auto& r : support_images.image_records) {
    if (!r.label_class_id) {
      throw Error(ErrorCode::InvalidArgument,
                  "support image " + std::to_string(r.id) + " has no label");
    }
    int label = *r.label_class_id;
    if (label < 0 || static_cast<std::size_t>(label) >= cache.num_classes) {
      throw Error(ErrorCode::InvalidArgument,
                  "support image " + std::to_string(r.id) + " label " +
                      std::to_string(label) + " >= class count");
    }
    cache.label_ids.push_back(label);
    ++per_class[label];
  }
  if (cache.label_ids.empty()) {
    throw Error(ErrorCode::EmptyInput, "empty support set");
  }
  cache.ways = per_class.size();
  cache.shots = per_class.begin()->second;
  for (auto [label, count] : per_class) {
    if (count != cache.shots) {
      throw Error(ErrorCode::InvariantViolation,
                  "unbalanced support set: class " + std::to_string(label) +
                      " has " + std::to_string(count) + " shots, expected " +
                      std::to_string(cache.shots));
    }
  }

  cache.coder = project_onto_texts(support_images.features, texts.features,
                                   normalize_image_features);
  cache.labels.assign(cache.size() * cache.num_classes, 0.0f);
  for (std::size_t n = 0; n < cache.size(); ++n) {
    cache.labels[n * cache.num_classes + cache.label_ids[n]] = 1.0f;
  }
  return cache;
}

std::vector<double> affinity(std::span<const float> coder,
                             const SupportCache& cache, const AdapterParams& p) {
  p.validate();
  if (cache.size() == 0) throw Error(ErrorCode::EmptyInput, "empty support cache");
  if (coder.size() != cache.coder.cols) {
    throw Error(ErrorCode::DimensionMismatch,
                "CODER length " + std::to_string(coder.size()) +
                    " vs support width " + std::to_string(cache.coder.cols));
  }

  std::vector<double> sims(cache.size());
  for (std::size_t n = 0; n < cache.size(); ++n) {
    auto s = cache.coder.row(n);
    double dot = 0.0;
    for (std::size_t k = 0; k < coder.size(); ++k) {
      dot += static_cast<double>(coder[k]) * s[k];
    }
    sims[n] = dot;
  }

  if (p.norm == NormMode::MinMax) {
    auto [lo, hi] = std::minmax_element(sims.begin(), sims.end());
    double min = *lo, range = *hi - *lo;
    for (double& v : sims) v = range > 0.0 ? (v - min) / range : 0.5;
  } else {
    double sq = 0.0;
    for (double v : sims) sq += v * v;
    double norm = std::sqrt(sq);
    for (double& v : sims) v = norm > 0.0 ? v / norm : 0.0;
  }

  for (double& v : sims) v = std::exp(-p.beta * (1.0 - v / p.temperature));
  return sims;
}

ClassScores adapt_logits(std::span<const double> zs_logits,
                         std::span<const float> coder, const SupportCache& cache,
                         const AdapterParams& p) {
  if (zs_logits.size() != cache.num_classes) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(zs_logits.size()) + " zero-shot logits for " +
                    std::to_string(cache.num_classes) + " classes");
  }
  auto weights = affinity(coder, cache, p);
  std::vector<double> correction(cache.num_classes, 0.0);
  for (std::size_t n = 0; n < cache.size(); ++n) {
    const float* label_row = cache.labels.data() + n * cache.num_classes;
    for (std::size_t c = 0; c < cache.num_classes; ++c) {
      correction[c] += weights[n] * label_row[c];
    }
  }
  ClassScores out(zs_logits.begin(), zs_logits.end());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += p.alpha * correction[c];
  return out;
}

std::vector<ClassScores> class_name_logits(const FeatureMatrix& images,
                                           const EmbeddingBundle& texts,
                                           double scale) {
  std::size_t num_classes = texts.class_names.size();
  const auto dim = texts.features.dim;
  std::vector<double> sums(num_classes * dim, 0.0);
  std::vector<std::size_t> counts(num_classes, 0);
  auto unit_texts = normalize_rows(texts.features);
  for (std::size_t k = 0; k < texts.text_records.size(); ++k) {
    const auto& r = texts.text_records[k];
    if (r.family != Family::ClassName) continue;
    auto t = unit_texts.row(k);
    for (std::size_t d = 0; d < dim; ++d) sums[r.class_id * dim + d] += t[d];
    ++counts[r.class_id];
  }

  FeatureMatrix prototypes(num_classes, dim, std::vector<float>(num_classes * dim));
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorCode::EmptyInput,
                  "class " + std::to_string(c) + " has no class-name texts");
    }
    for (std::size_t d = 0; d < dim; ++d) {
      prototypes.data[c * dim + d] = static_cast<float>(sums[c * dim + d] / counts[c]);
    }
  }

  auto cos = build_coder(images, prototypes);
  std::vector<ClassScores> out(images.rows, ClassScores(num_classes));
  for (std::size_t i = 0; i < images.rows; ++i) {
    auto row = cos.row(i);
    for (std::size_t c = 0; c < num_classes; ++c) out[i][c] = scale * row[c];
  }
  return out;
}

double adapter_accuracy(const AdapterParams& p, const ValidationSet& validation,
                        const SupportCache& cache) {
  std::size_t n = validation.labels.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "empty validation set");
  if (validation.coder.rows != n || validation.zs_logits.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "validation set sizes disagree");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto logits = adapt_logits(validation.zs_logits[i], validation.coder.row(i),
                               cache, p);
    if (argmax(logits) == validation.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

AdapterParams grid_search(std::span<const AdapterParams> grid,
                          const ValidationSet& validation,
                          const SupportCache& cache) {
  if (grid.empty()) throw Error(ErrorCode::EmptyInput, "empty parameter grid");
  if (validation.labels.empty()) {
    throw Error(ErrorCode::EmptyInput, "empty validation set");
  }
  std::size_t best = 0;
  double best_acc = -1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = adapter_accuracy(grid[g], validation, cache);
    if (acc > best_acc) {
      best = g;
      best_acc = acc;
    }
  }
  return grid[best];
}

}  // namespace coder
