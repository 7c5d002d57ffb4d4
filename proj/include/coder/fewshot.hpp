#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "coder/coder_core.hpp"
#include "coder/embedding_store.hpp"

namespace coder {

enum class NormMode { MinMax, L2 };

std::string_view to_string(NormMode mode) noexcept;
NormMode norm_mode_from_string(std::string_view name);

struct AdapterParams {
  double alpha = 1.0;
  double beta = 5.5;
  double temperature = 3.0;
  NormMode norm = NormMode::MinMax;

  void validate() const;
  bool operator==(const AdapterParams&) const = default;
};

// Support-set CODER rows and their one-hot labels.
struct SupportCache {
  CoderMatrix coder;             // (ways * shots) x texts
  std::vector<float> labels;     // (ways * shots) x classes, one-hot
  std::vector<int> label_ids;    // class id of each support row
  std::size_t num_classes = 0;
  std::size_t ways = 0;
  std::size_t shots = 0;

  std::size_t size() const { return coder.rows; }
};

// Support rows are projected onto the unit text rows without normalizing
// the image features unless `normalize_image_features` is set.
SupportCache build_support_cache(const EmbeddingBundle& support_images,
                                 const EmbeddingBundle& texts,
                                 bool normalize_image_features = false);

// exp(-beta * (1 - Norm(s . S_train^T) / T)), one entry per support row.
std::vector<double> affinity(std::span<const float> coder,
                             const SupportCache& cache, const AdapterParams& p);

// alpha * (A . L_train) + zs_logits.
ClassScores adapt_logits(std::span<const double> zs_logits,
                         std::span<const float> coder, const SupportCache& cache,
                         const AdapterParams& p);

// Zero-shot logits from the class-name texts: per class the mean of its
// unit ClassName text features is renormalized and scored by cosine,
// times `scale`.
std::vector<ClassScores> class_name_logits(const FeatureMatrix& images,
                                           const EmbeddingBundle& texts,
                                           double scale = 100.0);

struct ValidationSet {
  CoderMatrix coder;
  std::vector<ClassScores> zs_logits;
  std::vector<int> labels;
};

// Grid point with the best validation accuracy; ties keep the earliest.
AdapterParams grid_search(std::span<const AdapterParams> grid,
                          const ValidationSet& validation,
                          const SupportCache& cache);

double adapter_accuracy(const AdapterParams& p, const ValidationSet& validation,
                        const SupportCache& cache);

}  // namespace coder
