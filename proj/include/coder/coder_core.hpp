#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include "coder/embedding_store.hpp"

namespace coder {

// Mapping applied to each image-text similarity before it enters the CODER.
// Only Identity is implemented; the enum is the extension point.
enum class PsiMapping { Identity };

inline double apply_psi(PsiMapping psi, double similarity) {
  switch (psi) {
    case PsiMapping::Identity: return similarity;
  }
  return similarity;
}

// Row-major (images x texts) matrix; row i is the CODER of image i.
struct CoderMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }
};

// output[i][k] = psi(cos(image_i, text_k)). Dot products accumulate in double.
CoderMatrix build_coder(const FeatureMatrix& images, const FeatureMatrix& texts,
                        PsiMapping psi = PsiMapping::Identity);

// output[i][k] = image_i . (text_k / |text_k|), with image_i optionally
// divided by its own norm first. build_coder is the normalized case.
CoderMatrix project_onto_texts(const FeatureMatrix& images,
                               const FeatureMatrix& texts,
                               bool normalize_images);

using FamilySet = std::set<Family>;

FamilySet general_families();

// Column indices of one class's CODER entries, split by text family.
struct ClassSlices {
  std::vector<std::size_t> ori;
  std::vector<std::size_t> att;
  std::vector<std::size_t> ana;
  std::vector<std::size_t> syn;
};

class ClassPartition {
 public:
  // One-to-one records never enter a partition. `enabled` masks out
  // families (ablation); by default every general family is kept.
  static ClassPartition from_records(std::span<const TextRecord> records,
                                     std::size_t num_classes,
                                     const FamilySet& enabled = general_families());

  std::size_t num_classes() const { return slices_.size(); }
  std::size_t width() const { return width_; }
  const ClassSlices& operator[](std::size_t class_id) const {
    return slices_[class_id];
  }

 private:
  std::vector<ClassSlices> slices_;
  std::size_t width_ = 0;
};

using ClassScores = std::vector<double>;

// Index of the largest score; ties resolve to the lowest class id.
int argmax(std::span<const double> scores);

// Nearest class-name text: class of the single largest ClassName entry.
int one_nn_class(std::span<const float> coder, const ClassPartition& partition);

struct CoderParts {
  std::span<const float> ori;
  std::span<const float> att;
  std::span<const float> ana;
  std::span<const float> syn;
};

// mean(att ++ ana ++ [max(ori ++ syn)]); the max enters the mean once.
double heuristic_logit(const CoderParts& parts);

ClassScores stage1_logits(std::span<const float> coder,
                          const ClassPartition& partition);

}  // namespace coder
