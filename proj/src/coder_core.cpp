#include "coder/coder_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coder/error.hpp"

namespace coder {

namespace {

std::vector<double> row_norms(const FeatureMatrix& m, const char* name) {
  std::vector<double> norms(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double sq = 0.0;
    for (float v : m.row(i)) sq += static_cast<double>(v) * v;
    norms[i] = std::sqrt(sq);
    if (!(norms[i] >= kDegenerateNorm)) throw DegenerateFeatureError(i, name);
  }
  return norms;
}

void check_shapes(const FeatureMatrix& images, const FeatureMatrix& texts) {
  if (images.dim != texts.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "image dim " + std::to_string(images.dim) + " vs text dim " +
                    std::to_string(texts.dim));
  }
  if (images.data.size() != images.rows * images.dim ||
      texts.data.size() != texts.rows * texts.dim) {
    throw Error(ErrorCode::InvariantViolation, "feature data length mismatch");
  }
}

CoderMatrix project(const FeatureMatrix& images, const FeatureMatrix& texts,
                    bool normalize_images, PsiMapping psi) {
  check_shapes(images, texts);
  auto text_norms = row_norms(texts, "text");
  std::vector<double> image_norms(images.rows, 1.0);
  if (normalize_images) image_norms = row_norms(images, "image");

  CoderMatrix out;
  out.rows = images.rows;
  out.cols = texts.rows;
  out.values.resize(out.rows * out.cols);
  for (std::size_t i = 0; i < images.rows; ++i) {
    auto x = images.row(i);
    for (std::size_t k = 0; k < texts.rows; ++k) {
      auto t = texts.row(k);
      double dot = 0.0;
      for (std::size_t d = 0; d < x.size(); ++d) {
        dot += static_cast<double>(x[d]) * t[d];
      }
      double s = dot / (image_norms[i] * text_norms[k]);
      out.values[i * out.cols + k] = static_cast<float>(apply_psi(psi, s));
    }
  }
  return out;
}

}  // namespace

CoderMatrix build_coder(const FeatureMatrix& images, const FeatureMatrix& texts,
                        PsiMapping psi) {
  return project(images, texts, true, psi);
}

CoderMatrix project_onto_texts(const FeatureMatrix& images,
                               const FeatureMatrix& texts,
                               bool normalize_images) {
  return project(images, texts, normalize_images, PsiMapping::Identity);
}

FamilySet general_families() {
  return {Family::ClassName, Family::Attribute, Family::AnalogousClass,
          Family::Synonym};
}

ClassPartition ClassPartition::from_records(std::span<const TextRecord> records,
                                            std::size_t num_classes,
                                            const FamilySet& enabled) {
  ClassPartition p;
  p.slices_.resize(num_classes);
  p.width_ = records.size();
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (r.family == Family::OneToOne || !enabled.contains(r.family)) continue;
    if (r.class_id < 0 || static_cast<std::size_t>(r.class_id) >= num_classes) {
      throw Error(ErrorCode::InvariantViolation,
                  "record " + std::to_string(r.id) + " class_id out of range");
    }
    auto& s = p.slices_[r.class_id];
    switch (r.family) {
      case Family::ClassName: s.ori.push_back(k); break;
      case Family::Attribute: s.att.push_back(k); break;
      case Family::AnalogousClass: s.ana.push_back(k); break;
      case Family::Synonym: s.syn.push_back(k); break;
      case Family::OneToOne: break;
    }
  }
  return p;
}

int argmax(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorCode::EmptyInput, "argmax of no scores");
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return static_cast<int>(best);
}

int one_nn_class(std::span<const float> coder, const ClassPartition& partition) {
  if (coder.size() != partition.width()) {
    throw Error(ErrorCode::DimensionMismatch, "CODER length != partition width");
  }
  int best = -1;
  float best_value = -std::numeric_limits<float>::infinity();
  for (std::size_t j = 0; j < partition.num_classes(); ++j) {
    for (std::size_t k : partition[j].ori) {
      if (best < 0 || coder[k] > best_value) {
        best = static_cast<int>(j);
        best_value = coder[k];
      }
    }
  }
  if (best < 0) {
    throw Error(ErrorCode::EmptyInput, "no class-name entries in partition");
  }
  return best;
}

double heuristic_logit(const CoderParts& parts) {
  if (parts.ori.empty() && parts.syn.empty()) {
    throw Error(ErrorCode::EmptyInput,
                "class has neither class-name nor synonym entries");
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (float v : parts.ori) peak = std::max(peak, static_cast<double>(v));
  for (float v : parts.syn) peak = std::max(peak, static_cast<double>(v));

  double sum = 0.0;
  for (float v : parts.att) sum += v;
  for (float v : parts.ana) sum += v;
  sum += peak;
  return sum / static_cast<double>(parts.att.size() + parts.ana.size() + 1);
}

ClassScores stage1_logits(std::span<const float> coder,
                          const ClassPartition& partition) {
  if (coder.size() != partition.width()) {
    throw Error(ErrorCode::DimensionMismatch, "CODER length != partition width");
  }
  ClassScores logits(partition.num_classes());
  std::vector<float> ori, att, ana, syn;
  auto gather = [&](std::vector<float>& out, const std::vector<std::size_t>& idx) {
    out.clear();
    for (std::size_t k : idx) out.push_back(coder[k]);
  };
  for (std::size_t j = 0; j < partition.num_classes(); ++j) {
    const auto& s = partition[j];
    gather(ori, s.ori);
    gather(att, s.att);
    gather(ana, s.ana);
    gather(syn, s.syn);
    try {
      logits[j] = heuristic_logit({ori, att, ana, syn});
    } catch (const Error& e) {
      throw Error(e.code(), "class " + std::to_string(j) + ": " + e.what());
    }
  }
  return logits;
}

}  // namespace coder
