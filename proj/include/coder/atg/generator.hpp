#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "coder/atg/llm_gateway.hpp"
#include "coder/atg/one_to_one_store.hpp"
#include "coder/atg/synonyms.hpp"
#include "coder/atg/templates.hpp"
#include "coder/coder_core.hpp"
#include "coder/embedding_store.hpp"

namespace coder::atg {

struct TextSetSpec {
  std::vector<std::string> class_names;
  FamilySet families_enabled{Family::ClassName};
  // Caps on generated items per class; a family without an entry is uncapped.
  std::map<Family, std::size_t> per_family_counts{
      {Family::Attribute, 10}, {Family::AnalogousClass, 5}, {Family::OneToOne, 10}};
  double similarity_threshold = 0.85;
  int max_in_flight = 4;

  void validate() const;
  std::size_t cap(Family family) const;
};

// Unit text features for class-name strings, looked up case-insensitively.
class NameEmbeddings {
 public:
  NameEmbeddings() = default;
  // Every record's text is taken as the name it encodes.
  static NameEmbeddings from_bundle(const EmbeddingBundle& bundle);

  const std::vector<float>* find(const std::string& name) const;
  std::size_t dim() const { return dim_; }

 private:
  std::map<std::string, std::vector<float>> vectors_;
  std::size_t dim_ = 0;
};

std::vector<TextRecord> build_class_name_texts(const TextSetSpec& spec,
                                               const TemplateSet& templates);

std::vector<std::string> query_analogous_classes(const std::string& class_name,
                                                 LlmGateway& gateway);

// name_features: one row per candidate followed by one per dataset class.
// Drops candidates equal (case-insensitive) to a dataset class name or whose
// max cosine to any dataset class reaches `threshold`.
std::vector<std::string> filter_analogous(std::span<const std::string> candidates,
                                          std::span<const std::string> dataset_class_names,
                                          const FeatureMatrix& name_features,
                                          double threshold);

std::vector<TextRecord> build_analogous_texts(int class_id, const std::string& class_name,
                                              std::span<const std::string> kept,
                                              const TemplateSet& templates);

std::vector<TextRecord> build_synonym_texts(int class_id, const std::string& class_name,
                                            const SynonymProvider& synonyms,
                                            const TemplateSet& templates);

std::vector<TextRecord> build_attribute_texts(int class_id, const std::string& class_name,
                                              LlmGateway& gateway,
                                              const TemplateSet& templates,
                                              std::size_t max_count = 10);

struct OneToOneTexts {
  std::vector<TextRecord> first;   // describe class_a, pair_class_id = class_b
  std::vector<TextRecord> second;  // describe class_b, pair_class_id = class_a
  bool retrieved_from_cache = false;
};

// Queries the gateway only when `store` has no entry for the unordered pair.
OneToOneTexts build_one_to_one_texts(int class_a, int class_b,
                                     std::span<const std::string> class_names,
                                     LlmGateway& gateway, OneToOneStore& store,
                                     const TemplateSet& templates,
                                     std::size_t max_per_side = 10);

// ClassName + Attribute + AnalogousClass + Synonym records for every class,
// deduplicated by text (first wins) and sorted by (class_id, family, id).
// A family that fails for one class is skipped with a warning.
std::vector<TextRecord> assemble_general_text_set(const TextSetSpec& spec,
                                                  LlmGateway& gateway,
                                                  const SynonymProvider* synonyms,
                                                  const TemplateSet& templates,
                                                  const NameEmbeddings* names = nullptr);

}  // namespace coder::atg
