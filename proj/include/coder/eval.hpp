#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coder/coder_core.hpp"
#include "coder/embedding_store.hpp"
#include "coder/fewshot.hpp"
#include "coder/zeroshot.hpp"
#include "json.hpp"

namespace coder {

enum class RunMode { ZeroShot, ZeroShotRerank, FewShot };

std::string_view to_string(RunMode mode) noexcept;
RunMode run_mode_from_string(std::string_view name);

// Where the zero-shot logits corrected by the adapter come from.
enum class ZeroShotSource { ClassName, Stage1 };

struct FewShotConfig {
  std::filesystem::path support_bundle;
  AdapterParams params;
  bool normalize_image_features = false;
  ZeroShotSource zs_source = ZeroShotSource::ClassName;
  double logit_scale = 100.0;
};

struct RunConfig {
  FamilySet families = general_families();
  RerankConfig rerank;
  std::filesystem::path pairs_dir;
  FewShotConfig fewshot;
  unsigned threads = 0;
};

nlohmann::json to_json(const RunConfig& config);

struct RunManifest {
  std::string dataset_tag;
  std::filesystem::path image_bundle;
  std::filesystem::path text_bundle;
  RunMode mode = RunMode::ZeroShot;
  RunConfig config;
  std::uint64_t seed = 0;
  // Config paths (pairs_dir, support_bundle) are kept as written and
  // resolved against this directory when used.
  std::filesystem::path base_dir;

  // Relative paths resolve against the manifest's directory. Any problem
  // (unreadable JSON, unknown keys' values, missing files) throws Manifest.
  static RunManifest load(const std::filesystem::path& path);
  static RunManifest from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir);
  void validate() const;
};

struct ClassAccuracy {
  int class_id = 0;
  std::string class_name;
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct Report {
  std::string dataset_tag;
  RunMode mode = RunMode::ZeroShot;
  FamilySet families;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  // Stage-1 accuracy for rerank runs, zero-shot accuracy for few-shot runs.
  std::optional<double> baseline_accuracy;
  std::vector<ClassAccuracy> per_class;
  nlohmann::json config;
  std::uint64_t seed = 0;
  double wall_time_ms = 0.0;
};

// Wall time is the only non-deterministic field; leave it out for golden
// comparisons.
nlohmann::json to_json(const Report& report, bool include_wall_time = true);

// Accuracy bookkeeping over labelled predictions.
Report score_predictions(std::span<const int> predictions,
                         const EmbeddingBundle& images,
                         std::span<const std::string> class_names);

struct ZeroShotOutcome {
  std::vector<RerankResult> results;  // one per image, image order
};

// Stage-1 classification of every image; with a pair store the two-stage
// rerank is applied under `rerank`'s gating.
ZeroShotOutcome predict_zeroshot(const EmbeddingBundle& images,
                                 const EmbeddingBundle& texts,
                                 const FamilySet& families, PairStore* store,
                                 const RerankConfig& rerank, unsigned threads = 0);

struct FewShotOutcome {
  std::vector<int> zero_shot_class;
  std::vector<int> final_class;
};

FewShotOutcome predict_fewshot(const EmbeddingBundle& images,
                               const EmbeddingBundle& texts,
                               const EmbeddingBundle& support,
                               const FewShotConfig& config, unsigned threads = 0);

struct Evaluation {
  Report report;
  std::vector<int> predictions;
};

Evaluation evaluate(const RunManifest& manifest);

// One report per family subset. The CODER is computed once for the full
// text bundle and each subset masks its columns.
std::vector<Report> ablation_sweep(const RunManifest& manifest,
                                   const std::vector<FamilySet>& family_sets);

}  // namespace coder
