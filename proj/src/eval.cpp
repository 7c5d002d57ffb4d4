#include "coder/eval.hpp"

#include <chrono>

#include "coder/error.hpp"
#include "coder/json_io.hpp"
#include "coder/parallel.hpp"

namespace coder {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

json families_json(const FamilySet& families) {
  json out = json::array();
  for (Family f : families) out.push_back(std::string(to_string(f)));
  return out;
}

FamilySet families_from_json(const json& j) {
  FamilySet out;
  for (const auto& f : j) out.insert(family_from_string(f.get<std::string>()));
  return out;
}

Error with_image(const Error& e, const ImageRecord& record) {
  return Error(e.code(), "image " + std::to_string(record.id) + ": " + e.what());
}

CoderMatrix select_columns(const CoderMatrix& m, const std::vector<std::size_t>& cols) {
  CoderMatrix out;
  out.rows = m.rows;
  out.cols = cols.size();
  out.values.reserve(out.rows * out.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto row = m.row(i);
    for (std::size_t k : cols) out.values.push_back(row[k]);
  }
  return out;
}

std::vector<std::size_t> general_columns(const std::vector<TextRecord>& records,
                                         const FamilySet& families) {
  std::vector<std::size_t> cols;
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (records[k].family != Family::OneToOne && families.contains(records[k].family)) {
      cols.push_back(k);
    }
  }
  return cols;
}

void require_class_names(const FamilySet& families) {
  if (!families.contains(Family::ClassName)) {
    throw Error(ErrorCode::InvalidArgument,
                "family subset without class-name texts cannot classify");
  }
}

void check_pairing(const EmbeddingBundle& images, const EmbeddingBundle& texts) {
  if (images.kind != BundleKind::Image) {
    throw Error(ErrorCode::InvalidArgument, "expected an image bundle");
  }
  if (texts.kind != BundleKind::Text) {
    throw Error(ErrorCode::InvalidArgument, "expected a text bundle");
  }
  if (images.features.dim != texts.features.dim) {
    throw Error(ErrorCode::DimensionMismatch, "image and text feature dims differ");
  }
}

// Everything a run needs that does not depend on the family mask.
struct Prepared {
  EmbeddingBundle images;
  EmbeddingBundle texts;
  std::optional<EmbeddingBundle> support;
  CoderMatrix coder;  // normalized CODER of every image against every text
  std::optional<CoderMatrix> fewshot_images;
  std::optional<CoderMatrix> fewshot_support;
  std::vector<ClassScores> class_name_zs;
};

Prepared prepare(const RunManifest& m, const std::filesystem::path& base) {
  Prepared p;
  p.images = read_bundle(m.image_bundle);
  p.texts = read_bundle(m.text_bundle);
  check_pairing(p.images, p.texts);
  for (const auto& r : p.images.image_records) {
    if (!r.label_class_id) {
      throw Error(ErrorCode::InvalidArgument,
                  "image " + std::to_string(r.id) + " has no label");
    }
  }
  p.coder = build_coder(p.images.features, p.texts.features);
  if (m.mode == RunMode::FewShot) {
    const auto& fs = m.config.fewshot;
    p.support = read_bundle(resolve(base, fs.support_bundle));
    p.fewshot_images =
        project_onto_texts(p.images.features, p.texts.features, fs.normalize_image_features);
    p.fewshot_support =
        project_onto_texts(p.support->features, p.texts.features, fs.normalize_image_features);
    if (fs.zs_source == ZeroShotSource::ClassName) {
      p.class_name_zs = class_name_logits(p.images.features, p.texts, fs.logit_scale);
    }
  }
  return p;
}

std::vector<int> run_masked(const RunManifest& m, const std::filesystem::path& base,
                            const Prepared& p, const FamilySet& families,
                            std::optional<std::vector<int>>* baseline) {
  require_class_names(families);
  const std::size_t n = p.images.image_records.size();
  const std::size_t num_classes = p.texts.class_names.size();
  auto partition = ClassPartition::from_records(p.texts.text_records, num_classes, families);
  std::vector<int> predictions(n, -1);
  std::vector<int> base_pred(n, -1);
  unsigned threads = m.config.threads;

  switch (m.mode) {
    case RunMode::ZeroShot:
      parallel_for(n, [&](std::size_t i) {
        try {
          predictions[i] = argmax(stage1_logits(p.coder.row(i), partition));
        } catch (const Error& e) {
          throw with_image(e, p.images.image_records[i]);
        }
      }, threads);
      break;

    case RunMode::ZeroShotRerank: {
      DirectoryPairStore store(resolve(base, m.config.pairs_dir), p.texts.encoder_tag);
      parallel_for(n, [&](std::size_t i) {
        try {
          auto logits = stage1_logits(p.coder.row(i), partition);
          auto r = rerank(logits, p.images.features.row(i), store, m.config.rerank);
          predictions[i] = r.final_class;
          base_pred[i] = r.stage1_class;
        } catch (const Error& e) {
          throw with_image(e, p.images.image_records[i]);
        }
      }, threads);
      if (baseline) *baseline = base_pred;
      break;
    }

    case RunMode::FewShot: {
      const auto& fs = m.config.fewshot;
      auto cols = general_columns(p.texts.text_records, families);
      SupportCache cache = build_support_cache(*p.support, p.texts, fs.normalize_image_features);
      cache.coder = select_columns(*p.fewshot_support, cols);
      auto test_coder = select_columns(*p.fewshot_images, cols);
      parallel_for(n, [&](std::size_t i) {
        try {
          ClassScores zs;
          if (fs.zs_source == ZeroShotSource::ClassName) {
            zs = p.class_name_zs[i];
          } else {
            zs = stage1_logits(p.coder.row(i), partition);
            for (double& v : zs) v *= fs.logit_scale;
          }
          base_pred[i] = argmax(zs);
          predictions[i] = argmax(adapt_logits(zs, test_coder.row(i), cache, fs.params));
        } catch (const Error& e) {
          throw with_image(e, p.images.image_records[i]);
        }
      }, threads);
      if (baseline) *baseline = base_pred;
      break;
    }
  }
  return predictions;
}

Report build_report(const RunManifest& m, const Prepared& p, const FamilySet& families,
                    const std::vector<int>& predictions,
                    const std::optional<std::vector<int>>& baseline, double wall_ms) {
  Report r = score_predictions(predictions, p.images, p.texts.class_names);
  r.dataset_tag = m.dataset_tag;
  r.mode = m.mode;
  r.families = families;
  RunConfig echo = m.config;
  echo.families = families;
  r.config = to_json(echo);
  r.seed = m.seed;
  r.wall_time_ms = wall_ms;
  if (baseline) {
    auto b = score_predictions(*baseline, p.images, p.texts.class_names);
    r.baseline_accuracy = b.accuracy;
  }
  return r;
}

}  // namespace

std::string_view to_string(RunMode mode) noexcept {
  switch (mode) {
    case RunMode::ZeroShot: return "zeroshot";
    case RunMode::ZeroShotRerank: return "zeroshot_rerank";
    case RunMode::FewShot: return "fewshot";
  }
  return "unknown";
}

RunMode run_mode_from_string(std::string_view name) {
  if (name == "zeroshot") return RunMode::ZeroShot;
  if (name == "zeroshot_rerank") return RunMode::ZeroShotRerank;
  if (name == "fewshot") return RunMode::FewShot;
  throw Error(ErrorCode::Manifest, "unknown mode '" + std::string(name) + "'");
}

json to_json(const RunConfig& c) {
  return json{
      {"families", families_json(c.families)},
      {"rerank", {{"top_k", c.rerank.top_k},
                  {"gate_margin", c.rerank.gate_margin},
                  {"gating", c.rerank.gating}}},
      {"pairs_dir", c.pairs_dir.generic_string()},
      {"fewshot", {{"support_bundle", c.fewshot.support_bundle.generic_string()},
                   {"alpha", c.fewshot.params.alpha},
                   {"beta", c.fewshot.params.beta},
                   {"T", c.fewshot.params.temperature},
                   {"norm", std::string(to_string(c.fewshot.params.norm))},
                   {"normalize_image_features", c.fewshot.normalize_image_features},
                   {"zs_source", c.fewshot.zs_source == ZeroShotSource::ClassName
                                     ? "class_name"
                                     : "stage1"},
                   {"logit_scale", c.fewshot.logit_scale}}},
  };
}

RunManifest RunManifest::from_json(const json& j, const std::filesystem::path& base_dir) {
  RunManifest m;
  try {
    m.dataset_tag = j.at("dataset_tag").get<std::string>();
    m.image_bundle = resolve(base_dir, j.at("image_bundle").get<std::string>());
    m.text_bundle = resolve(base_dir, j.at("text_bundle").get<std::string>());
    m.mode = run_mode_from_string(j.at("mode").get<std::string>());
    m.seed = j.value("seed", std::uint64_t{0});
    json cfg = j.value("config", json::object());
    if (cfg.contains("families")) m.config.families = families_from_json(cfg["families"]);
    m.config.threads = cfg.value("threads", 0u);
    if (cfg.contains("pairs_dir")) m.config.pairs_dir = cfg["pairs_dir"].get<std::string>();
    if (auto r = cfg.value("rerank", json::object()); !r.empty()) {
      m.config.rerank.top_k = r.value("top_k", m.config.rerank.top_k);
      m.config.rerank.gate_margin = r.value("gate_margin", m.config.rerank.gate_margin);
      m.config.rerank.gating = r.value("gating", m.config.rerank.gating);
    }
    if (auto f = cfg.value("fewshot", json::object()); !f.empty()) {
      auto& fs = m.config.fewshot;
      fs.support_bundle = f.value("support_bundle", std::string{});
      fs.params.alpha = f.value("alpha", fs.params.alpha);
      fs.params.beta = f.value("beta", fs.params.beta);
      fs.params.temperature = f.value("T", fs.params.temperature);
      fs.params.norm = norm_mode_from_string(f.value("norm", std::string("minmax")));
      fs.normalize_image_features =
          f.value("normalize_image_features", fs.normalize_image_features);
      fs.logit_scale = f.value("logit_scale", fs.logit_scale);
      auto src = f.value("zs_source", std::string("class_name"));
      if (src == "class_name") {
        fs.zs_source = ZeroShotSource::ClassName;
      } else if (src == "stage1") {
        fs.zs_source = ZeroShotSource::Stage1;
      } else {
        throw Error(ErrorCode::Manifest, "unknown zs_source '" + src + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Manifest, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Manifest) throw;
    throw Error(ErrorCode::Manifest, e.what());
  }
  m.base_dir = base_dir;
  m.validate();
  return m;
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Manifest, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::Manifest, e.what());
  }
  return from_json(j, path.parent_path());
}

void RunManifest::validate() const {
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (p.empty() || !std::filesystem::exists(p)) {
      throw Error(ErrorCode::Manifest,
                  std::string(what) + " '" + p.string() + "' does not exist");
    }
  };
  auto at = [&](const std::filesystem::path& p) { return resolve(base_dir, p); };
  require(image_bundle, "image_bundle");
  require(text_bundle, "text_bundle");
  if (mode == RunMode::ZeroShotRerank) {
    if (config.pairs_dir.empty()) {
      throw Error(ErrorCode::Manifest, "zeroshot_rerank needs config.pairs_dir");
    }
    try {
      config.rerank.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::Manifest, e.what());
    }
  }
  if (mode == RunMode::FewShot) {
    require(at(config.fewshot.support_bundle), "fewshot.support_bundle");
    try {
      config.fewshot.params.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::Manifest, e.what());
    }
  }
  if (!config.families.contains(Family::ClassName)) {
    throw Error(ErrorCode::Manifest, "families must include class_name");
  }
}

json to_json(const Report& r, bool include_wall_time) {
  json per_class = json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"class_id", c.class_id},
                         {"class_name", c.class_name},
                         {"correct", c.correct},
                         {"total", c.total},
                         {"accuracy", c.total ? json(static_cast<double>(c.correct) /
                                                     static_cast<double>(c.total))
                                              : json(nullptr)}});
  }
  json j{{"dataset_tag", r.dataset_tag},
         {"mode", std::string(to_string(r.mode))},
         {"families", families_json(r.families)},
         {"correct", r.correct},
         {"total", r.total},
         {"accuracy", r.accuracy},
         {"per_class", std::move(per_class)},
         {"config", r.config},
         {"seed", r.seed}};
  if (r.baseline_accuracy) j["baseline_accuracy"] = *r.baseline_accuracy;
  if (include_wall_time) j["wall_time_ms"] = r.wall_time_ms;
  return j;
}

Report score_predictions(std::span<const int> predictions, const EmbeddingBundle& images,
                         std::span<const std::string> class_names) {
  if (predictions.size() != images.image_records.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one prediction per image required");
  }
  Report r;
  r.per_class.resize(class_names.size());
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    r.per_class[c].class_id = static_cast<int>(c);
    r.per_class[c].class_name = class_names[c];
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& label = images.image_records[i].label_class_id;
    if (!label) {
      throw Error(ErrorCode::InvalidArgument, "image " +
                                                  std::to_string(images.image_records[i].id) +
                                                  " has no label");
    }
    auto& pc = r.per_class.at(*label);
    ++pc.total;
    ++r.total;
    if (predictions[i] == *label) {
      ++pc.correct;
      ++r.correct;
    }
  }
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

ZeroShotOutcome predict_zeroshot(const EmbeddingBundle& images, const EmbeddingBundle& texts,
                                 const FamilySet& families, PairStore* store,
                                 const RerankConfig& rerank_cfg, unsigned threads) {
  check_pairing(images, texts);
  require_class_names(families);
  auto coder = build_coder(images.features, texts.features);
  auto partition =
      ClassPartition::from_records(texts.text_records, texts.class_names.size(), families);
  ZeroShotOutcome out;
  out.results.resize(images.features.rows);
  parallel_for(images.features.rows, [&](std::size_t i) {
    try {
      auto logits = stage1_logits(coder.row(i), partition);
      if (store) {
        out.results[i] = rerank(logits, images.features.row(i), *store, rerank_cfg);
      } else {
        auto& r = out.results[i];
        r.top_k = top_k_classes(logits, std::min(rerank_cfg.top_k, logits.size()));
        r.stage1_class = r.final_class = r.top_k.front();
      }
    } catch (const Error& e) {
      throw with_image(e, images.image_records[i]);
    }
  }, threads);
  return out;
}

FewShotOutcome predict_fewshot(const EmbeddingBundle& images, const EmbeddingBundle& texts,
                               const EmbeddingBundle& support, const FewShotConfig& config,
                               unsigned threads) {
  check_pairing(images, texts);
  config.params.validate();
  auto cache = build_support_cache(support, texts, config.normalize_image_features);
  auto test_coder =
      project_onto_texts(images.features, texts.features, config.normalize_image_features);

  std::vector<ClassScores> zs;
  if (config.zs_source == ZeroShotSource::ClassName) {
    zs = class_name_logits(images.features, texts, config.logit_scale);
  } else {
    auto coder = build_coder(images.features, texts.features);
    auto partition = ClassPartition::from_records(texts.text_records, texts.class_names.size());
    zs.resize(images.features.rows);
    for (std::size_t i = 0; i < zs.size(); ++i) {
      zs[i] = stage1_logits(coder.row(i), partition);
      for (double& v : zs[i]) v *= config.logit_scale;
    }
  }

  FewShotOutcome out;
  out.zero_shot_class.resize(images.features.rows);
  out.final_class.resize(images.features.rows);
  parallel_for(images.features.rows, [&](std::size_t i) {
    try {
      out.zero_shot_class[i] = argmax(zs[i]);
      out.final_class[i] = argmax(adapt_logits(zs[i], test_coder.row(i), cache, config.params));
    } catch (const Error& e) {
      throw with_image(e, images.image_records[i]);
    }
  }, threads);
  return out;
}

Evaluation evaluate(const RunManifest& manifest) {
  auto start = std::chrono::steady_clock::now();
  auto prepared = prepare(manifest, manifest.base_dir);
  std::optional<std::vector<int>> baseline;
  auto predictions = run_masked(manifest, manifest.base_dir, prepared, manifest.config.families, &baseline);
  std::chrono::duration<double, std::milli> wall = std::chrono::steady_clock::now() - start;
  return {build_report(manifest, prepared, manifest.config.families, predictions, baseline,
                       wall.count()),
          std::move(predictions)};
}

std::vector<Report> ablation_sweep(const RunManifest& manifest,
                                   const std::vector<FamilySet>& family_sets) {
  if (family_sets.empty()) throw Error(ErrorCode::EmptyInput, "no family subsets");
  for (const auto& f : family_sets) require_class_names(f);
  auto prepared = prepare(manifest, manifest.base_dir);
  std::vector<Report> reports;
  for (const auto& families : family_sets) {
    auto start = std::chrono::steady_clock::now();
    std::optional<std::vector<int>> baseline;
    auto predictions = run_masked(manifest, manifest.base_dir, prepared, families, &baseline);
    std::chrono::duration<double, std::milli> wall = std::chrono::steady_clock::now() - start;
    reports.push_back(
        build_report(manifest, prepared, families, predictions, baseline, wall.count()));
  }
  return reports;
}

}  // namespace coder
