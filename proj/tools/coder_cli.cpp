// coder: command-line front end for the CODER toolkit.
//
//   coder zeroshot --images imgs.codr --texts texts.codr --pairs-dir pairs/ --out p.json
//   coder fewshot  --support s.codr --images imgs.codr --texts texts.codr --out p.json
//   coder eval     --manifest run.json --out report.json
//   coder atg general --classes classes.txt --cache llm.jsonl --out texts.json
//   coder atg pairs   --classes classes.txt --cache llm.jsonl --pair 0:1 --out-dir pairs/
//   coder bundle inspect file.codr
//   coder bundle coder --images imgs.codr --texts texts.codr --out coder.codr
//
// Exit codes: 0 success, 2 pipeline error, 3 usage or manifest error.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "coder/atg/generator.hpp"
#include "coder/atg/response_parser.hpp"
#include "coder/error.hpp"
#include "coder/eval.hpp"
#include "coder/fewshot.hpp"
#include "coder/json_io.hpp"
#include "coder/zeroshot.hpp"

using namespace coder;
using nlohmann::json;

namespace {

constexpr int kExitPipeline = 2;
constexpr int kExitUsage = 3;

struct LlmFlags {
  std::string endpoint;
  std::string model = "gpt-3.5-turbo";
  std::string cache = "llm_cache.jsonl";
  double temperature = 0.7;
  int max_in_flight = 4;
  double rps = 0.0;
  bool offline = false;

  void add_to(CLI::App* app) {
    app->add_option("--llm-endpoint", endpoint, "OpenAI-compatible chat-completions URL");
    app->add_option("--llm-model", model, "Model name sent to the endpoint")
        ->capture_default_str();
    app->add_option("--cache", cache, "JSON-lines exchange cache")->capture_default_str();
    app->add_option("--temperature", temperature)->capture_default_str();
    app->add_option("--max-in-flight", max_in_flight)->capture_default_str();
    app->add_option("--requests-per-second", rps, "0 disables rate limiting");
    app->add_flag("--offline", offline, "Never contact the endpoint; cache misses fail");
  }

  std::shared_ptr<atg::LlmGateway> make() const {
    auto cache_store = std::make_shared<atg::ExchangeCache>(cache);
    std::shared_ptr<atg::LlmGateway> upstream;
    if (!offline) {
      if (endpoint.empty()) {
        throw Error(ErrorCode::InvalidArgument,
                    "--llm-endpoint is required unless --offline is given");
      }
      atg::HttpGatewayOptions opt;
      opt.endpoint = endpoint;
      opt.model = model;
      if (const char* key = std::getenv("CODER_LLM_API_KEY")) opt.api_key = key;
      opt.temperature = temperature;
      opt.max_in_flight = max_in_flight;
      opt.requests_per_second = rps;
      upstream = std::make_shared<atg::HttpChatGateway>(opt);
    }
    return std::make_shared<atg::CachingGateway>(cache_store, model, upstream);
  }
};

std::vector<std::string> read_class_names(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    auto name = atg::trim(line);
    if (!name.empty()) names.push_back(name);
  }
  if (names.empty()) throw Error(ErrorCode::EmptyInput, path + " lists no classes");
  return names;
}

FamilySet parse_families(const std::vector<std::string>& names) {
  if (names.empty()) return general_families();
  FamilySet out;
  for (const auto& n : names) out.insert(family_from_string(n));
  return out;
}

void write_output(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << dump_canonical(j);
  } else {
    write_file_atomic(path, dump_canonical(j));
  }
}

int run_zeroshot(const std::string& images_path, const std::string& texts_path,
                 const std::string& pairs_dir, const RerankConfig& cfg,
                 const std::vector<std::string>& families, const std::string& out) {
  auto images = read_bundle(images_path);
  auto texts = read_bundle(texts_path);
  std::unique_ptr<DirectoryPairStore> store;
  if (!pairs_dir.empty()) {
    store = std::make_unique<DirectoryPairStore>(pairs_dir, texts.encoder_tag);
  }
  auto outcome = predict_zeroshot(images, texts, parse_families(families), store.get(), cfg);

  json predictions = json::object();
  for (std::size_t i = 0; i < outcome.results.size(); ++i) {
    const auto& r = outcome.results[i];
    json gaps = json::array();
    for (const auto& [pair, gap] : r.gaps.entries()) {
      gaps.push_back({{"c", pair.first}, {"j", pair.second}, {"gap", gap}});
    }
    predictions[std::to_string(images.image_records[i].id)] = {
        {"stage1_top5", r.top_k},
        {"final_class", r.final_class},
        {"gated", r.gated},
        {"gaps", std::move(gaps)}};
  }
  write_output(out, predictions);
  return 0;
}

std::vector<AdapterParams> load_grid(const std::string& path) {
  auto j = json::parse(read_file(path));
  std::vector<AdapterParams> grid;
  auto point = [](const json& p) {
    AdapterParams a;
    a.alpha = p.value("alpha", a.alpha);
    a.beta = p.value("beta", a.beta);
    a.temperature = p.value("T", a.temperature);
    a.norm = norm_mode_from_string(p.value("norm", std::string("minmax")));
    a.validate();
    return a;
  };
  if (j.is_array()) {
    for (const auto& p : j) grid.push_back(point(p));
    return grid;
  }
  // Axes form: {"alpha": [...], "beta": [...], "T": [...], "norm": [...]}.
  auto axis = [&](const char* key, json fallback) {
    return j.contains(key) ? j.at(key) : json::array({fallback});
  };
  for (const auto& a : axis("alpha", 1.0)) {
    for (const auto& b : axis("beta", 5.5)) {
      for (const auto& t : axis("T", 3.0)) {
        for (const auto& n : axis("norm", "minmax")) {
          grid.push_back(point({{"alpha", a}, {"beta", b}, {"T", t}, {"norm", n}}));
        }
      }
    }
  }
  return grid;
}

int run_fewshot(const std::string& support_path, const std::string& images_path,
                const std::string& texts_path, FewShotConfig cfg, const std::string& grid_path,
                const std::string& val_path, const std::string& out) {
  auto support = read_bundle(support_path);
  auto images = read_bundle(images_path);
  auto texts = read_bundle(texts_path);

  json echo;
  if (!grid_path.empty()) {
    if (val_path.empty()) {
      throw Error(ErrorCode::InvalidArgument, "--grid needs a --val image bundle");
    }
    auto val = read_bundle(val_path);
    auto grid = load_grid(grid_path);
    ValidationSet vs;
    vs.coder = project_onto_texts(val.features, texts.features, cfg.normalize_image_features);
    vs.zs_logits = class_name_logits(val.features, texts, cfg.logit_scale);
    for (const auto& r : val.image_records) {
      if (!r.label_class_id) {
        throw Error(ErrorCode::InvalidArgument, "validation image without label");
      }
      vs.labels.push_back(*r.label_class_id);
    }
    auto cache = build_support_cache(support, texts, cfg.normalize_image_features);
    cfg.params = grid_search(grid, vs, cache);
    echo["validation_accuracy"] = adapter_accuracy(cfg.params, vs, cache);
  }

  auto outcome = predict_fewshot(images, texts, support, cfg);
  json predictions = json::object();
  for (std::size_t i = 0; i < outcome.final_class.size(); ++i) {
    predictions[std::to_string(images.image_records[i].id)] = {
        {"zero_shot_class", outcome.zero_shot_class[i]},
        {"final_class", outcome.final_class[i]}};
  }
  echo["alpha"] = cfg.params.alpha;
  echo["beta"] = cfg.params.beta;
  echo["T"] = cfg.params.temperature;
  echo["norm"] = std::string(to_string(cfg.params.norm));
  write_output(out, {{"params", echo}, {"predictions", predictions}});
  return 0;
}

int run_eval(const std::string& manifest_path, const std::string& out, bool no_timing,
             const std::vector<std::string>& ablations) {
  auto manifest = RunManifest::load(manifest_path);
  if (ablations.empty()) {
    auto result = evaluate(manifest);
    write_output(out, to_json(result.report, !no_timing));
    return 0;
  }
  std::vector<FamilySet> sets;
  for (const auto& spec : ablations) {
    std::vector<std::string> names;
    std::stringstream ss(spec);
    std::string n;
    while (std::getline(ss, n, ',')) {
      if (!atg::trim(n).empty()) names.push_back(atg::trim(n));
    }
    if (names.empty()) throw Error(ErrorCode::InvalidArgument, "empty family subset");
    sets.push_back(parse_families(names));
  }
  json reports = json::array();
  for (const auto& r : ablation_sweep(manifest, sets)) reports.push_back(to_json(r, !no_timing));
  write_output(out, reports);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CODER: cross-modal neighbor representations for CLIP-style classifiers"};
  app.require_subcommand(1);

  // zeroshot
  auto* zs = app.add_subcommand("zeroshot", "Two-stage zero-shot classification");
  std::string zs_images, zs_texts, zs_pairs, zs_out = "predictions.json";
  std::vector<std::string> zs_families;
  RerankConfig zs_cfg;
  bool zs_no_gating = false, zs_offline = false;
  zs->add_option("--images", zs_images)->required();
  zs->add_option("--texts", zs_texts)->required();
  zs->add_option("--pairs-dir", zs_pairs, "One-to-one pair bundles; omit for stage 1 only");
  zs->add_option("--top-k", zs_cfg.top_k)->capture_default_str();
  zs->add_option("--gate-margin", zs_cfg.gate_margin)->capture_default_str();
  zs->add_flag("--no-gating", zs_no_gating, "Rerank every image");
  zs->add_flag("--offline", zs_offline,
              "Missing pair bundles are errors; build them with `atg pairs` and the exporter");
  zs->add_option("--families", zs_families, "Text families used in stage 1")->delimiter(',');
  zs->add_option("--out", zs_out)->capture_default_str();

  // fewshot
  auto* fs = app.add_subcommand("fewshot", "CODER-Adapter few-shot classification");
  std::string fs_support, fs_images, fs_texts, fs_grid, fs_val, fs_out = "predictions.json";
  std::string fs_norm = "minmax", fs_zs = "class_name";
  FewShotConfig fs_cfg;
  fs->add_option("--support", fs_support)->required();
  fs->add_option("--images", fs_images)->required();
  fs->add_option("--texts", fs_texts)->required();
  fs->add_option("--alpha", fs_cfg.params.alpha)->capture_default_str();
  fs->add_option("--beta", fs_cfg.params.beta)->capture_default_str();
  fs->add_option("--T", fs_cfg.params.temperature)->capture_default_str();
  fs->add_option("--norm", fs_norm)->check(CLI::IsMember({"minmax", "l2"}))->capture_default_str();
  fs->add_option("--grid", fs_grid, "JSON grid of adapter parameters");
  fs->add_option("--val", fs_val, "Labelled image bundle for --grid");
  fs->add_flag("--normalize-image-features", fs_cfg.normalize_image_features);
  fs->add_option("--zs-source", fs_zs)->check(CLI::IsMember({"class_name", "stage1"}))
      ->capture_default_str();
  fs->add_option("--logit-scale", fs_cfg.logit_scale)->capture_default_str();
  fs->add_option("--out", fs_out)->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a run manifest");
  std::string ev_manifest, ev_out = "report.json";
  bool ev_no_timing = false;
  std::vector<std::string> ev_ablations;
  ev->add_option("--manifest", ev_manifest)->required();
  ev->add_option("--out", ev_out)->capture_default_str();
  ev->add_flag("--no-timing", ev_no_timing, "Omit wall_time_ms (reproducible output)");
  ev->add_option("--ablation", ev_ablations,
                 "Comma-separated family subset; repeat for a sweep");

  // atg
  auto* atg_cmd = app.add_subcommand("atg", "Auto Text Generator");
  atg_cmd->require_subcommand(1);
  auto* gen = atg_cmd->add_subcommand("general", "Build the general text set");
  std::string gen_classes, gen_templates, gen_synonyms, gen_wordnet, gen_names,
      gen_out = "texts.json";
  std::vector<std::string> gen_families;
  std::size_t gen_attributes = 10, gen_analogous = 5;
  double gen_threshold = 0.85;
  LlmFlags gen_llm;
  gen->add_option("--classes", gen_classes, "One class name per line")->required();
  gen->add_option("--templates", gen_templates, "Template JSON (default built-ins)");
  gen->add_option("--synonyms", gen_synonyms, "TSV synonym file");
  gen->add_option("--wordnet", gen_wordnet, "WordNet data.noun file");
  gen->add_option("--name-features", gen_names, "Text bundle of encoded class-name strings");
  gen->add_option("--families", gen_families, "Text families to generate")->delimiter(',');
  gen->add_option("--attributes", gen_attributes)->capture_default_str();
  gen->add_option("--analogous", gen_analogous)->capture_default_str();
  gen->add_option("--threshold", gen_threshold)->capture_default_str();
  gen->add_option("--out", gen_out)->capture_default_str();
  gen_llm.add_to(gen);

  auto* pairs = atg_cmd->add_subcommand("pairs", "Build one-to-one text sets");
  std::string pr_classes, pr_templates, pr_store = "one_to_one.json", pr_out_dir = "pairs";
  std::vector<std::string> pr_pairs;
  std::size_t pr_cap = 10;
  LlmFlags pr_llm;
  pairs->add_option("--classes", pr_classes)->required();
  pairs->add_option("--templates", pr_templates);
  pairs->add_option("--store", pr_store, "Persistent one-to-one store")->capture_default_str();
  pairs->add_option("--pair", pr_pairs, "Class ids as a:b; repeatable")->required();
  pairs->add_option("--max-per-side", pr_cap)->capture_default_str();
  pairs->add_option("--out-dir", pr_out_dir)->capture_default_str();
  pr_llm.add_to(pairs);

  // bundle
  auto* bundle = app.add_subcommand("bundle", "Bundle utilities");
  bundle->require_subcommand(1);
  auto* inspect = bundle->add_subcommand("inspect", "Print a bundle's header and metadata");
  std::string inspect_path;
  inspect->add_option("path", inspect_path)->required();
  auto* dump = bundle->add_subcommand("coder", "Write the CODER matrix as a coder bundle");
  std::string dump_images, dump_texts, dump_out;
  dump->add_option("--images", dump_images)->required();
  dump->add_option("--texts", dump_texts)->required();
  dump->add_option("--out", dump_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*zs) {
      zs_cfg.gating = !zs_no_gating;
      return run_zeroshot(zs_images, zs_texts, zs_pairs, zs_cfg, zs_families, zs_out);
    }
    if (*fs) {
      fs_cfg.params.norm = norm_mode_from_string(fs_norm);
      fs_cfg.zs_source =
          fs_zs == "class_name" ? ZeroShotSource::ClassName : ZeroShotSource::Stage1;
      return run_fewshot(fs_support, fs_images, fs_texts, fs_cfg, fs_grid, fs_val, fs_out);
    }
    if (*ev) return run_eval(ev_manifest, ev_out, ev_no_timing, ev_ablations);
    if (*gen) {
      atg::TextSetSpec spec;
      spec.class_names = read_class_names(gen_classes);
      spec.families_enabled = gen_families.empty() ? general_families()
                                                   : parse_families(gen_families);
      spec.per_family_counts[Family::Attribute] = gen_attributes;
      spec.per_family_counts[Family::AnalogousClass] = gen_analogous;
      spec.similarity_threshold = gen_threshold;
      spec.max_in_flight = gen_llm.max_in_flight;
      auto templates = gen_templates.empty() ? atg::TemplateSet::defaults()
                                             : atg::TemplateSet::load(gen_templates);
      std::unique_ptr<atg::SynonymProvider> synonyms;
      if (!gen_wordnet.empty()) {
        synonyms = std::make_unique<atg::WordNetSynonymProvider>(gen_wordnet);
      } else if (!gen_synonyms.empty()) {
        synonyms = std::make_unique<atg::TsvSynonymProvider>(gen_synonyms);
      }
      std::optional<atg::NameEmbeddings> names;
      if (!gen_names.empty()) names = atg::NameEmbeddings::from_bundle(read_bundle(gen_names));
      auto gateway = gen_llm.make();
      auto records = atg::assemble_general_text_set(spec, *gateway, synonyms.get(), templates,
                                                    names ? &*names : nullptr);
      write_text_set({spec.class_names, records}, gen_out);
      std::cerr << records.size() << " texts written to " << gen_out << '\n';
      return 0;
    }
    if (*pairs) {
      auto classes = read_class_names(pr_classes);
      auto templates = pr_templates.empty() ? atg::TemplateSet::defaults()
                                            : atg::TemplateSet::load(pr_templates);
      auto gateway = pr_llm.make();
      atg::OneToOneStore store(pr_store);
      std::filesystem::create_directories(pr_out_dir);
      for (const auto& p : pr_pairs) {
        auto colon = p.find(':');
        if (colon == std::string::npos) {
          throw Error(ErrorCode::InvalidArgument, "--pair expects a:b, got '" + p + "'");
        }
        int a = std::stoi(p.substr(0, colon)), b = std::stoi(p.substr(colon + 1));
        auto texts = atg::build_one_to_one_texts(a, b, classes, *gateway, store, templates,
                                                 pr_cap);
        TextSet set{classes, texts.first};
        set.records.insert(set.records.end(), texts.second.begin(), texts.second.end());
        auto path = DirectoryPairStore::file_for(pr_out_dir, a, b).replace_extension(".json");
        write_text_set(set, path);
        std::cerr << path.string() << ": " << set.records.size() << " texts"
                  << (texts.retrieved_from_cache ? " (stored)" : "") << '\n';
      }
      return 0;
    }
    if (*inspect) {
      auto b = read_bundle(inspect_path);
      json summary{{"kind", std::string(to_string(b.kind))},
                   {"rows", b.features.rows},
                   {"dim", b.features.dim},
                   {"normalized", b.features.normalized},
                   {"encoder_tag", b.encoder_tag},
                   {"classes", b.class_names.size()}};
      if (!b.text_records.empty()) {
        json families = json::object();
        for (const auto& r : b.text_records) {
          auto key = std::string(to_string(r.family));
          families[key] = families.value(key, 0) + 1;
        }
        summary["text_families"] = families;
      }
      std::cout << dump_canonical(summary);
      return 0;
    }
    if (*dump) {
      auto images = read_bundle(dump_images);
      auto texts = read_bundle(dump_texts);
      auto m = build_coder(images.features, texts.features);
      EmbeddingBundle out;
      out.kind = BundleKind::Coder;
      out.features = FeatureMatrix(m.rows, m.cols, std::move(m.values));
      out.image_records = images.image_records;
      out.text_records = texts.text_records;
      out.class_names = texts.class_names;
      out.encoder_tag = texts.encoder_tag;
      write_bundle(out, dump_out);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::Manifest ? kExitUsage : kExitPipeline;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitUsage;
}
