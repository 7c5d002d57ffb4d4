#include "coder/atg/generator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "coder/atg/response_parser.hpp"
#include "coder/error.hpp"
#include "coder/log.hpp"

namespace coder::atg {

namespace {

std::string prompt_for(const char* pattern, const std::string& class_name) {
  return fill(pattern, {{kClass, class_name}});
}

void renumber(std::vector<TextRecord>& records) {
  std::int64_t id = 0;
  for (auto& r : records) r.id = id++;
}

std::vector<TextRecord> attribute_records(int class_id, const std::string& class_name,
                                          const std::string& reply,
                                          const TemplateSet& templates,
                                          std::size_t max_count) {
  auto attributes = parse_list_response(reply);
  if (attributes.size() > max_count) attributes.resize(max_count);
  std::vector<TextRecord> out;
  for (const auto& attribute : attributes) {
    for (const auto* t : templates.for_family(Family::Attribute)) {
      out.push_back({0, t->render({{kClass, class_name}, {kAttribute, attribute}}),
                     Family::Attribute, class_id, std::nullopt, t->template_id});
    }
  }
  renumber(out);
  return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    dot += static_cast<double>(a[d]) * b[d];
    na += static_cast<double>(a[d]) * a[d];
    nb += static_cast<double>(b[d]) * b[d];
  }
  if (na < kDegenerateNorm * kDegenerateNorm || nb < kDegenerateNorm * kDegenerateNorm) {
    throw Error(ErrorCode::DegenerateFeature, "name feature with near-zero norm");
  }
  return dot / std::sqrt(na * nb);
}

bool matches_any_name(const std::string& candidate,
                      std::span<const std::string> class_names) {
  auto folded = to_lower(trim(candidate));
  return std::any_of(class_names.begin(), class_names.end(), [&](const auto& n) {
    return to_lower(trim(n)) == folded;
  });
}

// Applies filter_analogous to the candidates that have name features and
// exact-name filtering to the rest.
std::vector<std::string> filter_with_names(const std::vector<std::string>& candidates,
                                           const std::vector<std::string>& class_names,
                                           const NameEmbeddings* names,
                                           double threshold) {
  bool have_classes =
      names && std::all_of(class_names.begin(), class_names.end(),
                           [&](const auto& n) { return names->find(n) != nullptr; });
  std::vector<std::string> embedded;
  if (have_classes) {
    for (const auto& c : candidates) {
      if (names->find(c)) embedded.push_back(c);
    }
  }
  std::vector<std::string> kept_embedded;
  if (!embedded.empty()) {
    FeatureMatrix m;
    m.dim = names->dim();
    for (const auto& n : embedded) {
      auto* v = names->find(n);
      m.data.insert(m.data.end(), v->begin(), v->end());
    }
    for (const auto& n : class_names) {
      auto* v = names->find(n);
      m.data.insert(m.data.end(), v->begin(), v->end());
    }
    m.rows = embedded.size() + class_names.size();
    kept_embedded = filter_analogous(embedded, class_names, m, threshold);
  }
  std::set<std::string> embedded_set(embedded.begin(), embedded.end());
  std::set<std::string> kept_set(kept_embedded.begin(), kept_embedded.end());
  std::vector<std::string> out;
  for (const auto& c : candidates) {
    if (embedded_set.contains(c)) {
      if (kept_set.contains(c)) out.push_back(c);
    } else if (!matches_any_name(c, class_names)) {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

void TextSetSpec::validate() const {
  if (class_names.empty()) throw Error(ErrorCode::EmptyInput, "no class names");
  for (const auto& n : class_names) {
    if (trim(n).empty()) throw Error(ErrorCode::EmptyInput, "empty class name");
  }
  if (!families_enabled.contains(Family::ClassName)) {
    throw Error(ErrorCode::InvalidArgument, "class-name texts must be enabled");
  }
  if (families_enabled.contains(Family::OneToOne)) {
    throw Error(ErrorCode::InvalidArgument,
                "one-to-one texts are never part of a general text set");
  }
  for (Family f : families_enabled) {
    auto it = per_family_counts.find(f);
    if (it != per_family_counts.end() && it->second < 1) {
      throw Error(ErrorCode::InvalidArgument,
                  "count for " + std::string(to_string(f)) + " must be >= 1");
    }
  }
  if (!(similarity_threshold >= 0.0 && similarity_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "similarity threshold outside [0, 1]");
  }
}

std::size_t TextSetSpec::cap(Family family) const {
  auto it = per_family_counts.find(family);
  return it == per_family_counts.end() ? SIZE_MAX : it->second;
}

NameEmbeddings NameEmbeddings::from_bundle(const EmbeddingBundle& bundle) {
  NameEmbeddings out;
  auto unit = normalize_rows(bundle.features);
  out.dim_ = unit.dim;
  for (std::size_t i = 0; i < bundle.text_records.size(); ++i) {
    auto row = unit.row(i);
    out.vectors_.emplace(to_lower(trim(bundle.text_records[i].text)),
                         std::vector<float>(row.begin(), row.end()));
  }
  return out;
}

const std::vector<float>* NameEmbeddings::find(const std::string& name) const {
  auto it = vectors_.find(to_lower(trim(name)));
  return it == vectors_.end() ? nullptr : &it->second;
}

std::vector<TextRecord> build_class_name_texts(const TextSetSpec& spec,
                                               const TemplateSet& templates) {
  if (spec.class_names.empty()) throw Error(ErrorCode::EmptyInput, "no class names");
  auto class_templates = templates.for_family(Family::ClassName);
  if (class_templates.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no class-name templates");
  }
  std::vector<TextRecord> out;
  for (std::size_t c = 0; c < spec.class_names.size(); ++c) {
    const auto& name = spec.class_names[c];
    if (trim(name).empty()) throw Error(ErrorCode::EmptyInput, "empty class name");
    for (const auto* t : class_templates) {
      out.push_back({0, t->render({{kClass, name}}), Family::ClassName,
                     static_cast<int>(c), std::nullopt, t->template_id});
    }
  }
  renumber(out);
  return out;
}

std::vector<std::string> query_analogous_classes(const std::string& class_name,
                                                 LlmGateway& gateway) {
  if (trim(class_name).empty()) throw Error(ErrorCode::EmptyInput, "empty class name");
  auto exchange = gateway.complete(prompt_for(kAnalogousPrompt, class_name));
  return parse_class_list_response(exchange.response);
}

std::vector<std::string> filter_analogous(std::span<const std::string> candidates,
                                          std::span<const std::string> dataset_class_names,
                                          const FeatureMatrix& name_features,
                                          double threshold) {
  if (name_features.rows != candidates.size() + dataset_class_names.size() ||
      name_features.data.size() != name_features.rows * name_features.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(name_features.rows) + " name features for " +
                    std::to_string(candidates.size()) + " candidates and " +
                    std::to_string(dataset_class_names.size()) + " classes");
  }
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (matches_any_name(candidates[i], dataset_class_names)) continue;
    bool too_close = false;
    for (std::size_t j = 0; j < dataset_class_names.size() && !too_close; ++j) {
      too_close = cosine(name_features.row(i),
                         name_features.row(candidates.size() + j)) >= threshold;
    }
    if (!too_close) kept.push_back(candidates[i]);
  }
  return kept;
}

std::vector<TextRecord> build_analogous_texts(int class_id, const std::string& class_name,
                                              std::span<const std::string> kept,
                                              const TemplateSet& templates) {
  std::vector<TextRecord> out;
  for (const auto& analog : kept) {
    for (const auto* t : templates.for_family(Family::AnalogousClass)) {
      out.push_back({0, t->render({{kClass, class_name}, {kAnalogousClass, analog}}),
                     Family::AnalogousClass, class_id, std::nullopt, t->template_id});
    }
  }
  renumber(out);
  return out;
}

std::vector<TextRecord> build_synonym_texts(int class_id, const std::string& class_name,
                                            const SynonymProvider& synonyms,
                                            const TemplateSet& templates) {
  if (synonyms.sense_count(class_name) > 1) {
    warn("class '" + class_name + "' has " +
         std::to_string(synonyms.sense_count(class_name)) +
         " senses; consider a more specific class name");
  }
  auto self = to_lower(trim(class_name));
  std::vector<TextRecord> out;
  for (const auto& syn : synonyms.synonyms(class_name)) {
    if (to_lower(trim(syn)) == self) continue;
    for (const auto* t : templates.for_family(Family::Synonym)) {
      out.push_back({0, t->render({{kSynonymClass, syn}}), Family::Synonym, class_id,
                     std::nullopt, t->template_id});
    }
  }
  renumber(out);
  return out;
}

std::vector<TextRecord> build_attribute_texts(int class_id, const std::string& class_name,
                                              LlmGateway& gateway,
                                              const TemplateSet& templates,
                                              std::size_t max_count) {
  if (trim(class_name).empty()) throw Error(ErrorCode::EmptyInput, "empty class name");
  auto exchange = gateway.complete(prompt_for(kAttributePrompt, class_name));
  return attribute_records(class_id, class_name, exchange.response, templates, max_count);
}

OneToOneTexts build_one_to_one_texts(int class_a, int class_b,
                                     std::span<const std::string> class_names,
                                     LlmGateway& gateway, OneToOneStore& store,
                                     const TemplateSet& templates,
                                     std::size_t max_per_side) {
  auto in_range = [&](int c) {
    return c >= 0 && static_cast<std::size_t>(c) < class_names.size();
  };
  if (!in_range(class_a) || !in_range(class_b)) {
    throw Error(ErrorCode::InvalidArgument, "class id out of range");
  }
  const auto& name_a = class_names[class_a];
  const auto& name_b = class_names[class_b];
  if (class_a == class_b || to_lower(trim(name_a)) == to_lower(trim(name_b))) {
    throw Error(ErrorCode::IdenticalClasses,
                "cannot contrast '" + name_a + "' with itself");
  }

  OneToOneTexts out;
  OneToOneStore::Sides sides;
  if (auto stored = store.find(name_a, name_b)) {
    sides = std::move(*stored);
    out.retrieved_from_cache = true;
  } else {
    auto exchange = gateway.complete(
        fill(kOneToOnePrompt, {{kClass1, name_a}, {kClass2, name_b}}));
    sides = parse_one_to_one_response(exchange.response, name_a, name_b);
    if (sides.first.size() > max_per_side) sides.first.resize(max_per_side);
    if (sides.second.size() > max_per_side) sides.second.resize(max_per_side);
    store.put(name_a, name_b, sides);
  }

  std::int64_t id = 0;
  auto emit = [&](std::vector<TextRecord>& dst, const std::vector<std::string>& texts,
                  int self, int other) {
    for (const auto& text : texts) {
      for (const auto* t : templates.for_family(Family::OneToOne)) {
        dst.push_back({id++,
                       t->render({{kOneToOneText, text},
                                  {kClass1, class_names[self]},
                                  {kClass2, class_names[other]}}),
                       Family::OneToOne, self, other, t->template_id});
      }
    }
  };
  emit(out.first, sides.first, class_a, class_b);
  emit(out.second, sides.second, class_b, class_a);
  return out;
}

std::vector<TextRecord> assemble_general_text_set(const TextSetSpec& spec,
                                                  LlmGateway& gateway,
                                                  const SynonymProvider* synonyms,
                                                  const TemplateSet& templates,
                                                  const NameEmbeddings* names) {
  spec.validate();
  const auto& classes = spec.class_names;
  bool want_att = spec.families_enabled.contains(Family::Attribute);
  bool want_ana = spec.families_enabled.contains(Family::AnalogousClass);
  bool want_syn = spec.families_enabled.contains(Family::Synonym);

  std::vector<std::string> prompts;
  std::map<std::string, std::size_t> prompt_index;
  auto enqueue = [&](const std::string& p) {
    if (prompt_index.emplace(p, prompts.size()).second) prompts.push_back(p);
  };
  for (const auto& name : classes) {
    if (want_att) enqueue(prompt_for(kAttributePrompt, name));
    if (want_ana) enqueue(prompt_for(kAnalogousPrompt, name));
  }
  auto replies = complete_all(gateway, prompts, spec.max_in_flight);
  auto reply_for = [&](const std::string& prompt) -> const std::string& {
    const auto& r = replies[prompt_index.at(prompt)];
    if (r.error) std::rethrow_exception(r.error);
    return r.exchange->response;
  };
  auto attempt = [&](const std::string& what, const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      warn("skipping " + what + " texts for '" + name + "': " + e.what());
    }
  };

  if (names == nullptr && want_ana) {
    warn("no name features supplied; analogous classes are filtered by exact name only");
  }

  std::vector<TextRecord> all = build_class_name_texts(spec, templates);
  for (auto& r : all) r.id = -1;
  std::vector<TextRecord> generated;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& name = classes[c];
    int cid = static_cast<int>(c);
    for (const auto& r : all) {
      if (r.class_id == cid) generated.push_back(r);
    }
    if (want_att) {
      attempt("attribute", name, [&] {
        auto recs = attribute_records(cid, name, reply_for(prompt_for(kAttributePrompt, name)),
                                      templates, spec.cap(Family::Attribute));
        generated.insert(generated.end(), recs.begin(), recs.end());
      });
    }
    if (want_ana) {
      attempt("analogous-class", name, [&] {
        auto candidates =
            parse_class_list_response(reply_for(prompt_for(kAnalogousPrompt, name)));
        auto kept = filter_with_names(candidates, classes, names, spec.similarity_threshold);
        if (kept.size() > spec.cap(Family::AnalogousClass)) {
          kept.resize(spec.cap(Family::AnalogousClass));
        }
        auto recs = build_analogous_texts(cid, name, kept, templates);
        generated.insert(generated.end(), recs.begin(), recs.end());
      });
    }
    if (want_syn) {
      if (synonyms == nullptr) {
        if (c == 0) warn("synonym texts enabled but no synonym provider given");
      } else {
        attempt("synonym", name, [&] {
          auto recs = build_synonym_texts(cid, name, *synonyms, templates);
          generated.insert(generated.end(), recs.begin(), recs.end());
        });
      }
    }
  }

  std::set<std::string> seen;
  std::vector<TextRecord> out;
  for (auto& r : generated) {
    if (seen.insert(r.text).second) out.push_back(std::move(r));
  }
  renumber(out);
  std::stable_sort(out.begin(), out.end(), [](const TextRecord& a, const TextRecord& b) {
    return std::tuple(a.class_id, a.family, a.id) < std::tuple(b.class_id, b.family, b.id);
  });
  return out;
}

}  // namespace coder::atg
