#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "coder/atg/generator.hpp"
#include "coder/coder_core.hpp"
#include "coder/error.hpp"
#include "coder/eval.hpp"
#include "coder/fewshot.hpp"
#include "coder/json_io.hpp"
#include "coder/zeroshot.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_python(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

json from_python(const py::handle& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

coder::FeatureMatrix matrix_from(const FloatArray& a, bool normalized = false) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  auto rows = static_cast<std::size_t>(a.shape(0));
  auto dim = static_cast<std::size_t>(a.shape(1));
  return {rows, dim, std::vector<float>(a.data(), a.data() + rows * dim), normalized};
}

FloatArray array_from(const std::vector<float>& data, std::size_t rows, std::size_t cols) {
  FloatArray out({rows, cols});
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

coder::FamilySet families_from(const std::optional<std::vector<std::string>>& names) {
  if (!names) return coder::general_families();
  coder::FamilySet out;
  for (const auto& n : *names) out.insert(coder::family_from_string(n));
  return out;
}

std::vector<coder::TextRecord> text_records_from(const py::handle& records) {
  std::vector<coder::TextRecord> out;
  for (const auto& r : from_python(records)) out.push_back(coder::text_record_from_json(r));
  return out;
}

py::dict bundle_to_dict(const coder::EmbeddingBundle& b) {
  py::dict d;
  d["kind"] = std::string(coder::to_string(b.kind));
  d["features"] = array_from(b.features.data, b.features.rows, b.features.dim);
  d["normalized"] = b.features.normalized;
  d["class_names"] = b.class_names;
  d["encoder_tag"] = b.encoder_tag;
  json texts = json::array(), images = json::array();
  for (const auto& r : b.text_records) texts.push_back(coder::to_json(r));
  for (const auto& r : b.image_records) images.push_back(coder::to_json(r));
  if (b.kind == coder::BundleKind::Text) {
    d["records"] = to_python(texts);
  } else {
    d["records"] = to_python(images);
  }
  if (b.kind == coder::BundleKind::Coder) d["columns"] = to_python(texts);
  return d;
}

coder::EmbeddingBundle bundle_from_dict(const py::dict& d) {
  coder::EmbeddingBundle b;
  b.kind = coder::bundle_kind_from_string(d["kind"].cast<std::string>());
  bool normalized = d.contains("normalized") && d["normalized"].cast<bool>();
  b.features = matrix_from(d["features"].cast<FloatArray>(), normalized);
  b.class_names = d["class_names"].cast<std::vector<std::string>>();
  b.encoder_tag = d.contains("encoder_tag") ? d["encoder_tag"].cast<std::string>() : "";
  if (b.kind == coder::BundleKind::Text) {
    b.text_records = text_records_from(d["records"]);
  } else {
    for (const auto& r : from_python(d["records"])) {
      b.image_records.push_back(coder::image_record_from_json(r));
    }
  }
  if (b.kind == coder::BundleKind::Coder) b.text_records = text_records_from(d["columns"]);
  return b;
}

coder::AdapterParams adapter_params(double alpha, double beta, double temperature,
                                    const std::string& norm) {
  return {alpha, beta, temperature, coder::norm_mode_from_string(norm)};
}

// Support cache straight from arrays: rows are support CODERs, labels their classes.
coder::SupportCache support_cache(const FloatArray& support, const std::vector<int>& labels,
                                  std::size_t num_classes) {
  auto m = matrix_from(support);
  if (labels.size() != m.rows) throw py::value_error("one label per support row required");
  coder::SupportCache cache;
  cache.coder = {m.rows, m.dim, std::move(m.data)};
  cache.num_classes = num_classes;
  cache.label_ids = labels;
  cache.labels.assign(m.rows * num_classes, 0.0f);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= num_classes) {
      throw py::value_error("support label out of range");
    }
    cache.labels[n * num_classes + labels[n]] = 1.0f;
  }
  return cache;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CODER: cross-modal neighbor representations for CLIP-style classifiers.";

  // Kept alive for the interpreter's lifetime; the translator raises
  // instances carrying the error code.
  static PyObject* error_type =
      py::exception<coder::Error>(m, "CoderError", PyExc_RuntimeError).inc_ref().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const coder::Error& e) {
      py::object instance = py::reinterpret_borrow<py::object>(error_type)(e.what());
      instance.attr("code") = std::string(coder::to_string(e.code()));
      PyErr_SetObject(error_type, instance.ptr());
    }
  });

  m.def("read_bundle",
        [](const std::filesystem::path& path) { return bundle_to_dict(coder::read_bundle(path)); },
        py::arg("path"), "Read a bundle file into a dict with a float32 'features' array.");
  m.def("write_bundle",
        [](const std::filesystem::path& path, const py::dict& bundle) {
          coder::write_bundle(bundle_from_dict(bundle), path);
        },
        py::arg("path"), py::arg("bundle"),
        "Write a bundle dict (as returned by read_bundle) in canonical form.");

  m.def("build_coder",
        [](const FloatArray& images, const FloatArray& texts) {
          auto c = coder::build_coder(matrix_from(images), matrix_from(texts));
          return array_from(c.values, c.rows, c.cols);
        },
        py::arg("images"), py::arg("texts"), "Cosine of every image row to every text row.");

  m.def("stage1_logits",
        [](const FloatArray& coder_rows, const py::list& records, std::size_t num_classes,
           std::optional<std::vector<std::string>> families) {
          auto c = matrix_from(coder_rows);
          auto recs = text_records_from(records);
          auto partition =
              coder::ClassPartition::from_records(recs, num_classes, families_from(families));
          std::vector<float> out;
          for (std::size_t i = 0; i < c.rows; ++i) {
            for (double v : coder::stage1_logits(c.row(i), partition)) {
              out.push_back(static_cast<float>(v));
            }
          }
          return array_from(out, c.rows, num_classes);
        },
        py::arg("coder"), py::arg("records"), py::arg("num_classes"),
        py::arg("families") = py::none(),
        "Per-class heuristic logits for each CODER row.");

  m.def("predict_zeroshot",
        [](const std::filesystem::path& images, const std::filesystem::path& texts,
           std::optional<std::filesystem::path> pairs_dir, std::size_t top_k,
           double gate_margin, bool gating, std::optional<std::vector<std::string>> families,
           unsigned threads) {
          auto image_bundle = coder::read_bundle(images);
          auto text_bundle = coder::read_bundle(texts);
          coder::RerankConfig cfg{top_k, gate_margin, gating};
          std::unique_ptr<coder::DirectoryPairStore> store;
          if (pairs_dir) {
            store = std::make_unique<coder::DirectoryPairStore>(*pairs_dir,
                                                                text_bundle.encoder_tag);
          }
          coder::ZeroShotOutcome outcome;
          {
            py::gil_scoped_release release;
            outcome = coder::predict_zeroshot(image_bundle, text_bundle,
                                              families_from(families), store.get(), cfg,
                                              threads);
          }
          py::list out;
          for (std::size_t i = 0; i < outcome.results.size(); ++i) {
            const auto& r = outcome.results[i];
            py::dict d;
            d["id"] = image_bundle.image_records[i].id;
            d["top_k"] = r.top_k;
            d["stage1_class"] = r.stage1_class;
            d["final_class"] = r.final_class;
            d["gated"] = r.gated;
            out.append(d);
          }
          return out;
        },
        py::arg("images"), py::arg("texts"), py::arg("pairs_dir") = py::none(),
        py::arg("top_k") = 5, py::arg("gate_margin") = 0.02, py::arg("gating") = true,
        py::arg("families") = py::none(), py::arg("threads") = 0,
        "Stage-1 classification, reranked with one-to-one texts when pairs_dir is given.");

  m.def("affinity",
        [](const FloatArray& coder_row, const FloatArray& support, const std::vector<int>& labels,
           std::size_t num_classes, double alpha, double beta, double temperature,
           const std::string& norm) {
          auto cache = support_cache(support, labels, num_classes);
          std::vector<float> s(coder_row.data(), coder_row.data() + coder_row.size());
          return coder::affinity(s, cache, adapter_params(alpha, beta, temperature, norm));
        },
        py::arg("coder_row"), py::arg("support"), py::arg("labels"), py::arg("num_classes"),
        py::arg("alpha") = 1.0, py::arg("beta") = 5.5, py::arg("T") = 3.0,
        py::arg("norm") = "minmax");

  m.def("adapt_logits",
        [](const DoubleArray& zs, const FloatArray& coder_row, const FloatArray& support,
           const std::vector<int>& labels, double alpha, double beta, double temperature,
           const std::string& norm) {
          std::vector<double> z(zs.data(), zs.data() + zs.size());
          auto cache = support_cache(support, labels, z.size());
          std::vector<float> s(coder_row.data(), coder_row.data() + coder_row.size());
          return coder::adapt_logits(z, s, cache, adapter_params(alpha, beta, temperature, norm));
        },
        py::arg("zs_logits"), py::arg("coder_row"), py::arg("support"), py::arg("labels"),
        py::arg("alpha") = 1.0, py::arg("beta") = 5.5, py::arg("T") = 3.0,
        py::arg("norm") = "minmax", "alpha * A . L_train + zs_logits.");

  m.def("evaluate",
        [](const std::filesystem::path& manifest, bool include_wall_time) {
          auto run = coder::RunManifest::load(manifest);
          coder::Evaluation evaluation;
          {
            py::gil_scoped_release release;
            evaluation = coder::evaluate(run);
          }
          return to_python(coder::to_json(evaluation.report, include_wall_time));
        },
        py::arg("manifest"), py::arg("include_wall_time") = true,
        "Run a manifest and return its report.");

  m.def("assemble_general_text_set",
        [](const std::vector<std::string>& class_names, const std::filesystem::path& cache,
           const std::string& model, std::optional<std::filesystem::path> synonyms,
           std::optional<std::vector<std::string>> families, double threshold) {
          coder::atg::TextSetSpec spec;
          spec.class_names = class_names;
          spec.families_enabled = families_from(families);
          spec.similarity_threshold = threshold;
          coder::atg::CachingGateway offline(
              std::make_shared<coder::atg::ExchangeCache>(cache), model);
          std::optional<coder::atg::TsvSynonymProvider> provider;
          if (synonyms) provider.emplace(*synonyms);
          auto records = coder::atg::assemble_general_text_set(
              spec, offline, provider ? &*provider : nullptr,
              coder::atg::TemplateSet::defaults());
          json out = json::array();
          for (const auto& r : records) out.push_back(coder::to_json(r));
          return to_python(out);
        },
        py::arg("class_names"), py::arg("cache"), py::arg("model") = "gpt-3.5-turbo",
        py::arg("synonyms") = py::none(), py::arg("families") = py::none(),
        py::arg("threshold") = 0.85,
        "General text set built offline from a cache of stored model replies.");
}
