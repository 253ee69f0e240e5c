#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "medfact/bench.hpp"
#include "medfact/cache.hpp"
#include "medfact/cli.hpp"
#include "medfact/core.hpp"
#include "medfact/error.hpp"
#include "medfact/evidence.hpp"
#include "medfact/humaneval.hpp"
#include "medfact/report.hpp"
#include "medfact/resources.hpp"
#include "medfact/verify.hpp"

namespace py = pybind11;
using namespace medfact;

namespace {

py::dict passage_dict(const EvidencePassage& p) {
  py::dict d;
  d["source_title"] = p.source_title;
  d["chunk_index"] = p.chunk_index;
  d["text"] = p.text;
  d["score"] = p.score ? py::cast(*p.score) : py::none();
  d["rank"] = p.rank;
  return d;
}

}  // namespace

PYBIND11_MODULE(_medfact, m) {
  m.doc() = "Bindings for the medfact fact-checking library";

  static py::handle error_type = py::exception<Error>(m, "MedfactError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("canonical_id", py::overload_cast<std::string_view, std::string_view, std::string_view>(&canonical_id),
        py::arg("task"), py::arg("model_id"), py::arg("sample_id"));
  m.def("cache_key", &cache_key, py::arg("backend_id"), py::arg("model_id"), py::arg("payload"),
        py::arg("params"));

  m.def(
      "unanimous",
      [](const std::string& cot, const std::string& nli) {
        return std::string(to_string(unanimous(parse_label(cot), parse_label(nli))));
      },
      py::arg("final_cot"), py::arg("final_nli"), "Labels are 'supported', 'contradicted' or 'neutral'.");

  m.def(
      "parse_cot_response",
      [](const std::string& raw) -> py::object {
        auto r = parse_cot_response(raw);
        if (r.answer == CotAnswer::Unparseable) return py::none();
        return py::bool_(r.answer == CotAnswer::True);
      },
      py::arg("raw"), "True, False, or None when the final line is unparseable.");

  m.def(
      "render_prompt",
      [](const std::string& task, const std::string& article, const std::string& question,
         const std::vector<std::string>& snippets) {
        SampleRecord s;
        s.sample_id = "python";
        s.article = article;
        s.question = question;
        s.snippets = snippets;
        return render_prompt(parse_task(task), s);
      },
      py::arg("task"), py::arg("article") = "", py::arg("question") = "",
      py::arg("snippets") = std::vector<std::string>{});

  m.def("resource", [](const std::string& name) { return std::string(resource(name)); }, py::arg("name"));
  m.def("resource_names", [] {
    std::vector<std::string> out;
    for (auto n : resource_names()) out.emplace_back(n);
    return out;
  });

  m.def(
      "cohen_kappa",
      [](const std::vector<std::tuple<std::string, std::string, int>>& rows, int bins) {
        std::vector<AnnotationRecord> ann;
        for (const auto& [g, a, s] : rows) ann.push_back({g, a, s});
        auto r = cohen_kappa(ann, Binning::equal_width(bins));
        py::dict d;
        d["kappa"] = r.kappa;
        d["weighted_kappa"] = r.weighted_kappa;
        d["n_items"] = r.n_items;
        return d;
      },
      py::arg("annotations"), py::arg("bins") = 5,
      "annotations: (generation_id, annotator_id, score) tuples.");

  m.def(
      "correlate",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        auto r = correlate(x, y, CorrelationLevel::PerGeneration);
        py::dict d;
        d["pearson"] = r.pearson;
        d["spearman"] = r.spearman;
        d["n"] = r.n;
        return d;
      },
      py::arg("auto_scores"), py::arg("human_scores"));

  m.def(
      "emit_report",
      [](const std::string& report_json, const std::string& format) {
        return emit_report(parse_report(report_json), format);
      },
      py::arg("report_json"), py::arg("format") = "markdown");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Returns (exit_code, stdout, stderr).");

  py::class_<PassageIndex>(m, "PassageIndex")
      .def_static(
          "build",
          [](const std::vector<std::pair<std::string, std::string>>& docs, std::size_t chunk_size,
             std::size_t overlap) {
            std::vector<CorpusDocument> corpus;
            for (const auto& [t, x] : docs) corpus.push_back({t, x});
            return PassageIndex::build(corpus, ChunkParams{chunk_size, overlap});
          },
          py::arg("documents"), py::arg("chunk_size") = 256, py::arg("overlap") = 32,
          "documents: (title, text) pairs.")
      .def_static("load", [](const std::string& path) { return PassageIndex::load(path); }, py::arg("path"))
      .def("save", [](const PassageIndex& self, const std::string& path) { self.save(path); }, py::arg("path"))
      .def("serialize", &PassageIndex::serialize)
      .def("resolve_topic", &PassageIndex::resolve_topic, py::arg("topic"))
      .def(
          "retrieve",
          [](const PassageIndex& self, const std::string& query, std::size_t k,
             const std::optional<std::string>& topic) {
            py::list out;
            for (const auto& p : self.retrieve(topic, query, k)) out.append(passage_dict(p));
            return out;
          },
          py::arg("query"), py::arg("k") = 5, py::arg("topic") = py::none())
      .def("__len__", [](const PassageIndex& self) { return self.passages().size(); });
}
