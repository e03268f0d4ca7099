// JSON crosses the boundary as text; the Python package converts to dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "taskalign/cli.hpp"
#include "taskalign/intent_tracker.hpp"
#include "taskalign/metrics.hpp"
#include "taskalign/simplify.hpp"
#include "taskalign/triple.hpp"

namespace py = pybind11;
using namespace taskalign;

namespace {

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& ex) {
    fail(ErrorCode::MalformedDocument, ex.what());
  }
}

RougeVariant variant(const std::string& name) {
  if (name == "1") return RougeVariant::One;
  if (name == "2") return RougeVariant::Two;
  if (name == "L" || name == "l") return RougeVariant::L;
  throw py::value_error("variant must be '1', '2' or 'L'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Intent-task alignment engine";

  static py::exception<Error> error(m, "TaskAlignError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error)(e.what());
      exc.attr("code") = py::str(std::string(error_code_name(e.code())));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("canonical_triple", [](const std::string& doc) { return to_document(validate_triple(parse(doc))); },
        "Validates a triple document and returns its canonical serialization.");
  m.def("simplify", [](const std::string& triple, const std::vector<std::string>& focus) {
    return to_json(simplify(validate_triple(parse(triple)), FocusSet(focus.begin(), focus.end()))).dump();
  });
  m.def("expand_supernode", [](const std::string& view, const std::string& id) {
    return expand_supernode(simplified_view_from_json(parse(view)), id);
  });
  m.def("diff_graphs", [](const std::string& before, const std::string& after) {
    return to_json(diff_graphs(graph_from_json(parse(before)), graph_from_json(parse(after)))).dump();
  });
  m.def("apply_updates", [](const std::string& tree, const std::string& updates) {
    auto r = apply_updates(intent_tree_from_json(parse(tree)), updates_from_json(parse(updates)));
    return py::make_tuple(to_json(r.tree).dump(), std::vector<std::string>(r.focus.begin(), r.focus.end()));
  });

  m.def("tokenize", [](const std::string& text) { return tokenize(text); });
  m.def("rouge", [](const std::string& c, const std::string& r, const std::string& v) { return rouge(c, r, variant(v)); },
        py::arg("candidate"), py::arg("reference"), py::arg("variant") = "1");
  m.def("bleu", [](const std::string& c, const std::string& r) { return bleu(c, r); });
  m.def("score_corpus", [](const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<TextPair> tp;
    for (const auto& [c, r] : pairs) tp.push_back({c, r});
    return to_json(score_corpus(tp)).dump();
  });
  m.def("speedup", [](double student, double baseline) { return speedup(student, baseline); });

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
