#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cbicl/bounds.hpp"
#include "cbicl/concept.hpp"
#include "cbicl/errors.hpp"
#include "cbicl/io.hpp"
#include "cbicl/lab.hpp"

namespace py = pybind11;
using namespace cbicl;

namespace {

DemonstrationSet make_demos(const std::vector<Matrix>& matrices, const std::vector<int>& labels) {
  if (matrices.size() != labels.size()) fail(ErrorKind::ShapeMismatch, "one label per demonstration");
  std::vector<Demonstration> items;
  for (std::size_t i = 0; i < matrices.size(); ++i)
    items.push_back({"d" + std::to_string(i), EmbeddingMatrix::from_normalized(matrices[i]), labels[i]});
  return DemonstrationSet(std::move(items));
}

py::dict as_dict(const BoundReport& r) {
  py::dict terms;
  for (const auto& [k, v] : r.terms) terms[py::str(k)] = v;
  py::dict d;
  d["theorem"] = r.theorem;
  d["bound"] = r.bound;
  d["terms"] = terms;
  return d;
}

// Reports travel as JSON text and are decoded on the Python side.
std::string report_json(const lab::VerificationReport& r) { return io::to_json(r).dump(); }

}  // namespace

PYBIND11_MODULE(_cbicl, m) {
  m.doc() = "Concept-based in-context learning core";

  static py::exception<Error> error(m, "CbiclError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def("normalize_embedding", [](const Matrix& raw) { return normalize_embedding(raw).matrix(); },
        py::arg("raw"));
  m.def("gram_query", [](const Matrix& f) { return gram_query(EmbeddingMatrix::from_normalized(f)); },
        py::arg("f"));
  m.def(
      "extract_concept",
      [](const std::vector<Matrix>& matrices, const std::vector<int>& labels, double tol) {
        return extract_concept(make_demos(matrices, labels), tol).coefficients;
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("tol_factor") = 1.0);
  m.def(
      "predict_posterior",
      [](const Vector& alpha, const Matrix& f) {
        ConceptVector c;
        c.coefficients = alpha;
        return predict_posterior(c, Query{"q", EmbeddingMatrix::from_normalized(f), std::nullopt}).values;
      },
      py::arg("alpha"), py::arg("f"));
  m.def("predict_label", [](const Vector& values) { return argmax_lowest(values); }, py::arg("values"));
  m.def(
      "similarity_score",
      [](const Matrix& fq, const Matrix& fn, double tol) { return similarity_score(fq, fn, tol).value; },
      py::arg("fq"), py::arg("fn"), py::arg("tol_factor") = 1.0);
  m.def(
      "select_golden",
      [](const std::vector<std::string>& ids, const std::vector<Matrix>& matrices, const Matrix& query,
         std::size_t k) {
        if (ids.size() != matrices.size()) fail(ErrorKind::ShapeMismatch, "one id per candidate");
        std::vector<Candidate> pool;
        for (std::size_t i = 0; i < ids.size(); ++i)
          pool.push_back({ids[i], EmbeddingMatrix::from_normalized(matrices[i])});
        std::vector<std::pair<std::string, double>> out;
        for (const auto& s : select_golden(pool, Query{"q", EmbeddingMatrix::from_normalized(query), std::nullopt}, k))
          out.emplace_back(s.candidate_id, s.value);
        return out;
      },
      py::arg("ids"), py::arg("embeddings"), py::arg("query"), py::arg("k"));
  m.def("label_covariance", &label_covariance, py::arg("p"));
  m.def("lemma1_bound", &lemma1_bound, py::arg("p"));
  m.def(
      "guarantee_lemma2",
      [](const Vector& p, double risk) -> std::optional<std::pair<int, double>> {
        const auto g = guarantee_lemma2(p, risk);
        if (!g) return std::nullopt;
        return std::make_pair(g->j, g->floor);
      },
      py::arg("p"), py::arg("risk"));
  m.def(
      "guarantee_theorem4",
      [](const Vector& p, double expected_risk) {
        const auto g = guarantee_theorem4(p, expected_risk);
        return py::make_tuple(g.j, g.gamma, g.value);
      },
      py::arg("p"), py::arg("expected_risk"));

  py::class_<SyntheticWorld>(m, "World")
      .def_readonly("seed", &SyntheticWorld::seed)
      .def_readonly("p_x", &SyntheticWorld::p_x)
      .def_readonly("alpha", &SyntheticWorld::alpha)
      .def_readonly("residual", &SyntheticWorld::residual)
      .def_readonly("conditionals", &SyntheticWorld::conditionals)
      .def_readonly("rho_achieved", &SyntheticWorld::rho_achieved)
      .def("embedding", [](const SyntheticWorld& w, std::size_t x) { return w.f(x); }, py::arg("x"))
      .def("to_json", [](const SyntheticWorld& w) { return io::world_to_json(w).dump(); });

  m.def(
      "generate_world",
      [](std::uint64_t seed, std::size_t alphabet, int labels, int features, double rho) {
        return lab::generate_world(seed, alphabet, labels, features, lab::Completeness{rho});
      },
      py::arg("seed"), py::arg("alphabet"), py::arg("labels"), py::arg("features"), py::arg("rho") = 0.0);
  m.def(
      "enumerate_risk",
      [](const SyntheticWorld& w, const std::vector<int>& demos, int query, std::size_t budget) {
        return lab::enumerate_risk(w, demos, query, budget).value;
      },
      py::arg("world"), py::arg("demos"), py::arg("query"), py::arg("budget") = 4096);
  m.def(
      "closed_form_risk",
      [](const SyntheticWorld& w, const std::vector<int>& demos, int query) {
        return lab::closed_form_risk(w, demos, query).value;
      },
      py::arg("world"), py::arg("demos"), py::arg("query"));
  m.def(
      "theorem1_bound",
      [](const SyntheticWorld& w, const std::vector<int>& demos, int query) {
        return as_dict(theorem1_bound(w, demos, query));
      },
      py::arg("world"), py::arg("demos"), py::arg("query"));
  m.def(
      "theorem2_bound",
      [](const SyntheticWorld& w, const std::vector<int>& demos, int query) {
        return as_dict(theorem2_bound(w, demos, query));
      },
      py::arg("world"), py::arg("demos"), py::arg("query"));
  m.def(
      "theorem3_bound",
      [](const SyntheticWorld& w, const std::vector<int>& demos) { return as_dict(theorem3_bound(w, demos)); },
      py::arg("world"), py::arg("demos"));
  m.def(
      "verify_json",
      [](int theorem, std::uint64_t seed, std::size_t sweeps, unsigned workers, std::size_t samples) {
        lab::TrialPlan plan;
        plan.seed = seed;
        plan.sweeps = sweeps;
        plan.workers = workers;
        plan.samples = samples;
        py::gil_scoped_release release;
        return report_json(theorem == 4 ? lab::verify_error_probability(plan) : lab::verify_theorem(plan, theorem));
      },
      py::arg("theorem"), py::arg("seed") = 0, py::arg("sweeps") = 100, py::arg("workers") = 1,
      py::arg("samples") = 100000);
}
