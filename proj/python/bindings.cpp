#include <memory>
#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "l0recon/error.hpp"
#include "l0recon/operators.hpp"
#include "l0recon/reformulation.hpp"
#include "l0recon/smlm.hpp"
#include "l0recon/solvers.hpp"

namespace py = pybind11;
using namespace l0recon;

namespace {

PenaltyMode pick_mode(std::optional<Index> k, std::optional<double> lam) {
  if (k.has_value() == lam.has_value()) {
    throw std::invalid_argument("pass exactly one of k (constrained) or lam (penalized)");
  }
  if (k) return Constrained{*k};
  return Penalized{*lam};
}

Algorithm pick_algo(const std::string& name) {
  if (name == "biconvex") return Algorithm::kBiconvex;
  if (name == "iht") return Algorithm::kIht;
  throw std::invalid_argument("algo must be 'biconvex' or 'iht'");
}

py::dict trace_dict(const SolveTrace& t) {
  py::list rows;
  for (const auto& r : t.records) {
    py::dict row;
    row["rho"] = r.rho;
    row["pam_iters"] = r.pam_iters;
    row["fista_iters"] = r.fista_iters;
    row["g_rho"] = r.g_rho;
    row["gap"] = r.gap;
    row["l0"] = r.l0;
    row["pam_converged"] = r.pam_converged;
    row["fista_converged"] = r.fista_converged;
    rows.append(row);
  }
  py::dict out;
  out["records"] = rows;
  out["rho_threshold"] = t.rho_threshold;
  out["rho_max"] = t.rho_max;
  out["converged"] = t.converged();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exact biconvex l2-l0 reconstruction";

  py::register_exception<SizeError>(m, "SizeError", PyExc_ValueError);
  py::register_exception<IndexError>(m, "IndexError", PyExc_IndexError);

  py::class_<LinearOp, std::shared_ptr<LinearOp>>(m, "LinearOp")
      .def_property_readonly("rows", &LinearOp::rows)
      .def_property_readonly("cols", &LinearOp::cols)
      .def("apply", py::overload_cast<const Vector&>(&LinearOp::apply, py::const_), py::arg("x"))
      .def("adjoint", py::overload_cast<const Vector&>(&LinearOp::adjoint, py::const_),
           py::arg("y"));

  py::class_<DenseOperator, LinearOp, std::shared_ptr<DenseOperator>>(m, "DenseOperator")
      .def(py::init<Matrix>(), py::arg("matrix"))
      .def_property_readonly("matrix", &DenseOperator::matrix);

  py::class_<SmlmParams>(m, "SmlmParams")
      .def(py::init<>())
      .def(py::init([](int coarse_size, int zoom, double fwhm_nm, double pixel_nm) {
             return SmlmParams{coarse_size, zoom, fwhm_nm, pixel_nm};
           }),
           py::arg("coarse_size") = 32, py::arg("zoom") = 4, py::arg("fwhm_nm") = 258.21,
           py::arg("pixel_nm") = 100.0)
      .def_readwrite("coarse_size", &SmlmParams::coarse_size)
      .def_readwrite("zoom", &SmlmParams::zoom)
      .def_readwrite("fwhm_nm", &SmlmParams::fwhm_nm)
      .def_readwrite("pixel_nm", &SmlmParams::pixel_nm)
      .def_property_readonly("fine_size", &SmlmParams::fine_size)
      .def_property_readonly("fine_pixel_nm", &SmlmParams::fine_pixel_nm);

  py::class_<SmlmOperator, LinearOp, std::shared_ptr<SmlmOperator>>(m, "SmlmOperator")
      .def(py::init<const SmlmParams&>(), py::arg("params") = SmlmParams{})
      .def_property_readonly("params", &SmlmOperator::params)
      .def_property_readonly("taps", &SmlmOperator::taps)
      .def_property_readonly("factor", &SmlmOperator::factor)
      .def("fine_pixel_center", &SmlmOperator::fine_pixel_center, py::arg("index"));

  m.def(
      "spectral_norm",
      [](const LinearOp& op, double tol) { return spectral_norm(op, tol).sigma; },
      py::arg("op"), py::arg("tol") = 1e-12, "Largest singular value by power iteration.");

  py::class_<SolveConfig>(m, "SolveConfig")
      .def(py::init<>())
      .def_readwrite("pam_c", &SolveConfig::pam_c)
      .def_readwrite("pam_b", &SolveConfig::pam_b)
      .def_readwrite("fista_tol", &SolveConfig::fista_tol)
      .def_readwrite("fista_residual_tol", &SolveConfig::fista_residual_tol)
      .def_readwrite("fista_max_iter", &SolveConfig::fista_max_iter)
      .def_readwrite("pam_tol", &SolveConfig::pam_tol)
      .def_readwrite("pam_max_iter", &SolveConfig::pam_max_iter)
      .def_readwrite("rho0", &SolveConfig::rho0)
      .def_readwrite("rho0_relative", &SolveConfig::rho0_relative)
      .def_readwrite("rho_growth", &SolveConfig::rho_growth)
      .def_readwrite("rho_safety", &SolveConfig::rho_safety)
      .def_readwrite("iht_tol", &SolveConfig::iht_tol)
      .def_readwrite("iht_max_iter", &SolveConfig::iht_max_iter)
      .def_readwrite("zero_tol", &SolveConfig::zero_tol)
      .def_readwrite("feas_tol_rel", &SolveConfig::feas_tol_rel);

  m.def(
      "biconvex_minimize",
      [](std::shared_ptr<LinearOp> op, const Vector& d, std::optional<Index> k,
         std::optional<double> lam, const SolveConfig& cfg) {
        const ProblemInstance inst{std::move(op), d, pick_mode(k, lam), std::nullopt};
        Solution sol;
        {
          py::gil_scoped_release release;
          sol = biconvex_minimize(inst, cfg);
        }
        py::dict out;
        out["x"] = sol.pair.x;
        out["u"] = sol.pair.u;
        out["objective"] = sol.objective.value();
        out["trace"] = trace_dict(sol.trace);
        return out;
      },
      py::arg("op"), py::arg("d"), py::arg("k") = py::none(), py::arg("lam") = py::none(),
      py::arg("config") = SolveConfig{},
      "Penalty continuation on the biconvex reformulation; give k or lam.");

  m.def(
      "iht",
      [](std::shared_ptr<LinearOp> op, const Vector& d, std::optional<Index> k,
         std::optional<double> lam, const SolveConfig& cfg) {
        const PenaltyMode mode = pick_mode(k, lam);
        const ProblemInstance inst{std::move(op), d, mode, std::nullopt};
        IhtResult r;
        {
          py::gil_scoped_release release;
          r = k ? iht_constrained(inst, *k, cfg) : iht_penalized(inst, *lam, cfg);
        }
        py::dict out;
        out["x"] = r.x;
        out["iterations"] = r.iterations;
        out["converged"] = r.converged;
        return out;
      },
      py::arg("op"), py::arg("d"), py::arg("k") = py::none(), py::arg("lam") = py::none(),
      py::arg("config") = SolveConfig{}, "Nonnegative iterative hard thresholding.");

  m.def("l0_norm", &l0_norm, py::arg("x"), py::arg("zero_tol") = kZeroTol);
  m.def(
      "l0_witness",
      [](const Vector& x, double zero_tol) {
        const L0Witness w = l0_witness(x, zero_tol);
        return py::make_tuple(w.count, w.u);
      },
      py::arg("x"), py::arg("zero_tol") = kZeroTol, "(count, u) with u = sign(x) on the support.");
  m.def(
      "coupling_gap",
      [](const Vector& x, const Vector& u) { return coupling_gap({x, u}); }, py::arg("x"),
      py::arg("u"));
  m.def("project_capped_simplex", &project_capped_simplex, py::arg("w"), py::arg("k"));
  m.def("u_update_constrained", &u_update_constrained, py::arg("z"), py::arg("k"));
  m.def("u_update_penalized", &u_update_penalized, py::arg("z"), py::arg("lam"), py::arg("b"));

  py::class_<Molecule>(m, "Molecule")
      .def(py::init([](double x, double y, double intensity) {
             return Molecule{x, y, intensity};
           }),
           py::arg("x_nm"), py::arg("y_nm"), py::arg("intensity") = 1.0)
      .def_readwrite("x_nm", &Molecule::x_nm)
      .def_readwrite("y_nm", &Molecule::y_nm)
      .def_readwrite("intensity", &Molecule::intensity)
      .def("__repr__", [](const Molecule& m) {
        return "Molecule(" + std::to_string(m.x_nm) + ", " + std::to_string(m.y_nm) + ", " +
               std::to_string(m.intensity) + ")";
      });

  py::class_<FrameStack>(m, "FrameStack")
      .def_readonly("frames", &FrameStack::frames)
      .def_readonly("size", &FrameStack::size)
      .def_readonly("zoom", &FrameStack::zoom)
      .def_readonly("pixel_nm", &FrameStack::pixel_nm)
      .def_readonly("fwhm_nm", &FrameStack::fwhm_nm);

  m.def(
      "random_ground_truth",
      [](const SmlmParams& p, int frames, int molecules_per_frame, double min_separation_nm,
         double margin_nm, std::uint64_t seed) {
        GroundTruthParams g;
        g.frames = frames;
        g.molecules_per_frame = molecules_per_frame;
        g.min_separation_nm = min_separation_nm;
        g.margin_nm = margin_nm;
        return random_ground_truth(p, g, seed);
      },
      py::arg("params"), py::arg("frames"), py::arg("molecules_per_frame"),
      py::arg("min_separation_nm") = 0.0, py::arg("margin_nm") = 0.0, py::arg("seed") = 0);

  m.def(
      "simulate_stack",
      [](const std::vector<MoleculeList>& gt, const SmlmOperator& op, double noise_sigma,
         std::uint64_t seed) { return simulate_stack(gt, op, noise_sigma, seed); },
      py::arg("gt"), py::arg("op"), py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);

  py::class_<Localization>(m, "Localization")
      .def_readonly("molecules", &Localization::molecules)
      .def_readonly("converged", &Localization::converged);

  m.def(
      "localize_frame",
      [](const Vector& frame, std::shared_ptr<SmlmOperator> op, std::optional<Index> k,
         std::optional<double> lam, const SolveConfig& cfg, const std::string& algo) {
        const PenaltyMode mode = pick_mode(k, lam);
        py::gil_scoped_release release;
        return localize_frame(frame, op, mode, cfg, pick_algo(algo));
      },
      py::arg("frame"), py::arg("op"), py::arg("k") = py::none(), py::arg("lam") = py::none(),
      py::arg("config") = SolveConfig{}, py::arg("algo") = "biconvex");

  m.def(
      "jaccard",
      [](const MoleculeList& est, const MoleculeList& gt, double tol) {
        const JaccardReport r = jaccard(est, gt, tol);
        py::dict out;
        out["tolerance_nm"] = r.tolerance_nm;
        out["cr"] = r.cr;
        out["fp"] = r.fp;
        out["fn"] = r.fn;
        out["jaccard"] = r.jaccard;
        return out;
      },
      py::arg("est"), py::arg("gt"), py::arg("tolerance_nm"));

  m.def(
      "render_superres",
      [](const std::vector<MoleculeList>& frames, int fine_size, double pixel_nm) {
        const Image img = render_superres(frames, fine_size, pixel_nm);
        Matrix out(img.height, img.width);
        for (int r = 0; r < img.height; ++r) {
          for (int c = 0; c < img.width; ++c) {
            out(r, c) = img.pixels[static_cast<std::size_t>(r) * img.width + c];
          }
        }
        return out;
      },
      py::arg("frames"), py::arg("fine_size"), py::arg("pixel_nm"));
}
