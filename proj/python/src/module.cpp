#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <array>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "qsmlab/dipole.hpp"
#include "qsmlab/medi.hpp"
#include "qsmlab/metrics.hpp"
#include "qsmlab/phantom.hpp"
#include "qsmlab/qvol.hpp"
#include "qsmlab/training.hpp"

namespace py = pybind11;
using namespace qsmlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Triple = std::array<double, 3>;

constexpr Triple unit{1, 1, 1};
constexpr Triple z_axis{0, 0, 1};

VoxelSize voxel(const Triple& v) { return {v[0], v[1], v[2]}; }

Volume3D to_volume(const Array& a, const Triple& vs) {
  if (a.ndim() != 3) throw DimensionError("expected a 3-D array");
  const Dims d{std::size_t(a.shape(0)), std::size_t(a.shape(1)), std::size_t(a.shape(2))};
  return Volume3D(d, voxel(vs), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Volume3D& v) {
  const Dims& d = v.dims();
  Array out({d.nx, d.ny, d.nz});
  std::copy(v.values().begin(), v.values().end(), out.mutable_data());
  return out;
}

std::optional<Mask> to_mask(const std::optional<Array>& a, MaskRole role) {
  if (!a) return std::nullopt;
  return Mask(to_volume(*a, {1, 1, 1}), role);
}

py::dict member_dict(const CorpusMember& m) {
  py::dict d;
  d["id"] = m.id;
  d["split"] = m.split;
  d["seed"] = m.seed;
  d["chi"] = to_array(m.phantom.chi);
  d["tissue_mask"] = to_array(m.phantom.tissue_mask.values());
  d["lesion_mask"] = to_array(m.phantom.lesion_mask.values());
  d["field"] = to_array(m.field);
  d["noise_sigma"] = to_array(m.noise.sigma);
  return d;
}

using MetricFn = double (*)(const Volume3D&, const Volume3D&, const Mask*);

auto metric(MetricFn f) {
  return [f](const Array& x, const Array& ref, const std::optional<Array>& mask) {
    const auto m = to_mask(mask, MaskRole::Tissue);
    return f(to_volume(x, {1, 1, 1}), to_volume(ref, {1, 1, 1}), m ? &*m : nullptr);
  };
}

class Model {
 public:
  explicit Model(std::unique_ptr<pdi::DualDecoderNet> net) : net_(std::move(net)) {}

  static Model load(const std::filesystem::path& path) { return Model(pdi::load_model(path)); }

  py::tuple infer(const Array& field, const Triple& vs, bool patches) {
    pdi::InferOptions o;
    o.patches = patches;
    o.patch = net_->config().patch;
    const pdi::Inference r = pdi::infer(*net_, to_volume(field, vs), o);
    return py::make_tuple(to_array(r.mu), to_array(r.sigma));
  }

  std::string config() const { return nlohmann::json(net_->config()).dump(); }
  std::size_t parameter_count() const { return net_->parameter_count(); }

 private:
  std::unique_ptr<pdi::DualDecoderNet> net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "qsmlab native core";
  m.attr("__version__") = QSMLAB_VERSION;

  // Translators run newest first, so the base class goes in first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "dipole_kernel",
      [](const std::array<std::size_t, 3>& shape, const Triple& vs, const Triple& b0) {
        return to_array(build_dipole_kernel({shape[0], shape[1], shape[2]}, voxel(vs), b0).D);
      },
      py::arg("shape"), py::arg("voxel_size") = unit, py::arg("b0") = z_axis,
      "Fourier-domain dipole kernel, unshifted (DC at index 0).");

  m.def(
      "forward_field",
      [](const Array& chi, const Triple& vs, const Triple& b0) {
        const Volume3D c = to_volume(chi, vs);
        return to_array(forward_field(c, build_dipole_kernel(c.dims(), c.voxel_size(), b0)));
      },
      py::arg("chi"), py::arg("voxel_size") = unit, py::arg("b0") = z_axis);

  m.def(
      "sphere_field",
      [](const std::array<std::size_t, 3>& shape, const Triple& center, double radius, double delta_chi,
         const Triple& vs, const Triple& b0) {
        return to_array(sphere_analytic_field({shape[0], shape[1], shape[2]}, voxel(vs), center, radius,
                                              delta_chi, b0));
      },
      py::arg("shape"), py::arg("center"), py::arg("radius"), py::arg("delta_chi"),
      py::arg("voxel_size") = unit, py::arg("b0") = z_axis, "Closed-form field of a uniform sphere.");

  m.def(
      "phantom",
      [](const std::string& spec_json) {
        const Phantom p = make_phantom(nlohmann::json::parse(spec_json).get<PhantomSpec>());
        py::dict d;
        d["chi"] = to_array(p.chi);
        d["tissue_mask"] = to_array(p.tissue_mask.values());
        d["lesion_mask"] = to_array(p.lesion_mask.values());
        return d;
      },
      py::arg("spec_json"));

  m.def(
      "corpus",
      [](int n, const std::array<std::size_t, 3>& shape, std::uint64_t seed) {
        py::list out;
        for (const auto& mem : make_corpus(n, default_corpus_spec({shape[0], shape[1], shape[2]}), seed))
          out.append(member_dict(mem));
        return out;
      },
      py::arg("n"), py::arg("shape") = std::array<std::size_t, 3>{64, 64, 32}, py::arg("seed") = 0,
      "Healthy phantoms with noisy fields, split train/val/test.");

  m.def(
      "lesion_phantom",
      [](const std::string& lesion_json, const std::array<std::size_t, 3>& shape, std::uint64_t seed) {
        return member_dict(make_lesion_phantom(default_corpus_spec({shape[0], shape[1], shape[2]}),
                                               nlohmann::json::parse(lesion_json).get<LesionSpec>(), seed));
      },
      py::arg("lesion_json"), py::arg("shape") = std::array<std::size_t, 3>{64, 64, 32}, py::arg("seed") = 0);

  m.def(
      "medi",
      [](const Array& field, const Array& noise_sigma, double lam, const std::optional<Array>& edge_weight,
         int max_outer, const Triple& vs, const Triple& b0) {
        const Volume3D b = to_volume(field, vs);
        MediConfig c;
        c.lambda = lam;
        c.max_outer = max_outer;
        c.edge_weight = to_mask(edge_weight, MaskRole::EdgeWeight);
        const NoiseModel noise{to_volume(noise_sigma, vs), 0};
        MediResult r;
        {
          py::gil_scoped_release release;
          r = medi_solve(b, likelihood_weight(noise), build_dipole_kernel(b.dims(), b.voxel_size(), b0), c);
        }
        py::list trace;
        for (const auto& t : r.trace) {
          py::dict row;
          row["iteration"] = t.iteration;
          row["objective"] = t.objective;
          row["fidelity"] = t.fidelity;
          row["tv"] = t.tv;
          row["step"] = t.step;
          row["cg_iterations"] = t.cg_iterations;
          trace.append(row);
        }
        return py::make_tuple(to_array(r.chi), trace);
      },
      py::arg("field"), py::arg("noise_sigma"), py::arg("lam") = 1e-3, py::arg("edge_weight") = py::none(),
      py::arg("max_outer") = 10, py::arg("voxel_size") = unit, py::arg("b0") = z_axis,
      "Weighted-TV MAP reconstruction; returns (chi, trace).");

  m.def("rmse", metric(metrics::rmse), py::arg("x"), py::arg("ref"), py::arg("mask") = py::none());
  m.def("psnr", metric(metrics::psnr), py::arg("x"), py::arg("ref"), py::arg("mask") = py::none());
  m.def("ssim", metric(metrics::ssim), py::arg("x"), py::arg("ref"), py::arg("mask") = py::none());
  m.def("hfen", metric(metrics::hfen), py::arg("x"), py::arg("ref"), py::arg("mask") = py::none());
  m.def(
      "uncertainty_error_agreement",
      [](const Array& sigma, const Array& error, const std::optional<Array>& mask) {
        const auto mk = to_mask(mask, MaskRole::Tissue);
        return metrics::uncertainty_error_agreement(to_volume(sigma, unit), to_volume(error, unit),
                                                    mk ? &*mk : nullptr);
      },
      py::arg("sigma"), py::arg("error"), py::arg("mask") = py::none(), "Spearman rank correlation.");

  m.def(
      "load_volume",
      [](const std::filesystem::path& path) {
        const Volume3D v = load_volume(path);
        const VoxelSize& s = v.voxel_size();
        return py::make_tuple(to_array(v), Triple{s.dx, s.dy, s.dz});
      },
      py::arg("path"), "Read a .qvol volume; returns (array, voxel_size).");
  m.def(
      "save_volume",
      [](const std::filesystem::path& path, const Array& a, const Triple& vs, const std::string& role, bool f32) {
        save_volume(to_volume(a, vs), path, role, f32 ? DType::F32 : DType::F64);
      },
      py::arg("path"), py::arg("array"), py::arg("voxel_size") = unit, py::arg("role") = "",
      py::arg("float32") = false);

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def("infer", &Model::infer, py::arg("field"), py::arg("voxel_size") = unit, py::arg("patches") = false,
           "Posterior mean and standard deviation.")
      .def_property_readonly("config_json", &Model::config)
      .def_property_readonly("parameter_count", &Model::parameter_count);
}
