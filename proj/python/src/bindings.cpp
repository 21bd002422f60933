#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "remogen/codec.hpp"
#include "remogen/engine.hpp"
#include "remogen/stream.hpp"

namespace py = pybind11;
using namespace remogen;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor2 to_tensor(const FloatArray& a) {
  if (a.ndim() == 1) return Tensor2(1, a.shape(0), std::vector<float>(a.data(), a.data() + a.size()));
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array");
  return Tensor2(a.shape(0), a.shape(1), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_numpy(const Tensor2& t) {
  FloatArray out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

EmbeddingSet to_embeddings(const DoubleArray& a) {
  if (a.ndim() != 2) throw DimensionError("embeddings must be a 2-D array");
  Tensor2d v(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), v.data().begin());
  return {v, "python"};
}

JointFrames to_joints(const DoubleArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw DimensionError("joint positions must be T×J×3");
  JointFrames out(a.shape(0), std::vector<Vec3>(a.shape(1)));
  auto r = a.unchecked<3>();
  for (py::ssize_t t = 0; t < a.shape(0); ++t)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) out[t][j] = Vec3(r(t, j, 0), r(t, j, 1), r(t, j, 2));
  return out;
}

ClampScope scope_from(const std::string& s) {
  if (s == "joint") return ClampScope::kJoint;
  if (s == "per_layer") return ClampScope::kPerLayer;
  throw ConfigError("clamp scope must be 'joint' or 'per_layer'");
}

using PyDelta = std::map<int, FloatArray>;

std::map<int, FloatArray> compose(const std::map<std::string, PyDelta>& deltas,
                                  const std::map<std::string, double>& alpha, const std::string& scope,
                                  double epsilon) {
  std::vector<ModulationDelta> ds;
  for (const auto& [id, layers] : deltas) {
    ModulationDelta d{id, {}};
    for (const auto& [l, arr] : layers) d.layers.emplace(l, to_tensor(arr));
    ds.push_back(std::move(d));
  }
  CompositionWeights w;
  w.alpha = alpha;
  w.scope = scope_from(scope);
  w.epsilon = epsilon;
  const ModulationDelta out = compose_deltas(ds, w);
  std::map<int, FloatArray> res;
  for (const auto& [l, t] : out.layers) res.emplace(l, to_numpy(t));
  return res;
}

struct PyEngine {
  std::shared_ptr<const Model> model;
  std::unique_ptr<Engine> engine;
};

}  // namespace

PYBIND11_MODULE(_remogen, m) {
  m.doc() = "Bindings for the remogen reaction-generation core";

  auto base = py::register_exception<Error>(m, "RemogenError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DegeneracyError>(m, "DegeneracyError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<EmptyInputError>(m, "EmptyInputError", base.ptr());
  py::register_exception<InsufficientFramesError>(m, "InsufficientFramesError", base.ptr());
  auto format = py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<CorruptArchiveError>(m, "CorruptArchiveError", format.ptr());
  py::register_exception<ProviderError>(m, "ProviderError", base.ptr());

  py::class_<Model, std::shared_ptr<Model>>(m, "Model")
      .def_property_readonly("joints", [](const Model& x) { return x.layout.joints; })
      .def_property_readonly("feature_dim", [](const Model& x) { return x.layout.dim(); })
      .def_property_readonly("layout", [](const Model& x) { return x.layout.id(); })
      .def_property_readonly("seed", [](const Model& x) { return x.seed; })
      .def_property_readonly("modules", [](const Model& x) {
        std::vector<std::string> ids;
        for (const auto& [id, mp] : x.modules) ids.push_back(id);
        return ids;
      })
      .def("save", [](const Model& x, const std::string& path) { save_archive(model_to_archive(x), path); })
      .def_static("load", [](const std::string& path) {
        return std::make_shared<Model>(model_from_archive(load_archive(path)));
      });

  m.def(
      "init_model",
      [](std::size_t joints, std::uint64_t seed, bool live) {
        return std::make_shared<Model>(init_model(ModelShape::defaults(FeatureLayout{joints, false}), seed, live));
      },
      py::arg("joints") = 22, py::arg("seed") = 0, py::arg("live") = false,
      "Seeded random model; adapters are zero-gated unless live is set.");

  py::class_<PyEngine>(m, "Engine")
      .def(py::init([](std::shared_ptr<Model> model, const std::string& config, const std::string& scene) {
             auto e = std::make_unique<PyEngine>();
             e->model = model;
             EngineConfig cfg = parse_config(config);
             std::shared_ptr<const VoxelGrid> grid;
             const std::string path = scene.empty() ? cfg.scene : scene;
             if (!path.empty()) grid = std::make_shared<VoxelGrid>(load_voxels(path));
             e->engine = std::make_unique<Engine>(model, std::move(cfg), grid);
             return e;
           }),
           py::arg("model"), py::arg("config") = "", py::arg("scene") = "",
           "config uses the key = value format of the CLI config files")
      .def("sample_segment", [](PyEngine& e) { return to_numpy(e.engine->sample_segment()); })
      .def("fwsr_step", [](PyEngine& e) { return to_numpy(e.engine->fwsr_step()); })
      .def("slide_step", [](PyEngine& e) { return to_numpy(e.engine->slide_step()); })
      .def("push_partner",
           [](PyEngine& e, const FloatArray& frame) {
             const Tensor2 t = to_tensor(frame);
             for (std::size_t r = 0; r < t.rows(); ++r) e.engine->push_partner(t.row(r));
           })
      .def("seed_history", [](PyEngine& e, const FloatArray& frames) { e.engine->seed_history(to_tensor(frames)); })
      .def("set_text", [](PyEngine& e, std::string text) { e.engine->set_text(std::move(text)); })
      .def("set_alpha", [](PyEngine& e, std::map<std::string, double> a) { e.engine->set_alpha(std::move(a)); })
      .def_property_readonly("active_modules", [](const PyEngine& e) { return e.engine->active_modules(); })
      .def_property_readonly("frames_generated", [](const PyEngine& e) { return e.engine->frames_generated(); })
      .def_property_readonly("history", [](const PyEngine& e) { return to_numpy(e.engine->history().frames()); });

  m.def("compose_deltas", &compose, py::arg("deltas"), py::arg("alpha"), py::arg("scope") = "joint",
        py::arg("epsilon") = 1e-6,
        "deltas: {module: {layer: T×W array}}; returns the clamped composition per layer");

  m.def(
      "estimate_sensitivity",
      [](const std::function<std::vector<double>(std::vector<double>)>& decoder, const DoubleArray& z0,
         double h_step) {
        const VectorFn f = [&](std::span<const double> z) { return decoder({z.begin(), z.end()}); };
        const Latent z{std::vector<float>(z0.data(), z0.data() + z0.size())};
        return estimate_sensitivity(f, z, h_step).s;
      },
      py::arg("decoder"), py::arg("z0"), py::arg("h_step") = kDefaultFdStep);

  m.def(
      "frechet_distance",
      [](const DoubleArray& a, const DoubleArray& b) { return frechet_distance(to_embeddings(a), to_embeddings(b)); });
  m.def(
      "retrieval_metrics",
      [](const DoubleArray& motion, const DoubleArray& text, std::size_t batch) {
        const RetrievalReport r = retrieval_metrics(to_embeddings(motion), to_embeddings(text), batch);
        py::dict d;
        d["r_precision"] = r.r_precision;
        d["r_precision_cosine"] = r.r_precision_cosine;
        d["mm_dist"] = r.mm_dist;
        d["batches"] = r.batches;
        return d;
      },
      py::arg("motion"), py::arg("text"), py::arg("batch") = 64);
  m.def("peak_jerk", [](const DoubleArray& joints, double fps) { return peak_jerk(to_joints(joints), fps); },
        py::arg("joints"), py::arg("fps") = 10.0);

  m.def(
      "synthetic_motion",
      [](std::size_t joints, std::size_t frames, std::uint64_t seed) {
        Rng rng(seed);
        return to_numpy(synthetic_motion_features(FeatureLayout{joints, false}, frames, rng));
      },
      py::arg("joints") = 22, py::arg("frames") = 40, py::arg("seed") = 0,
      "Canonicalized features of a synthetic walk");

  m.def(
      "save_motion",
      [](const std::string& path, const FloatArray& frames, double fps, std::size_t joints) {
        save_motion(MotionFile{{to_tensor(frames), fps}, FeatureLayout{joints, false}}, path);
      },
      py::arg("path"), py::arg("frames"), py::arg("fps") = 10.0, py::arg("joints") = 22);
  m.def("load_motion", [](const std::string& path) {
    const MotionFile f = load_motion(path);
    return py::make_tuple(to_numpy(f.motion.frames), f.motion.fps, f.layout.joints);
  });

  m.def(
      "voxelize",
      [](const DoubleArray& points, std::array<double, 3> lo, std::array<double, 3> hi, double resolution,
         const std::string& out) {
        if (points.ndim() != 2 || points.shape(1) != 3) throw DimensionError("points must be N×3");
        std::vector<Vec3> pts(points.shape(0));
        auto r = points.unchecked<2>();
        for (py::ssize_t i = 0; i < points.shape(0); ++i) pts[i] = Vec3(r(i, 0), r(i, 1), r(i, 2));
        const GridSpec spec = GridSpec::from_resolution(Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2]), resolution);
        const VoxelGrid g = voxelize_points(pts, spec);
        if (!out.empty()) save_voxels(g, out);
        return py::make_tuple(std::vector<std::uint32_t>(spec.dims.begin(), spec.dims.end()), g.occupied_count());
      },
      py::arg("points"), py::arg("min_corner"), py::arg("max_corner"), py::arg("resolution"), py::arg("out") = "",
      "Returns (dims, occupied cells); writes a voxel file when out is given");

  m.def(
      "bench",
      [](std::shared_ptr<Model> model, const std::string& config, std::size_t frames, std::size_t slide_frames) {
        const BenchReport r = bench(model, parse_config(config), frames, slide_frames);
        return r.to_json().dump();
      },
      py::arg("model"), py::arg("config") = "", py::arg("frames") = 64, py::arg("slide_frames") = 0,
      "Latency report as a JSON string");

  m.def(
      "stream",
      [](std::shared_ptr<Model> model, const std::string& input, const std::string& config, bool keep_timings) {
        Engine engine(model, parse_config(config));
        std::istringstream in(input);
        std::ostringstream out, log;
        {
          py::gil_scoped_release release;
          stream_run(in, out, log, engine);
        }
        return keep_timings ? out.str() : strip_timings(out.str());
      },
      py::arg("model"), py::arg("input"), py::arg("config") = "", py::arg("keep_timings") = false,
      "Runs NDJSON records through the stream loop and returns the output transcript");
}
