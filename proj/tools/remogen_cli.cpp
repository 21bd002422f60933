// remogen command-line front end.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "remogen/codec.hpp"
#include "remogen/engine.hpp"
#include "remogen/metrics.hpp"
#include "remogen/stream.hpp"

using namespace remogen;

namespace {

std::vector<double> parse_list(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": cannot parse '" + item + "'");
    }
  }
  if (out.size() != expected) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

EngineConfig load_engine_config(const std::string& path) {
  EngineConfig cfg = path.empty() ? EngineConfig{} : load_config(path);
  apply_environment(cfg);
  return cfg;
}

std::shared_ptr<const Model> load_model(const std::string& path) {
  return std::make_shared<const Model>(model_from_archive(load_archive(path)));
}

std::shared_ptr<const VoxelGrid> maybe_scene(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<const VoxelGrid>(load_voxels(path));
}

std::vector<Vec3> read_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<Vec3> pts;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x)) continue;
    if (!(ls >> y >> z)) throw FormatError(path + ":" + std::to_string(n) + ": expected x y z");
    pts.emplace_back(x, y, z);
  }
  return pts;
}

int run_generate(const std::string& weights, const std::string& config, const std::string& text,
                 std::size_t segments, const std::string& out, const std::string& scene_path,
                 const std::string& partner_path, const std::string& alpha, bool fwsr,
                 std::optional<std::uint64_t> seed) {
  EngineConfig cfg = load_engine_config(config);
  if (seed) cfg.generation.seed = *seed;
  if (!text.empty()) cfg.text = text;
  if (!alpha.empty()) cfg.alpha = parse_alpha(alpha);
  if (fwsr) cfg.fwsr = true;
  if (!scene_path.empty()) cfg.scene = scene_path;
  auto model = load_model(weights);
  Engine engine(model, cfg, maybe_scene(cfg.scene));
  Tensor2 partner(0, model->layout.dim());
  if (!partner_path.empty()) {
    MotionFile p = load_motion(partner_path);
    if (p.layout != model->layout) throw ConfigError("partner motion layout differs from the weights");
    partner = p.motion.frames;
  }
  std::size_t next_partner = 0;
  auto feed = [&](std::size_t n) {
    for (std::size_t i = 0; i < n && next_partner < partner.rows(); ++i) engine.push_partner(partner.row(next_partner++));
  };
  const std::size_t F = cfg.generation.future;
  Tensor2 motion(0, model->layout.dim());
  for (std::size_t s = 0; s < segments; ++s) {
    if (cfg.fwsr) {
      for (std::size_t f = 0; f < F; ++f) {
        feed(1);
        motion = concat_rows(motion, engine.fwsr_step());
      }
    } else {
      feed(F);
      motion = concat_rows(motion, engine.sample_segment());
    }
  }
  save_motion({MotionSegment{motion, cfg.generation.fps}, model->layout}, out);
  nlohmann::json summary{{"frames", motion.rows()}, {"segments", segments}, {"fwsr", cfg.fwsr},
                         {"modules", engine.active_modules()}, {"out", out}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int run_metrics(const std::string& pred_path, const std::string& ref_path, const std::string& scene_path,
                const std::string& partner_path, const std::string& config) {
  const EngineConfig cfg = load_engine_config(config);
  const MotionFile pred = load_motion(pred_path);
  const MotionFile ref = load_motion(ref_path);
  if (pred.layout != ref.layout) throw ConfigError("metrics: prediction and reference layouts differ");
  const FeatureLayout& layout = pred.layout;
  nlohmann::json report;
  report["frames"] = {{"pred", pred.motion.frames.rows()}, {"ref", ref.motion.frames.rows()}};

  const RandomProjectionEmbedder embedder(layout.dim());
  const EmbeddingSet ep = embed_motion(embedder, pred.motion.frames, "pred");
  const EmbeddingSet er = embed_motion(embedder, ref.motion.frames, "ref");
  if (ep.size() >= 2 && er.size() >= 2) {
    report["fid"] = frechet_distance(ep, er);
    Rng rng(cfg.generation.seed, 0x646976);
    // all pairs up to 512 windows, 300 seeded pairs beyond
    auto pairs = [](const EmbeddingSet& e) { return e.size() <= 512 ? std::size_t{0} : std::size_t{300}; };
    report["diversity"] = {{"pred", diversity(ep, pairs(ep), rng)}, {"ref", diversity(er, pairs(er), rng)}};
  } else {
    report["fid"] = nullptr;
    report["note"] = "fewer than two embedding windows; FID and diversity skipped";
  }
  const JointFrames jp = joints_from_features(pred.motion.frames, layout);
  const JointFrames jr = joints_from_features(ref.motion.frames, layout);
  if (jp.size() >= 4) report["peak_jerk"]["pred"] = peak_jerk(jp, pred.motion.fps);
  if (jr.size() >= 4) report["peak_jerk"]["ref"] = peak_jerk(jr, ref.motion.fps);

  std::shared_ptr<const VoxelGrid> scene = maybe_scene(scene_path);
  std::optional<JointFrames> partner;
  if (!partner_path.empty()) {
    const MotionFile p = load_motion(partner_path);
    if (p.layout != layout) throw ConfigError("metrics: partner layout differs");
    partner = joints_from_features(p.motion.frames, layout);
    const std::size_t n = std::min({partner->size(), jp.size(), jr.size()});
    partner->resize(n);
  }
  if (scene || partner) {
    JointFrames ego = jp, reference = jr;
    if (partner) {
      ego.resize(partner->size());
      reference.resize(partner->size());
    }
    std::optional<std::vector<bool>> ref_contacts;
    if (partner) ref_contacts = contact_labels(reference, *partner, cfg.radii.contact_radius);
    const CollisionReport c = collision_metrics(ego, scene.get(), partner ? &*partner : nullptr, cfg.radii,
                                                ref_contacts ? &*ref_contacts : nullptr);
    report["collision_pct"] = c.collision_pct;
    if (c.contact_precision) report["contact_precision"] = *c.contact_precision;
    if (c.contact_recall) report["contact_recall"] = *c.contact_recall;
  }
  std::cout << report.dump(2) << "\n";
  return 0;
}

int run_voxelize(const std::string& points, const std::string& bounds, const std::string& dims, double resolution,
                 const std::string& out) {
  const auto b = parse_list(bounds, 6, "--bounds");
  const Vec3 lo(b[0], b[1], b[2]), hi(b[3], b[4], b[5]);
  GridSpec spec;
  if (!dims.empty()) {
    const auto d = parse_list(dims, 3, "--dims");
    spec.min_corner = lo;
    spec.max_corner = hi;
    for (int k = 0; k < 3; ++k) {
      if (d[k] < 1 || d[k] != std::floor(d[k])) throw ConfigError("--dims must be positive integers");
      spec.dims[k] = static_cast<std::uint32_t>(d[k]);
    }
    spec.validate();
  } else if (resolution > 0.0) {
    spec = GridSpec::from_resolution(lo, hi, resolution);
  } else {
    throw ConfigError("voxelize: give --dims or --resolution");
  }
  const std::vector<Vec3> pts = read_points(points);
  const VoxelGrid grid = voxelize_points(pts, spec);
  save_voxels(grid, out);
  std::cout << nlohmann::json{{"points", pts.size()},
                              {"dims", spec.dims},
                              {"occupied", grid.occupied_count()},
                              {"out", out}}
                   .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"remogen: real-time interaction-to-reaction motion generation"};
  app.require_subcommand(1);

  std::string weights, config, out, text, scene, partner, alpha, pred, ref, points, bounds, dims;
  std::uint64_t seed = 0;
  std::size_t segments = 4, frames = 1000, slide_frames = 0;
  double resolution = 0.0;
  bool fwsr = false, live = false, root_extra = false;
  std::size_t joints = 22;

  auto* init = app.add_subcommand("init-weights", "write a seeded random weight archive");
  init->add_option("--out", out, "output .rmgw")->required();
  init->add_option("--seed", seed, "RNG seed");
  init->add_option("--joints", joints, "body joints in the feature layout")->check(CLI::Range(3, 22));
  init->add_flag("--root-extra", root_extra, "separate root-orientation block");
  init->add_flag("--live-adapters", live, "small random adapter gates instead of zero");

  auto* gen = app.add_subcommand("generate", "generate K segments to a motion file");
  gen->add_option("--weights", weights)->required();
  gen->add_option("--config", config);
  gen->add_option("--text", text);
  gen->add_option("--segments", segments)->check(CLI::PositiveNumber);
  gen->add_option("--out", out)->required();
  gen->add_option("--scene", scene, ".rmgv scene");
  gen->add_option("--partner", partner, ".rmgm partner motion");
  gen->add_option("--alpha", alpha, "module weights, e.g. hhi=0.5,hsi=0.5");
  auto* gen_seed = gen->add_option("--seed", seed);
  gen->add_flag("--fwsr", fwsr, "frame-wise refinement");

  auto* str = app.add_subcommand("stream", "NDJSON records on stdin → stdout");
  str->add_option("--weights", weights)->required();
  str->add_option("--config", config);
  str->add_option("--scene", scene);
  str->add_flag("--fwsr", fwsr);

  auto* met = app.add_subcommand("metrics", "motion quality report");
  met->add_option("--pred", pred)->required();
  met->add_option("--ref", ref)->required();
  met->add_option("--scene", scene);
  met->add_option("--partner", partner);
  met->add_option("--config", config);

  auto* ben = app.add_subcommand("bench", "latency breakdown for segment, FWSR and slide paths");
  ben->add_option("--weights", weights)->required();
  ben->add_option("--config", config);
  ben->add_option("--frames", frames)->check(CLI::PositiveNumber);
  ben->add_option("--slide-frames", slide_frames, "frames for the slide path (default: --frames)");
  ben->add_option("--json", out, "also write the report as JSON");

  auto* vox = app.add_subcommand("voxelize", "points → occupancy grid");
  vox->add_option("--points", points, "whitespace-separated x y z per line")->required();
  vox->add_option("--bounds", bounds, "xmin,ymin,zmin,xmax,ymax,zmax")->required();
  vox->add_option("--dims", dims, "nx,ny,nz");
  vox->add_option("--resolution", resolution, "cell size in metres (when --dims is absent)");
  vox->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*init) {
      FeatureLayout layout;
      layout.joints = joints;
      layout.root_extra = root_extra;
      if (const char* s = std::getenv("REMOGEN_SEED"); s && *s && init->count("--seed") == 0) {
        seed = std::stoull(s);
      }
      const Model m = init_model(ModelShape::defaults(layout), seed, live);
      save_archive(model_to_archive(m), out);
      std::cout << nlohmann::json{{"out", out}, {"seed", seed}, {"layout", layout.id()}, {"live_adapters", live}}.dump()
                << "\n";
      return 0;
    }
    if (*gen) {
      return run_generate(weights, config, text, segments, out, scene, partner, alpha, fwsr,
                          gen_seed->count() ? std::optional<std::uint64_t>(seed) : std::nullopt);
    }
    if (*str) {
      EngineConfig cfg = load_engine_config(config);
      if (fwsr) cfg.fwsr = true;
      if (!scene.empty()) cfg.scene = scene;
      Engine engine(load_model(weights), cfg, maybe_scene(cfg.scene));
      std::ios::sync_with_stdio(false);
      stream_run(std::cin, std::cout, std::cerr, engine);
      return 0;
    }
    if (*met) return run_metrics(pred, ref, scene, partner, config);
    if (*ben) {
      const EngineConfig cfg = load_engine_config(config);
      const BenchReport r = bench(load_model(weights), cfg, frames, slide_frames);
      std::cout << r.table();
      if (!out.empty()) {
        std::ofstream j(out);
        j << r.to_json().dump(2) << "\n";
      }
      return 0;
    }
    if (*vox) return run_voxelize(points, bounds, dims, resolution, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const DegeneracyError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
