#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "small_model.hpp"
#include "remogen/codec.hpp"
#include "remogen/stream.hpp"

using namespace remogen;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path p = fs::temp_directory_path() / ("remogen_test_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

std::string partner_line(std::int64_t t, const Tensor2& frames, std::size_t row) {
  nlohmann::json j{{"kind", "partner_pose"}, {"t", t},
                   {"pose", std::vector<float>(frames.row(row).begin(), frames.row(row).end())}};
  return j.dump() + "\n";
}

std::vector<nlohmann::json> lines_of(const std::string& s) {
  std::vector<nlohmann::json> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::string run_stream(const std::string& input, EngineConfig cfg, std::shared_ptr<const Model> model,
                       StreamStats* stats = nullptr, std::string* log_out = nullptr) {
  Engine engine(model, cfg);
  std::istringstream in(input);
  std::ostringstream out, log;
  const StreamStats s = stream_run(in, out, log, engine);
  if (stats) *stats = s;
  if (log_out) *log_out = log.str();
  return out.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(REMOGEN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_SUITE("runtime") {
  TEST_CASE("weight archive round trips") {
    WeightArchive empty;
    const auto eb = encode_archive(empty);
    CHECK(std::string(eb.begin(), eb.begin() + 6) == "RMGW1\n");
    CHECK(decode_archive(eb).tensors.empty());
    CHECK(encode_archive(decode_archive(eb)) == eb);

    WeightArchive a;
    a.add("w", Tensor2::from_rows({{1, 2}, {3, 4}}));
    a.meta["note"] = "x";
    const auto bytes = encode_archive(a);
    const WeightArchive b = decode_archive(bytes);
    CHECK(bit_equal(b.tensor2("w"), a.tensor2("w")));
    CHECK(encode_archive(b) == bytes);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_archive(truncated), CorruptArchiveError);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_archive(bad), FormatError);
    CHECK_THROWS_AS(b.tensor2("missing"), FormatError);
  }

  TEST_CASE("archive rejects overlapping and duplicate entries") {
    WeightArchive a;
    a.add("a", Tensor2(1, 2, 1.0f));
    a.add("b", Tensor2(1, 2, 2.0f));
    auto bytes = encode_archive(a);
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 6, 8);
    auto manifest = nlohmann::json::parse(std::string(bytes.begin() + 14, bytes.begin() + 14 + len));
    auto rebuild = [&](const nlohmann::json& m) {
      const std::string s = m.dump();
      std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 6);
      const std::uint64_t n = s.size();
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
      out.insert(out.end(), s.begin(), s.end());
      out.insert(out.end(), bytes.begin() + 14 + len, bytes.end());
      return out;
    };
    auto overlap = manifest;
    overlap["tensors"][1]["offset"] = 4;
    CHECK_THROWS_AS(decode_archive(rebuild(overlap)), CorruptArchiveError);
    auto dup = manifest;
    dup["tensors"][1]["name"] = "a";
    CHECK_THROWS_AS(decode_archive(rebuild(dup)), CorruptArchiveError);
    auto shape = manifest;
    shape["tensors"][0]["shape"] = {3, 2};
    CHECK_THROWS_AS(decode_archive(rebuild(shape)), FormatError);
  }

  TEST_CASE("model archive round trip is bit exact") {
    const auto model = small_model(5, true);
    const WeightArchive a = model_to_archive(*model);
    const auto bytes = encode_archive(a);
    const Model back = model_from_archive(decode_archive(bytes));
    CHECK(encode_archive(model_to_archive(back)) == bytes);
    CHECK(back.layout == model->layout);
    CHECK(bit_equal(back.normalizer.mean, model->normalizer.mean));
  }

  TEST_CASE("motion file round trips") {
    Rng rng(1);
    const FeatureLayout l{22, false};
    MotionFile m{{rand_t(1, l.dim(), rng), 10.0}, l};
    const auto bytes = encode_motion(m);
    CHECK(std::string(bytes.begin(), bytes.begin() + 5) == "RMGM1");
    const MotionFile back = decode_motion(bytes);
    CHECK(bit_equal(back.motion.frames, m.motion.frames));
    CHECK(back.motion.fps == 10.0);
    CHECK(back.layout.joints == 22);
    CHECK(encode_motion(back) == bytes);
    MotionFile wrong{{rand_t(2, l.dim() - 1, rng), 10.0}, l};
    CHECK_THROWS_AS(encode_motion(wrong), FormatError);
    auto tampered = bytes;
    tampered[5 + 4 + 4 + 4] ^= 1;  // D field
    CHECK_THROWS_AS(decode_motion(tampered), FormatError);
    auto cut = bytes;
    cut.resize(cut.size() - 4);
    CHECK_THROWS_AS(decode_motion(cut), FormatError);
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_motion(extra), FormatError);
  }

  TEST_CASE("voxel file round trips") {
    GridSpec s;
    s.dims = {4, 4, 4};
    const auto empty = encode_voxels(VoxelGrid(s));
    CHECK(empty.size() == 5 + 48 + 12 + 8);
    for (std::size_t i = empty.size() - 8; i < empty.size(); ++i) CHECK(empty[i] == 0);
    VoxelGrid one(s);
    one.set_cell(0, true);
    const auto ob = encode_voxels(one);
    CHECK(ob[5 + 48 + 12] == 0x01);
    CHECK(decode_voxels(ob).packed() == one.packed());
    CHECK(encode_voxels(decode_voxels(ob)) == ob);
    const VoxelGrid lingo(GridSpec::lingo());
    const VoxelGrid lb = decode_voxels(encode_voxels(lingo));
    CHECK(lb.spec().dims == std::array<std::uint32_t, 3>{300, 400, 100});
    auto cut = ob;
    cut.pop_back();
    CHECK_THROWS_AS(decode_voxels(cut), FormatError);
  }

  TEST_CASE("file helpers") {
    const fs::path dir = temp_dir();
    Rng rng(2);
    const MotionFile m{{rand_t(3, FeatureLayout{5, false}.dim(), rng), 10.0}, FeatureLayout{5, false}};
    save_motion(m, dir / "m.rmgm");
    CHECK(bit_equal(load_motion(dir / "m.rmgm").motion.frames, m.motion.frames));
    CHECK_THROWS(read_file(dir / "missing.bin"));
  }

  TEST_CASE("config parsing") {
    const EngineConfig c = parse_config("# demo\nH = 2\nF=8\nsteps = 10\nalpha = hhi=0.5, hsi=0.5\nfwsr = on\nseed = 9\n");
    CHECK(c.generation.future == 8);
    CHECK(c.alpha.at("hsi") == 0.5);
    CHECK(c.fwsr);
    CHECK(c.generation.seed == 9);
    CHECK(c.clamp_scope == ClampScope::kPerLayer);
    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("F = eight\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("F = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
    CHECK(parse_alpha(format_alpha({{"hhi", 0.25}, {"hsi", 1.5}})) == std::map<std::string, double>{{"hhi", 0.25}, {"hsi", 1.5}});
    EngineConfig e;
    ::setenv("REMOGEN_SEED", "1234", 1);
    apply_environment(e);
    ::unsetenv("REMOGEN_SEED");
    CHECK(e.generation.seed == 1234);
  }

  TEST_CASE("engine checks config against weights") {
    const auto model = small_model();
    EngineConfig c = small_config();
    c.width = 64;
    CHECK_THROWS_AS(Engine(model, c), ConfigError);
    c = small_config();
    c.clamp_scope = ClampScope::kJoint;
    CHECK_THROWS_AS(Engine(model, c), ConfigError);
    c = small_config();
    c.alpha = {{"nobody", 1.0}};
    CHECK_THROWS_AS(Engine(model, c), ConfigError);
  }

  TEST_CASE("engine paths produce frames and keep history") {
    const auto model = small_model();
    Engine e(model, small_config());
    CHECK(e.sample_segment().rows() == 8);
    CHECK(e.history().length() == 2);
    CHECK(e.active_modules().empty());  // no partner yet
    Rng rng(4);
    const Tensor2 partner = synthetic_motion_features(model->layout, 20, rng);
    for (std::size_t i = 0; i < 4; ++i) e.push_partner(partner.row(i));
    CHECK(e.slide_step().rows() == 1);
    CHECK(e.active_modules() == std::vector<std::string>{"hhi"});
    for (int i = 0; i < 10; ++i) CHECK(e.fwsr_step().rows() == 1);
    CHECK(e.frames_generated() == 8 + 1 + 10);
    CHECK_THROWS_AS(e.push_partner(std::vector<float>(3)), DimensionError);
  }

  TEST_CASE("alpha changes wait for the segment boundary") {
    const auto model = small_model();
    Engine e(model, small_config());
    Rng rng(5);
    const Tensor2 partner = synthetic_motion_features(model->layout, 8, rng);
    e.push_partner(partner.row(0));
    e.fwsr_step();
    CHECK(e.active_modules() == std::vector<std::string>{"hhi"});
    e.set_alpha({{"hhi", 0.5}, {"hsi", 0.5}});
    while (e.mid_segment()) {
      e.fwsr_step();
      CHECK(e.active_modules() == std::vector<std::string>{"hhi"});
    }
    e.fwsr_step();
    CHECK(e.active_modules() == std::vector<std::string>{"hhi", "hsi"});
    CHECK_THROWS_AS(e.set_alpha({{"ghost", 1.0}}), ConfigError);
  }

  TEST_CASE("record parsing") {
    const StreamRecord r = parse_record(R"({"kind":"alpha","t":3,"alpha":{"hhi":0.5}})");
    CHECK(r.kind == RecordKind::kAlpha);
    CHECK(r.alpha.at("hhi") == 0.5);
    CHECK(parse_record(record_to_json(r).dump()).alpha == r.alpha);
    CHECK_THROWS_AS(parse_record("{not json"), FormatError);
    CHECK_THROWS_AS(parse_record(R"({"kind":"dance"})"), FormatError);
    CHECK_THROWS_AS(parse_record(R"({"kind":"partner_pose","t":0})"), FormatError);
  }

  TEST_CASE("bounded queue") {
    BoundedQueue<int> q(2);
    std::thread producer([&] {
      for (int i = 0; i < 100; ++i) q.push(i);
      q.close();
    });
    int expect = 0;
    while (auto v = q.pop()) CHECK(*v == expect++);
    producer.join();
    CHECK(expect == 100);
  }

  TEST_CASE("stream: empty input emits only end") {
    const auto out = lines_of(run_stream("", small_config(), small_model()));
    REQUIRE(out.size() == 1);
    CHECK(out[0]["kind"] == "end");
    CHECK(out[0]["ego_frames"] == 0);
  }

  TEST_CASE("stream: sixteen partner frames give two bursts") {
    const auto model = small_model();
    Rng rng(6);
    const Tensor2 partner = synthetic_motion_features(model->layout, 16, rng);
    std::string input;
    for (std::size_t t = 0; t < 16; ++t) input += partner_line(static_cast<std::int64_t>(t), partner, t);
    StreamStats stats;
    const auto out = lines_of(run_stream(input, small_config(), model, &stats));
    REQUIRE(out.size() == 17);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(out[i]["kind"] == "ego_pose");
      CHECK(out[i]["t"] == i);
      CHECK(out[i].contains("latency_ms"));
    }
    CHECK(stats.segments == 2);
    CHECK(out.back()["segments"] == 2);
  }

  TEST_CASE("stream: fwsr answers every frame and alpha composes both modules") {
    const auto model = small_model();
    Rng rng(7);
    const Tensor2 partner = synthetic_motion_features(model->layout, 20, rng);
    std::string input;
    for (std::size_t t = 0; t < 20; ++t) {
      if (t == 4) input += R"({"kind":"alpha","t":4,"alpha":{"hhi":0.5,"hsi":0.5}})" "\n";
      input += partner_line(static_cast<std::int64_t>(t), partner, t);
    }
    EngineConfig cfg = small_config();
    cfg.fwsr = true;
    const auto out = lines_of(run_stream(input, cfg, model));
    REQUIRE(out.size() == 21);
    CHECK(out[4]["modules"] == nlohmann::json::array({"hhi"}));
    CHECK(out[8]["modules"] == nlohmann::json::array({"hhi", "hsi"}));
    CHECK(out[19]["modules"] == nlohmann::json::array({"hhi", "hsi"}));
  }

  TEST_CASE("stream: malformed lines are skipped and wrong widths are fatal") {
    const auto model = small_model();
    Rng rng(8);
    const Tensor2 partner = synthetic_motion_features(model->layout, 3, rng);
    const std::string input = partner_line(0, partner, 0) + "garbage\n" + partner_line(1, partner, 1);
    StreamStats stats;
    std::string log;
    const auto out = lines_of(run_stream(input, small_config(), model, &stats, &log));
    CHECK(stats.skipped == 1);
    CHECK(log.find("line 2") != std::string::npos);
    CHECK(out.size() == 3);  // partial burst of 2, then end
    CHECK_THROWS_AS(run_stream(R"({"kind":"partner_pose","t":0,"pose":[1,2,3]})" "\n", small_config(), model),
                    DimensionError);
  }

  TEST_CASE("stream transcripts are deterministic") {
    const auto model = small_model();
    Rng rng(9);
    const Tensor2 partner = synthetic_motion_features(model->layout, 12, rng);
    std::string input = R"({"kind":"text","t":0,"text":"walk to the chair"})" "\n";
    for (std::size_t t = 0; t < 12; ++t) input += partner_line(static_cast<std::int64_t>(t), partner, t);
    EngineConfig cfg = small_config();
    cfg.fwsr = true;
    const std::string a = run_stream(input, cfg, model), b = run_stream(input, cfg, model);
    CHECK(strip_timings(a) == strip_timings(b));
    CHECK(strip_timings(a).find("latency_ms") == std::string::npos);
  }

  TEST_CASE("bench reports all three paths") {
    const BenchReport r = bench(small_model(), small_config(), 16, 4);
    CHECK(r.segment.frames >= 16);
    CHECK(r.fwsr.frames >= 16);
    CHECK(r.slide.frames >= 4);
    CHECK(r.fwsr.per_frame() > 0.0);
    CHECK(r.to_json().contains("slide_over_fwsr"));
    CHECK(r.table().find("fwsr") != std::string::npos);
  }

  TEST_CASE("cli exit codes") {
    const fs::path dir = temp_dir();
    const std::string w = (dir / "w.rmgw").string();
    CHECK(run_cli("init-weights --out " + w + " --seed 1 --joints 5") == 0);
    CHECK(run_cli("generate --weights " + w + " --segments 1 --text walk --out " + (dir / "m.rmgm").string()) == 0);
    CHECK(fs::exists(dir / "m.rmgm"));
    {
      std::ofstream bad(dir / "bad.cfg");
      bad << "unknown_key = 1\n";
    }
    CHECK(run_cli("generate --weights " + w + " --config " + (dir / "bad.cfg").string() + " --out " +
                  (dir / "x.rmgm").string()) == 2);
    {
      std::ofstream junk(dir / "junk.rmgw");
      junk << "not an archive";
    }
    CHECK(run_cli("generate --weights " + (dir / "junk.rmgw").string() + " --out " + (dir / "x.rmgm").string()) == 3);
    CHECK(run_cli("metrics --pred " + (dir / "m.rmgm").string() + " --ref " + (dir / "m.rmgm").string()) == 0);
    CHECK(run_cli("no-such-command") == 2);
  }
}
