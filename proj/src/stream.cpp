#include "remogen/stream.hpp"

#include <chrono>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>
#include <variant>

namespace remogen {

namespace {

RecordKind kind_from_string(const std::string& s) {
  if (s == "partner_pose") return RecordKind::kPartnerPose;
  if (s == "text") return RecordKind::kText;
  if (s == "alpha") return RecordKind::kAlpha;
  if (s == "ego_pose") return RecordKind::kEgoPose;
  if (s == "end") return RecordKind::kEnd;
  throw FormatError("record: unknown kind '" + s + "'");
}

const char* kind_name(RecordKind k) {
  switch (k) {
    case RecordKind::kPartnerPose: return "partner_pose";
    case RecordKind::kText: return "text";
    case RecordKind::kAlpha: return "alpha";
    case RecordKind::kEgoPose: return "ego_pose";
    case RecordKind::kEnd: return "end";
  }
  return "end";
}

// Ingest output: a parsed record or the reason a line was rejected.
struct Ingested {
  std::size_t line = 0;
  std::variant<StreamRecord, std::string> item;
};

}  // namespace

StreamRecord parse_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("record: invalid JSON: ") + e.what());
  }
  try {
    StreamRecord r;
    r.kind = kind_from_string(j.at("kind").get<std::string>());
    r.t = j.value("t", std::int64_t{0});
    switch (r.kind) {
      case RecordKind::kPartnerPose:
      case RecordKind::kEgoPose:
        r.pose = j.at("pose").get<std::vector<float>>();
        for (float v : r.pose)
          if (!std::isfinite(v)) throw FormatError("record: non-finite pose value");
        break;
      case RecordKind::kText: r.text = j.at("text").get<std::string>(); break;
      case RecordKind::kAlpha: r.alpha = j.at("alpha").get<std::map<std::string, double>>(); break;
      case RecordKind::kEnd: break;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("record: ") + e.what());
  }
}

nlohmann::json record_to_json(const StreamRecord& r) {
  nlohmann::json j{{"kind", kind_name(r.kind)}, {"t", r.t}};
  if (r.kind == RecordKind::kPartnerPose || r.kind == RecordKind::kEgoPose) j["pose"] = r.pose;
  if (r.kind == RecordKind::kText) j["text"] = r.text;
  if (r.kind == RecordKind::kAlpha) j["alpha"] = r.alpha;
  return j;
}

StreamStats stream_run(std::istream& in, std::ostream& out, std::ostream& log, Engine& engine) {
  using Clock = std::chrono::steady_clock;
  BoundedQueue<Ingested> queue(kStreamQueueCapacity);
  std::thread ingest([&] {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      Ingested item{n, std::string()};
      try {
        item.item = parse_record(line);
      } catch (const FormatError& e) {
        item.item = std::string(e.what());
      }
      queue.push(std::move(item));
    }
    queue.close();
  });

  StreamStats stats;
  const std::size_t F = engine.config().generation.future;
  const bool fwsr = engine.config().fwsr;
  std::size_t pending = 0;  // partner frames not yet answered (segment mode)
  std::vector<float> seed_rows;
  std::size_t seed_count = 0;
  std::int64_t last_partner_t = -1;

  auto write_frames = [&](const Tensor2& frames, Clock::time_point start) {
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    const std::vector<std::string> modules = engine.active_modules();
    for (std::size_t r = 0; r < frames.rows(); ++r) {
      nlohmann::json j{{"kind", "ego_pose"},
                       {"t", stats.ego_frames},
                       {"pose", std::vector<float>(frames.row(r).begin(), frames.row(r).end())},
                       {"modules", modules},
                       {"latency_ms", ms}};
      out << j.dump() << "\n";
      ++stats.ego_frames;
    }
    out.flush();
  };
  auto flush_seed = [&] {
    if (seed_count == 0) return;
    engine.seed_history(Tensor2(seed_count, engine.model().layout.dim(), std::move(seed_rows)));
    seed_rows.clear();
    seed_count = 0;
  };
  auto segment_burst = [&](std::size_t keep) {
    const auto start = Clock::now();
    flush_seed();
    Tensor2 frames = engine.sample_segment();
    ++stats.segments;
    write_frames(slice_rows(frames, 0, keep), start);
  };

  try {
    while (auto item = queue.pop()) {
      if (auto* err = std::get_if<std::string>(&item->item)) {
        log << "line " << item->line << ": skipped: " << *err << "\n";
        ++stats.skipped;
        continue;
      }
      StreamRecord& rec = std::get<StreamRecord>(item->item);
      switch (rec.kind) {
        case RecordKind::kText: engine.set_text(rec.text); break;
        case RecordKind::kAlpha:
          try {
            engine.set_alpha(rec.alpha);
          } catch (const ConfigError& e) {
            log << "line " << item->line << ": skipped: " << e.what() << "\n";
            ++stats.skipped;
          }
          break;
        case RecordKind::kEgoPose:
          if (rec.pose.size() != engine.model().layout.dim()) {
            throw DimensionError("ego_pose record has " + std::to_string(rec.pose.size()) + " features, expected " +
                                 std::to_string(engine.model().layout.dim()));
          }
          seed_rows.insert(seed_rows.end(), rec.pose.begin(), rec.pose.end());
          ++seed_count;
          break;
        case RecordKind::kEnd: break;
        case RecordKind::kPartnerPose: {
          if (rec.t < last_partner_t) {
            log << "line " << item->line << ": skipped: partner t decreased\n";
            ++stats.skipped;
            break;
          }
          last_partner_t = rec.t;
          const auto start = Clock::now();
          engine.push_partner(rec.pose);
          ++stats.partner_frames;
          if (fwsr) {
            if (!engine.mid_segment()) {
              flush_seed();
              ++stats.segments;
            }
            write_frames(engine.fwsr_step(), start);
          } else if (++pending == F) {
            segment_burst(F);
            pending = 0;
          }
          break;
        }
      }
    }
    if (pending > 0) segment_burst(pending);
  } catch (...) {
    queue.close();
    ingest.join();
    throw;
  }
  ingest.join();
  nlohmann::json end{{"kind", "end"},
                     {"t", stats.ego_frames},
                     {"partner_frames", stats.partner_frames},
                     {"ego_frames", stats.ego_frames},
                     {"segments", stats.segments},
                     {"skipped", stats.skipped}};
  out << end.dump() << "\n";
  out.flush();
  return stats;
}

std::string strip_timings(std::string_view transcript) {
  std::istringstream in{std::string(transcript)};
  std::string line, out;
  while (std::getline(in, line)) {
    try {
      auto j = nlohmann::json::parse(line);
      if (j.is_object()) j.erase("latency_ms");
      out += j.dump();
    } catch (const nlohmann::json::exception&) {
      out += line;
    }
    out += "\n";
  }
  return out;
}

}  // namespace remogen
