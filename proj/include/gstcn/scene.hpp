#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gstcn/trajectory.hpp"

namespace gstcn {

struct SceneConfig {
  int past_len = 15;    // 3 s at 5 Hz
  int future_len = 25;  // 5 s at 5 Hz
  int stride = 1;
  double longitudinal_range = 100.0;  // meters either way
  int lane_distance = 2;              // |lane delta| <= this
  bool local_frame = true;            // re-center on the reference vehicle
};

/// One training/eval sample: past tensor (2,T,N), future ground truth (2,F,N),
/// both row-major [coord][step][vehicle], coordinates in the scene-local frame
/// whose origin is the reference vehicle's position at the last past frame.
struct SceneSegment {
  int past_len = 0;
  int future_len = 0;
  std::size_t n_vehicles = 0;
  std::vector<double> past;    // 2*T*N
  std::vector<double> future;  // 2*F*N
  std::vector<long> vehicle_ids;
  std::vector<int> lane_ids;
  std::size_t reference_vehicle = 0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  double past_at(int c, int t, std::size_t n) const {
    return past[(static_cast<std::size_t>(c) * past_len + t) * n_vehicles + n];
  }
  double& past_at(int c, int t, std::size_t n) {
    return past[(static_cast<std::size_t>(c) * past_len + t) * n_vehicles + n];
  }
  double future_at(int c, int t, std::size_t n) const {
    return future[(static_cast<std::size_t>(c) * future_len + t) * n_vehicles + n];
  }
  double& future_at(int c, int t, std::size_t n) {
    return future[(static_cast<std::size_t>(c) * future_len + t) * n_vehicles + n];
  }
};

// Slides a (T+F)-frame window over gap-free tracks at the target rate. Every
// covered vehicle may serve as reference; its neighbors are the vehicles
// within the longitudinal range and lane distance at the last past frame.
// One segment per (window, reference).
inline std::vector<SceneSegment> segment_scenes(const std::vector<VehicleTrack>& tracks,
                                                const SceneConfig& config) {
  const long window = config.past_len + config.future_len;
  std::vector<SceneSegment> out;
  if (tracks.empty()) return out;

  struct Span {
    std::size_t track;
    long first, last;
  };
  std::vector<Span> spans;
  long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const auto& pts = tracks[i].points;
    if (pts.empty()) continue;
    for (std::size_t k = 1; k < pts.size(); ++k)
      if (pts[k].frame != pts[k - 1].frame + 1)
        throw std::invalid_argument("segment_scenes: track " + std::to_string(tracks[i].vehicle_id) +
                                    " has gaps");
    spans.push_back({i, pts.front().frame, pts.back().frame});
    lo = std::min(lo, pts.front().frame);
    hi = std::max(hi, pts.back().frame);
  }
  if (spans.empty() || hi - lo + 1 < window) return out;

  std::sort(spans.begin(), spans.end(), [&](const Span& a, const Span& b) {
    return tracks[a.track].vehicle_id < tracks[b.track].vehicle_id;
  });

  for (long ws = lo; ws + window - 1 <= hi; ws += config.stride) {
    const long last_past = ws + config.past_len - 1;
    std::vector<std::size_t> covered;
    for (const auto& s : spans)
      if (s.first <= ws && s.last >= ws + window - 1) covered.push_back(s.track);
    if (covered.empty()) continue;

    auto point_at = [&](std::size_t ti, long frame) -> const TrajectoryPoint& {
      const auto& pts = tracks[ti].points;
      return pts[static_cast<std::size_t>(frame - pts.front().frame)];
    };

    for (std::size_t ref : covered) {
      const TrajectoryPoint& rp = point_at(ref, last_past);
      std::vector<std::size_t> members;
      for (std::size_t ti : covered) {
        const TrajectoryPoint& p = point_at(ti, last_past);
        if (std::fabs(p.y - rp.y) <= config.longitudinal_range &&
            std::abs(p.lane - rp.lane) <= config.lane_distance)
          members.push_back(ti);
      }

      SceneSegment seg;
      seg.past_len = config.past_len;
      seg.future_len = config.future_len;
      seg.n_vehicles = members.size();
      seg.past.assign(2 * config.past_len * members.size(), 0.0);
      seg.future.assign(2 * config.future_len * members.size(), 0.0);
      seg.origin_x = config.local_frame ? rp.x : 0.0;
      seg.origin_y = config.local_frame ? rp.y : 0.0;
      for (std::size_t mi = 0; mi < members.size(); ++mi) {
        std::size_t ti = members[mi];
        if (ti == ref) seg.reference_vehicle = mi;
        seg.vehicle_ids.push_back(tracks[ti].vehicle_id);
        seg.lane_ids.push_back(point_at(ti, last_past).lane);
        for (int t = 0; t < config.past_len; ++t) {
          const TrajectoryPoint& p = point_at(ti, ws + t);
          seg.past_at(0, t, mi) = p.x - seg.origin_x;
          seg.past_at(1, t, mi) = p.y - seg.origin_y;
        }
        for (int t = 0; t < config.future_len; ++t) {
          const TrajectoryPoint& p = point_at(ti, last_past + 1 + t);
          seg.future_at(0, t, mi) = p.x - seg.origin_x;
          seg.future_at(1, t, mi) = p.y - seg.origin_y;
        }
      }
      out.push_back(std::move(seg));
    }
  }
  return out;
}

// --- JSONL serialization: one object per segment per line -------------------

inline nlohmann::ordered_json segment_to_json(const SceneSegment& s) {
  nlohmann::ordered_json j;
  j["n"] = s.n_vehicles;
  j["t_past"] = s.past_len;
  j["t_future"] = s.future_len;
  j["past"] = s.past;
  j["future"] = s.future;
  j["vehicle_ids"] = s.vehicle_ids;
  j["lane_ids"] = s.lane_ids;
  j["reference"] = s.reference_vehicle;
  j["origin"] = {s.origin_x, s.origin_y};
  return j;
}

inline SceneSegment segment_from_json(const nlohmann::json& j) {
  SceneSegment s;
  s.n_vehicles = j.at("n").get<std::size_t>();
  s.past_len = j.at("t_past").get<int>();
  s.future_len = j.at("t_future").get<int>();
  s.past = j.at("past").get<std::vector<double>>();
  s.future = j.at("future").get<std::vector<double>>();
  s.vehicle_ids = j.at("vehicle_ids").get<std::vector<long>>();
  s.lane_ids = j.at("lane_ids").get<std::vector<int>>();
  s.reference_vehicle = j.at("reference").get<std::size_t>();
  s.origin_x = j.at("origin")[0].get<double>();
  s.origin_y = j.at("origin")[1].get<double>();
  if (s.past.size() != 2 * static_cast<std::size_t>(s.past_len) * s.n_vehicles ||
      s.future.size() != 2 * static_cast<std::size_t>(s.future_len) * s.n_vehicles)
    throw std::runtime_error("segment_from_json: tensor sizes inconsistent with shape");
  return s;
}

inline void write_segments_jsonl(std::ostream& out, const std::vector<SceneSegment>& segments) {
  for (const auto& s : segments) out << segment_to_json(s).dump() << '\n';
}

inline std::vector<SceneSegment> read_segments_jsonl(std::istream& in) {
  std::vector<SceneSegment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(segment_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gstcn
