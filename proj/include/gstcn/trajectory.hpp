#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gstcn {

/// One observed vehicle state at a source frame (10 Hz by default).
/// x is lateral (across lanes), y longitudinal (along the road), meters.
struct TrajectoryPoint {
  long vehicle_id = 0;
  long frame = 0;
  double x = 0.0;
  double y = 0.0;
  int lane = 1;
};

struct VehicleTrack {
  long vehicle_id = 0;
  std::vector<TrajectoryPoint> points;  // strictly increasing frame
};

enum class TrajectoryFormat { native_csv, ngsim_csv };

inline constexpr double kFeetToMeters = 0.3048;

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    std::string_view f = comma == std::string_view::npos ? line.substr(start)
                                                         : line.substr(start, comma - start);
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
    fields.emplace_back(f);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename Num>
bool parse_number(const std::string& s, Num& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && !s.empty();
}

}  // namespace detail

// Parses a trajectory CSV. Column lookup is by header name (case-insensitive);
// unknown columns are ignored. NGSIM coordinates are converted feet -> meters.
inline std::vector<VehicleTrack> parse_trajectory_file(std::istream& in, TrajectoryFormat format) {
  std::string line;
  if (!std::getline(in, line)) return {};  // empty file

  const bool ngsim = format == TrajectoryFormat::ngsim_csv;
  const char* id_col = ngsim ? "vehicle_id" : "vehicle_id";
  const char* frame_col = ngsim ? "frame_id" : "frame";
  const char* x_col = ngsim ? "local_x" : "x";
  const char* y_col = ngsim ? "local_y" : "y";
  const char* lane_col = ngsim ? "lane_id" : "lane";

  auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> cols;
  for (std::size_t i = 0; i < header.size(); ++i) cols[detail::lower(header[i])] = i;
  for (const char* req : {id_col, frame_col, x_col, y_col, lane_col})
    if (!cols.count(req))
      throw std::runtime_error(std::string("missing column: ") + req);

  std::size_t ci = cols[id_col], cf = cols[frame_col], cx = cols[x_col], cy = cols[y_col],
              cl = cols[lane_col];
  std::size_t needed = std::max({ci, cf, cx, cy, cl}) + 1;

  std::vector<VehicleTrack> tracks;
  std::map<long, std::size_t> index;  // vehicle_id -> slot, first-appearance order kept in tracks
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_line(line);
    auto fail = [&](const char* what) -> std::runtime_error {
      return std::runtime_error("line " + std::to_string(line_no) + ": " + what);
    };
    if (fields.size() < needed) throw fail("too few fields");
    TrajectoryPoint p;
    if (!detail::parse_number(fields[ci], p.vehicle_id)) throw fail("invalid vehicle_id");
    if (!detail::parse_number(fields[cf], p.frame)) throw fail("invalid frame");
    if (!detail::parse_number(fields[cx], p.x)) throw fail("invalid x");
    if (!detail::parse_number(fields[cy], p.y)) throw fail("invalid y");
    if (!detail::parse_number(fields[cl], p.lane)) throw fail("invalid lane");
    if (p.frame < 0) throw fail("negative frame");
    if (p.lane < 1) throw fail("lane below 1");
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw fail("non-finite coordinate");
    if (ngsim) {
      p.x *= kFeetToMeters;
      p.y *= kFeetToMeters;
    }
    auto it = index.find(p.vehicle_id);
    if (it == index.end()) {
      index.emplace(p.vehicle_id, tracks.size());
      tracks.push_back(VehicleTrack{p.vehicle_id, {p}});
    } else {
      tracks[it->second].points.push_back(p);
    }
  }

  for (auto& t : tracks) {
    std::stable_sort(t.points.begin(), t.points.end(),
                     [](const TrajectoryPoint& a, const TrajectoryPoint& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < t.points.size(); ++i)
      if (t.points[i].frame == t.points[i - 1].frame)
        throw std::runtime_error("duplicate frame " + std::to_string(t.points[i].frame) +
                                 " for vehicle " + std::to_string(t.vehicle_id));
  }
  return tracks;
}

inline void write_native_csv(std::ostream& out, const std::vector<VehicleTrack>& tracks) {
  out << "vehicle_id,frame,x,y,lane\n";
  char buf[160];
  for (const auto& t : tracks)
    for (const auto& p : t.points) {
      std::snprintf(buf, sizeof(buf), "%ld,%ld,%.9g,%.9g,%d\n", p.vehicle_id, p.frame, p.x, p.y,
                    p.lane);
      out << buf;
    }
}

}  // namespace gstcn
