#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ratelab/core.hpp"
#include "ratelab/plant.hpp"

namespace ratelab {

inline constexpr const char* kTraceHeader =
    "frame_idx,lambda,bpp_mv,bpp_res,distortion,motion_sparsity,warp_error";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

// Reads the trace CSV schema; rows must be sorted by (frame_idx, lambda).
// Grid validation happens in TraceTable's constructor.
inline TraceTable load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty trace file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) {
    throw std::runtime_error(path + ": bad header, expected '" + kTraceHeader + "'");
  }

  std::vector<std::vector<TraceSample>> frames;
  std::size_t line_no = 1;
  long last_frame = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != 7) {
      throw std::runtime_error(where + ": expected 7 columns, got " +
                               std::to_string(fields.size()));
    }
    long frame_idx = 0;
    try {
      frame_idx = std::stol(fields[0]);
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": column frame_idx is not an integer");
    }
    if (frame_idx < 0) throw std::runtime_error(where + ": column frame_idx must be >= 0");
    if (frame_idx != last_frame && frame_idx != last_frame + 1) {
      throw std::runtime_error(where + ": column frame_idx must be sorted and contiguous (got " +
                               std::to_string(frame_idx) + " after " +
                               std::to_string(last_frame) + ")");
    }
    if (frame_idx == last_frame + 1) {
      frames.emplace_back();
      last_frame = frame_idx;
    }

    TraceSample s;
    const char* cols[] = {"lambda", "bpp_mv", "bpp_res", "distortion",
                          "motion_sparsity", "warp_error"};
    double* dst[] = {&s.lambda, &s.bpp_mv, &s.bpp_res, &s.distortion,
                     &s.motion_sparsity, &s.warp_error};
    for (int i = 0; i < 6; ++i) {
      try {
        *dst[i] = parse_double(fields[i + 1]);
      } catch (const std::exception&) {
        throw std::runtime_error(where + ": column " + cols[i] + " is not a number");
      }
    }
    frames.back().push_back(s);
  }
  if (frames.empty()) throw std::runtime_error(path + ": trace has no rows");
  return TraceTable(std::move(frames));
}

inline void write_trace(std::ostream& out,
                        const std::vector<std::vector<TraceSample>>& frames) {
  out << kTraceHeader << "\n";
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const TraceSample& s : frames[f]) {
      out << f << ',' << format_double(s.lambda) << ',' << format_double(s.bpp_mv)
          << ',' << format_double(s.bpp_res) << ',' << format_double(s.distortion)
          << ',' << format_double(s.motion_sparsity) << ','
          << format_double(s.warp_error) << "\n";
    }
  }
}

inline void write_trace(const std::string& path,
                        const std::vector<std::vector<TraceSample>>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  write_trace(out, frames);
}

// Samples a synthetic plant on a geometric lambda grid, producing a trace
// that replays the same response.
inline std::vector<std::vector<TraceSample>> sample_plant_grid(
    const SyntheticPlant& plant, std::size_t num_frames, std::size_t grid_points,
    double lambda_min, double lambda_max) {
  if (grid_points < 2) throw std::invalid_argument("sample_plant_grid: need >= 2 grid points");
  if (!(lambda_min > 0.0 && lambda_min < lambda_max)) {
    throw std::invalid_argument("sample_plant_grid: need 0 < lambda_min < lambda_max");
  }
  const auto contents = plant.sequence(num_frames);
  std::vector<std::vector<TraceSample>> frames(num_frames);
  for (std::size_t f = 0; f < num_frames; ++f) {
    frames[f].reserve(grid_points);
    for (std::size_t k = 0; k < grid_points; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(grid_points - 1);
      const double lambda =
          std::exp(std::log(lambda_min) + t * (std::log(lambda_max) - std::log(lambda_min)));
      const EncodeResult r = plant.encode_p(f, contents[f], lambda);
      frames[f].push_back({lambda, r.bpp_mv, r.bpp_res, r.distortion,
                           r.motion_sparsity, r.warp_error});
    }
  }
  return frames;
}

}  // namespace ratelab
