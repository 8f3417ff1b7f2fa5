#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ratelab/core.hpp"
#include "ratelab/metrics.hpp"
#include "ratelab/pipeline.hpp"
#include "ratelab/trainer.hpp"

namespace ratelab {

inline constexpr const char* kFramesHeader =
    "frame,kind,r_eff,lambda_base,delta_gru,lambda,bpp_total,bpp_mv,bpp_res,"
    "distortion,e_t,I_t,E_t,minigop";

inline constexpr const char* kSummaryHeader =
    "dataset,mode,target,avg_bpp,delta_r_pct,avg_quality";

inline constexpr const char* kBdRateHeader = "anchor,test,bd_rate_pct";

inline constexpr const char* kTrainLogHeader =
    "epoch,split,loss_total,loss_dist,loss_budget,loss_smooth,lr";

inline void write_frames_csv(std::ostream& out, const std::vector<FrameRecord>& records) {
  out << kFramesHeader << "\n";
  for (const FrameRecord& r : records) {
    out << r.frame << ',' << r.kind << ',' << format_double(r.r_eff) << ','
        << format_double(r.lambda_base) << ',' << format_double(r.delta_gru) << ','
        << format_double(r.lambda) << ',' << format_double(r.bpp_total) << ','
        << format_double(r.bpp_mv) << ',' << format_double(r.bpp_res) << ','
        << format_double(r.distortion) << ',' << format_double(r.e_t) << ','
        << format_double(r.integral) << ',' << format_double(r.deviation) << ','
        << r.minigop << "\n";
  }
}

inline void write_frames_csv(const std::string& path,
                             const std::vector<FrameRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_frames_csv(out, records);
}

inline std::vector<FrameRecord> read_frames_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kFramesHeader) throw std::runtime_error(path + ": unexpected header");

  std::vector<FrameRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 14) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 14 columns");
    }
    FrameRecord r;
    r.frame = static_cast<std::size_t>(std::stoul(f[0]));
    if (f[1] != "I" && f[1] != "P") {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": kind must be I or P");
    }
    r.kind = f[1][0];
    r.r_eff = parse_double(f[2]);
    r.lambda_base = parse_double(f[3]);
    r.delta_gru = parse_double(f[4]);
    r.lambda = parse_double(f[5]);
    r.bpp_total = parse_double(f[6]);
    r.bpp_mv = parse_double(f[7]);
    r.bpp_res = parse_double(f[8]);
    r.distortion = parse_double(f[9]);
    r.e_t = parse_double(f[10]);
    r.integral = parse_double(f[11]);
    r.deviation = parse_double(f[12]);
    r.minigop = std::stol(f[13]);
    r.quality_db = quality_db(r.distortion);
    records.push_back(r);
  }
  return records;
}

struct SummaryRow {
  std::string dataset;
  std::string mode;
  double target = 0.0;
  double avg_bpp = 0.0;
  double delta_r_pct = 0.0;
  double avg_quality = 0.0;
};

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kSummaryHeader << "\n";
  for (const SummaryRow& r : rows) {
    out << r.dataset << ',' << r.mode << ',' << format_double(r.target) << ','
        << format_double(r.avg_bpp) << ',' << format_double(r.delta_r_pct) << ','
        << format_double(r.avg_quality) << "\n";
  }
}

inline std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSummaryHeader) throw std::runtime_error(path + ": unexpected header");
  std::vector<SummaryRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 6) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 6 columns");
    }
    rows.push_back({f[0], f[1], parse_double(f[2]), parse_double(f[3]), parse_double(f[4]),
                    parse_double(f[5])});
  }
  return rows;
}

struct BdRateRow {
  std::string anchor;
  std::string test;
  double bd_rate_pct = 0.0;
};

inline void write_bdrate_csv(const std::string& path, const std::vector<BdRateRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kBdRateHeader << "\n";
  for (const BdRateRow& r : rows) {
    out << r.anchor << ',' << r.test << ',' << format_double(r.bd_rate_pct) << "\n";
  }
}

inline void write_train_log_csv(const std::string& path,
                                const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kTrainLogHeader << "\n";
  for (const TrainLogRow& r : rows) {
    out << r.epoch << ',' << r.split << ',' << format_double(r.loss_total) << ','
        << format_double(r.loss_dist) << ',' << format_double(r.loss_budget) << ','
        << format_double(r.loss_smooth) << ',' << format_double(r.lr) << "\n";
  }
}

}  // namespace ratelab
