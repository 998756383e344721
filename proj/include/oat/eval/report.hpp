#pragma once

#include <optional>
#include <string>
#include <vector>

namespace oat::eval {

struct MetricRecord {
  std::string image_id;
  std::string method;
  /// Inference steps for diffusion methods, 0 otherwise.
  std::size_t nis = 0;
  double snr_db = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;

  /// "lbp", "fdunet", "dar-nis25", ...
  std::string variant() const;
};

struct Stats {
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single record.
  double stddev = 0.0;
  double median = 0.0;
};

Stats summarize(std::vector<double> values);

struct Aggregate {
  std::string variant;
  std::size_t count = 0;
  Stats psnr, ssim;
};

struct MetricReport {
  std::string config_hash;
  std::vector<MetricRecord> records;

  /// One entry per variant, in order of first appearance.
  std::vector<Aggregate> aggregates() const;
  std::optional<Aggregate> find(const std::string& variant) const;
};

/// Tab-separated records, one per line, values printed with 17 significant
/// digits so a read-back report is bit-identical.
void write_report(const std::string& path, const MetricReport& report);
MetricReport read_report(const std::string& path);

/// Human-readable table of the aggregates.
std::string summary_table(const MetricReport& report);

struct TimingRecord {
  std::string image_id;
  std::string variant;
  double seconds = 0.0;
};

/// Wall-clock times live apart from the metric report, which must stay
/// reproducible.
void write_timings(const std::string& path, const std::vector<TimingRecord>& timings);

}  // namespace oat::eval
