#include "oat/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "oat/core/error.hpp"
#include "oat/io/tensor_file.hpp"

namespace oat::eval {

namespace {

constexpr const char* kHeader = "image_id\tmethod\tnis\tsnr_db\tpsnr\tssim";

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  const auto* p = reinterpret_cast<const std::byte*>(text.data());
  io::write_file_bytes(path, std::span<const std::byte>(p, text.size()));
}

}  // namespace

std::string MetricRecord::variant() const { return nis > 0 ? method + "-nis" + std::to_string(nis) : method; }

Stats summarize(std::vector<double> values) {
  Stats s;
  if (values.empty()) return s;
  const auto n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / (n - 1));
  }
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  s.median = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  return s;
}

std::vector<Aggregate> MetricReport::aggregates() const {
  std::vector<std::string> order;
  for (const auto& r : records)
    if (std::find(order.begin(), order.end(), r.variant()) == order.end()) order.push_back(r.variant());
  std::vector<Aggregate> out;
  for (const auto& v : order) {
    std::vector<double> p, s;
    for (const auto& r : records)
      if (r.variant() == v) {
        p.push_back(r.psnr);
        s.push_back(r.ssim);
      }
    out.push_back({v, p.size(), summarize(p), summarize(s)});
  }
  return out;
}

std::optional<Aggregate> MetricReport::find(const std::string& variant) const {
  for (auto& a : aggregates())
    if (a.variant == variant) return a;
  return std::nullopt;
}

void write_report(const std::string& path, const MetricReport& report) {
  std::string text = "# config_hash " + report.config_hash + "\n" + kHeader + "\n";
  for (const auto& r : report.records)
    text += r.image_id + "\t" + r.method + "\t" + std::to_string(r.nis) + "\t" + g17(r.snr_db) + "\t" + g17(r.psnr) +
            "\t" + g17(r.ssim) + "\n";
  write_text(path, text);
}

MetricReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path);
  MetricReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# config_hash ", 0) == 0) {
      report.config_hash = line.substr(14);
      continue;
    }
    if (line.empty() || line == kHeader) continue;
    std::istringstream ss(line);
    std::vector<std::string> f;
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 6) throw IoError(path + ":" + std::to_string(lineno) + ": expected 6 fields");
    try {
      report.records.push_back({f[0], f[1], std::stoul(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return report;
}

std::string summary_table(const MetricReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %5s  %8s %7s %8s   %7s %7s %7s\n", "variant", "n", "PSNR", "sd", "median",
                "SSIM", "sd", "median");
  out += buf;
  for (const auto& a : report.aggregates()) {
    std::snprintf(buf, sizeof buf, "%-14s %5zu  %8.3f %7.3f %8.3f   %7.4f %7.4f %7.4f\n", a.variant.c_str(), a.count,
                  a.psnr.mean, a.psnr.stddev, a.psnr.median, a.ssim.mean, a.ssim.stddev, a.ssim.median);
    out += buf;
  }
  return out;
}

void write_timings(const std::string& path, const std::vector<TimingRecord>& timings) {
  std::string text = "image_id\tvariant\tseconds\n";
  for (const auto& t : timings) text += t.image_id + "\t" + t.variant + "\t" + g17(t.seconds) + "\n";
  write_text(path, text);
}

}  // namespace oat::eval
