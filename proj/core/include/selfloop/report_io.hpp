#pragma once

#include <selfloop/sensitivity.hpp>
#include <selfloop/types.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace selfloop::io {

/// FNV-1a 64-bit hash, used for config hashes embedded in output files.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

/// Doubles are printed with up to 17 significant digits so that re-running
/// with the same config reproduces byte-identical bodies within one build.
std::string format_double(double x);

/// RFC-4180 CSV writer. Fields containing commas, quotes, or newlines are
/// quoted with doubled inner quotes. Schema/version metadata goes into
/// leading '#' comment lines.
class CsvWriter {
 public:
  void comment(const std::string& text);
  void header(const std::vector<std::string>& names);
  void row(const std::vector<std::string>& fields);
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

std::string csv_escape(const std::string& field);

/// Serializes a sensitivity report to the documented JSON schema
/// ("sensitivity-report-v1", fixed field names).
std::string report_to_json(const sensitivity::SensitivityReport& report,
                           const std::string& config_hash, RunSeed seed);

void write_file(const std::string& path, const std::string& body);

}  // namespace selfloop::io
