#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mflab {

/// Provenance stamped into every CSV and JSON artifact.
struct ArtifactHeader {
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Shortest round-trip decimal form ("nan", "inf", "-inf" for non-finite).
std::string format_double(double v);

/// "# config_hash=...\n# seed=...\n"
std::string csv_header_comment(const ArtifactHeader& header);

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

/// Splits one CSV line on commas (no quoting support; none of our files need it).
std::vector<std::string> split_csv_line(std::string_view line);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace mflab
