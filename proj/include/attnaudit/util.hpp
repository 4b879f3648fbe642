#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace attnaudit {

/// Input that violates a documented precondition or file schema.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 64-bit FNV-1a. Stable across platforms; used for split assignment,
/// seed derivation and content hashes in manifests.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Derives an independent seed for a named pipeline stage.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
std::string file_hash(const std::filesystem::path& path);

/// Shortest decimal text that round-trips the double.
std::string format_double(double v);
/// Fixed-point formatting, e.g. format_fixed(0.69314, 3) == "0.693".
std::string format_fixed(double v, int digits);

/// Minimal RFC-4180 style CSV table (quoted fields supported).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column; throws ValidationError when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

double parse_double(std::string_view text);

}  // namespace attnaudit
