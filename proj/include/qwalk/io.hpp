#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qwalk/fields.hpp"

namespace qwalk {

class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error("config: " + what) {}
};

class io_error : public std::runtime_error {
 public:
  io_error(const std::string& what, const std::string& path)
      : std::runtime_error(what + ": " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Full-precision decimal rendering; round-trips a double exactly.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Comma-separated table with a single header row.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
      : path_(path.string()) {
    out_.open(path, std::ios::binary);
    if (!out_) throw io_error("cannot open for writing", path_);
    write_cells(columns);
  }

  void row(const std::vector<std::string>& cells) { write_cells(cells); }

  void close() {
    out_.close();
    if (!out_) throw io_error("write failed", path_);
  }

 private:
  void write_cells(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) throw io_error("write failed", path_);
  }

  std::string path_;
  std::ofstream out_;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open for checksum", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return fnv1a64(bytes.data(), bytes.size());
}

inline std::string to_hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/**
 * Binary density-field dump. Little-endian layout:
 *   8-byte magic "QWDF0001", uint32 step count, uint32 grid size, then per
 *   step, per node, the row-major 2x2 complex matrix as 8 doubles (re, im).
 */
inline void write_density_dump(const std::filesystem::path& path,
                               const std::vector<DensityField>& fields) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open for writing", path.string());
  out.write("QWDF0001", 8);
  const std::uint32_t steps = static_cast<std::uint32_t>(fields.size());
  const std::uint32_t m = fields.empty() ? 0 : static_cast<std::uint32_t>(fields[0].grid.size());
  out.write(reinterpret_cast<const char*>(&steps), 4);
  out.write(reinterpret_cast<const char*>(&m), 4);
  for (const DensityField& f : fields)
    for (const Mat2& r : f.rho)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double re = r(a, b).real(), im = r(a, b).imag();
          out.write(reinterpret_cast<const char*>(&re), 8);
          out.write(reinterpret_cast<const char*>(&im), 8);
        }
  out.close();
  if (!out) throw io_error("write failed", path.string());
}

inline std::vector<DensityField> read_density_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open", path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "QWDF0001") throw io_error("bad magic", path.string());
  std::uint32_t steps = 0, m = 0;
  in.read(reinterpret_cast<char*>(&steps), 4);
  in.read(reinterpret_cast<char*>(&m), 4);
  if (!in) throw io_error("truncated header", path.string());
  std::vector<DensityField> out;
  out.reserve(steps);
  for (std::uint32_t t = 0; t < steps; ++t) {
    DensityField f{MomentumGrid(static_cast<int>(m))};
    for (std::uint32_t j = 0; j < m; ++j)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          double re = 0, im = 0;
          in.read(reinterpret_cast<char*>(&re), 8);
          in.read(reinterpret_cast<char*>(&im), 8);
          f.rho[j](a, b) = complexd(re, im);
        }
    if (!in) throw io_error("truncated payload", path.string());
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace qwalk
