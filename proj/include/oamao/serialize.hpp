#pragma once
// Output plumbing: atomic file writes, FNV-1a checksums, CSV with fixed
// significant digits, and a self-describing binary container for complex
// matrices (magic, JSON header, little-endian doubles).

#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace oamao {

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t len) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", (unsigned long long)v);
  return std::string(buf);
}

// Write-then-rename so readers never observe a partial file.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("atomic_write_file: cannot open " + tmp.string());
    f.write(content.data(), (std::streamsize)content.size());
    if (!f) throw std::runtime_error("atomic_write_file: short write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Fixed 6 significant digits; locale-independent.
inline std::string format_sig(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::string(buf);
}

inline std::string csv_join(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  line += '\n';
  return line;
}

// Binary matrix container:
//   8-byte magic "OAMAOBIN", uint64 header length (little-endian),
//   JSON header (utf-8), then rows*cols complex doubles, column-major,
//   little-endian. The header carries dims, a format version, payload
//   checksum, and caller metadata.
inline constexpr char binary_magic[9] = "OAMAOBIN";

inline void check_little_endian() {
  const std::uint32_t probe = 1;
  if (*reinterpret_cast<const unsigned char*>(&probe) != 1)
    throw std::runtime_error("binary container requires a little-endian host");
}

inline std::string encode_matrix(const Eigen::MatrixXcd& m, const std::string& kind,
                                 const nlohmann::json& meta) {
  check_little_endian();
  std::string payload(reinterpret_cast<const char*>(m.data()),
                      sizeof(std::complex<double>) * (std::size_t)m.size());
  nlohmann::json header = {
      {"format", "oamao-matrix"},
      {"format_version", "1.0.0"},
      {"kind", kind},
      {"rows", m.rows()},
      {"cols", m.cols()},
      {"dtype", "complex128"},
      {"layout", "col-major"},
      {"endianness", "little"},
      {"payload_checksum_fnv1a64",
       hex64(fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()),
                     payload.size()))},
      {"meta", meta},
  };
  std::string htext = header.dump();
  std::string out;
  out.reserve(8 + 8 + htext.size() + payload.size());
  out.append(binary_magic, 8);
  std::uint64_t hlen = htext.size();
  out.append(reinterpret_cast<const char*>(&hlen), 8);
  out += htext;
  out += payload;
  return out;
}

inline void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXcd& m,
                         const std::string& kind, const nlohmann::json& meta) {
  atomic_write_file(path, encode_matrix(m, kind, meta));
}

struct LoadedMatrix {
  Eigen::MatrixXcd mat;
  nlohmann::json header;
};

inline LoadedMatrix read_matrix(const std::filesystem::path& path) {
  check_little_endian();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_matrix: cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
  if (content.size() < 16 || content.compare(0, 8, binary_magic, 8) != 0)
    throw std::runtime_error("read_matrix: bad magic in " + path.string());
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, content.data() + 8, 8);
  if (content.size() < 16 + hlen)
    throw std::runtime_error("read_matrix: truncated header in " + path.string());
  LoadedMatrix out;
  out.header = nlohmann::json::parse(content.substr(16, hlen));
  std::size_t rows = out.header.at("rows").get<std::size_t>();
  std::size_t cols = out.header.at("cols").get<std::size_t>();
  std::size_t need = rows * cols * sizeof(std::complex<double>);
  if (content.size() != 16 + hlen + need)
    throw std::runtime_error("read_matrix: payload size mismatch in " + path.string());
  const char* payload = content.data() + 16 + hlen;
  std::string sum = hex64(
      fnv1a64(reinterpret_cast<const unsigned char*>(payload), need));
  if (sum != out.header.at("payload_checksum_fnv1a64").get<std::string>())
    throw std::runtime_error("read_matrix: checksum mismatch in " + path.string());
  out.mat.resize((Eigen::Index)rows, (Eigen::Index)cols);
  std::memcpy(out.mat.data(), payload, need);
  return out;
}

}  // namespace oamao
