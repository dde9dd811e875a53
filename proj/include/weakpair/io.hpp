#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/iostreams/filter/bzip2.hpp>
#include <boost/iostreams/filter/gzip.hpp>
#include <boost/iostreams/filtering_stream.hpp>

#include "weakpair/errors.hpp"
#include "weakpair/rng.hpp"

namespace weakpair::io {

namespace fs = std::filesystem;

/// Line reader over a plain, .gz or .bz2 file (chosen by extension).
class LineReader {
 public:
  explicit LineReader(const fs::path& path) : path_(path), file_(path, std::ios::binary) {
    if (!file_) throw DataError("cannot open " + path.string());
    const auto ext = path.extension().string();
    if (ext == ".gz") {
      stream_.push(boost::iostreams::gzip_decompressor());
    } else if (ext == ".bz2") {
      stream_.push(boost::iostreams::bzip2_decompressor());
    }
    stream_.push(file_);
  }

  bool next(std::string& line) {
    try {
      if (!std::getline(stream_, line)) return false;
    } catch (const std::exception& e) {
      throw DataError("error reading " + path_.string() + ": " + e.what());
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

 private:
  fs::path path_;
  std::ifstream file_;
  boost::iostreams::filtering_istream stream_;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline void write_file(const fs::path& path, std::string_view contents) {
  auto out = open_output(path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

/// 16-hex-digit FNV-1a digest of a file's bytes.
inline std::string file_digest(const fs::path& path) {
  static constexpr char hex[] = "0123456789abcdef";
  auto h = fnv1a64(read_file(path));
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

// TSV fields escape backslash, tab, newline and carriage return.
inline std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    switch (s[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      default:
        out.push_back('\\');
        out.push_back(s[i]);
    }
  }
  return out;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace weakpair::io
