#pragma once

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "softbci/error.hpp"

namespace softbci::detail {

// Buffered CSV writer; values are formatted with {fmt}'s shortest
// round-trip representation so output is byte-stable.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::string_view header) : path_(path) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot create " + path.string());
    fmt::format_to(std::back_inserter(buf_), "{}\n", header);
  }
  ~CsvWriter() {
    try {
      close();
    } catch (...) {
    }
  }
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  template <class... Args>
  void row(fmt::format_string<Args...> format, Args&&... args) {
    fmt::format_to(std::back_inserter(buf_), format, std::forward<Args>(args)...);
    buf_.push_back('\n');
    ++rows_;
    if (buf_.size() > (1u << 20)) flush();
  }

  void flush() {
    out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    buf_.clear();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

  void close() {
    if (!out_.is_open()) return;
    flush();
    out_.close();
  }

  std::size_t rows() const noexcept { return rows_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  fmt::memory_buffer buf_;
  std::size_t rows_ = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw IoError("CSV column `" + std::string(name) + "` missing");
  }
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace softbci::detail
