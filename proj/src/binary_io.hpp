#pragma once

// Little-endian record reader/writer shared by the checkpoint and pair dumps.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sfpp/errors.hpp"

namespace sfpp::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void put_string16(const std::string& s) {
    if (s.size() > 0xFFFF) throw InvalidArgument("name too long: " + s.substr(0, 32) + "...");
    put<std::uint16_t>(std::uint16_t(s.size()));
    put_bytes(s.data(), s.size());
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(buf_.data(), std::streamsize(buf_.size()));
    if (!f) throw IoError("write failed: " + path.string());
  }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : what_(path.string()) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    buf_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }

  template <typename T>
  T get(const char* field) {
    T v;
    std::memcpy(&v, take(sizeof(T), field), sizeof(T));
    return v;
  }
  const char* take(std::size_t n, const char* field) {
    if (n > buf_.size() - pos_)
      throw FormatError(what_ + ": truncated at offset " + std::to_string(pos_) + " reading " + field);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string get_string16(const char* field) {
    const auto n = get<std::uint16_t>(field);
    const char* p = take(n, field);
    return std::string(p, n);
  }

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw FormatError(what_ + ": " + msg + " at offset " + std::to_string(at));
  }

 private:
  std::string what_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace sfpp::io
