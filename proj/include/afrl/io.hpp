#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace afrl {

// Error categories map onto the CLI exit codes (1 usage, 2 data, 3 training).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Little-endian, length-prefixed binary encoding for artifacts and checkpoints.
class BinaryWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    buffer_.append(p, sizeof(T));
  }

  void put_string(std::string_view s);

  template <class T>
    requires std::is_arithmetic_v<T>
  void put_vector(std::span<const T> values) {
    put<std::uint64_t>(values.size());
    const auto* p = reinterpret_cast<const char*>(values.data());
    buffer_.append(p, values.size_bytes());
  }

  void put_matrix(const Eigen::MatrixXd& m);

  const std::string& bytes() const { return buffer_; }

 private:
  std::string buffer_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }

  std::string get_string();

  template <class T>
    requires std::is_arithmetic_v<T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > remaining() / sizeof(T)) throw DataError("truncated input: vector length exceeds remaining bytes");
    std::vector<T> out(n);
    if (n > 0) std::memcpy(out.data(), take(n * sizeof(T)), n * sizeof(T));
    return out;
  }

  Eigen::MatrixXd get_matrix();

  std::size_t remaining() const { return bytes_.size() - offset_; }
  bool at_end() const { return offset_ == bytes_.size(); }

 private:
  const char* take(std::size_t n);

  std::string_view bytes_;
  std::size_t offset_ = 0;
};

/// Every checkpoint shares one envelope: magic, format version, kind, JSON
/// metadata and a binary payload.
inline constexpr std::string_view kCheckpointVersion = "afrl-ckpt-v1";

struct Checkpoint {
  std::string kind;
  nlohmann::json meta;
  std::string payload;
};

std::string encode_checkpoint(const Checkpoint& ckpt);

/// Throws DataError on bad magic, truncation, a version other than
/// kCheckpointVersion (naming both), or a kind other than `expected_kind`.
Checkpoint decode_checkpoint(std::string_view bytes, std::string_view expected_kind);

}  // namespace afrl
