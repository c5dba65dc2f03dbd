#include "afrl/io.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <openssl/evp.h>

namespace afrl {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 computation failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(fmt::format("short write to '{}'", path.string()));
}

void BinaryWriter::put_string(std::string_view s) {
  put<std::uint64_t>(s.size());
  buffer_.append(s);
}

void BinaryWriter::put_matrix(const Eigen::MatrixXd& m) {
  put<std::int64_t>(m.rows());
  put<std::int64_t>(m.cols());
  buffer_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
}

std::string BinaryReader::get_string() {
  const auto n = get<std::uint64_t>();
  if (n > remaining()) throw DataError("truncated input: string length exceeds remaining bytes");
  return std::string(take(n), n);
}

Eigen::MatrixXd BinaryReader::get_matrix() {
  const auto rows = get<std::int64_t>();
  const auto cols = get<std::int64_t>();
  if (rows < 0 || cols < 0) throw DataError("corrupt matrix header");
  const auto count = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
  if (count > remaining() / sizeof(double)) throw DataError("truncated input: matrix data exceeds remaining bytes");
  Eigen::MatrixXd m(rows, cols);
  if (count > 0) std::memcpy(m.data(), take(count * sizeof(double)), count * sizeof(double));
  return m;
}

const char* BinaryReader::take(std::size_t n) {
  if (n > remaining()) {
    throw DataError(fmt::format("truncated input: needed {} bytes at offset {}, {} available", n, offset_, remaining()));
  }
  const char* p = bytes_.data() + offset_;
  offset_ += n;
  return p;
}

namespace {
constexpr std::string_view kCheckpointMagic = "AFRLCKPT";
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  BinaryWriter w;
  w.put_string(kCheckpointMagic);
  w.put_string(kCheckpointVersion);
  w.put_string(ckpt.kind);
  w.put_string(ckpt.meta.dump());
  w.put_string(ckpt.payload);
  w.put_string(sha256_hex(ckpt.payload));
  return w.bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes, std::string_view expected_kind) {
  BinaryReader r(bytes);
  if (r.get_string() != kCheckpointMagic) throw DataError("not a checkpoint file (bad magic)");
  const std::string version = r.get_string();
  if (version != kCheckpointVersion) {
    throw DataError(fmt::format("checkpoint version mismatch: file has '{}', this build reads '{}'", version,
                                kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.kind = r.get_string();
  if (ckpt.kind != expected_kind) {
    throw DataError(fmt::format("checkpoint holds '{}', expected '{}'", ckpt.kind, expected_kind));
  }
  const std::string meta = r.get_string();
  ckpt.meta = nlohmann::json::parse(meta, nullptr, false);
  if (ckpt.meta.is_discarded()) throw DataError("checkpoint metadata is not valid JSON");
  ckpt.payload = r.get_string();
  if (r.get_string() != sha256_hex(ckpt.payload)) throw DataError("checkpoint payload checksum mismatch");
  if (!r.at_end()) throw DataError("checkpoint has trailing bytes");
  return ckpt;
}

}  // namespace afrl
