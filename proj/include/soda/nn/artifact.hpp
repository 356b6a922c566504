#pragma once

#include <bit>
#include <cstring>
#include <string>
#include <vector>

#include "soda/fs.hpp"
#include "soda/hash.hpp"
#include "soda/nn/model.hpp"

namespace soda::nn {

// params.bin layout (little-endian):
//   "SODAPRM1" | u32 version | u32 tensor count
//   per tensor: u32 name length | name | u32 rows | u32 cols | f64 values, row-major
//   32-byte SHA-256 of everything before it
inline constexpr char kParamsMagic[8] = {'S', 'O', 'D', 'A', 'P', 'R', 'M', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "artifact I/O assumes a little-endian host");

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) fail(ErrorCode::CorruptArtifact, "params.bin truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class P>
std::vector<std::uint8_t> serialize_params(const P& params, std::uint32_t version = kFormatVersion) {
  std::vector<std::uint8_t> out(kParamsMagic, kParamsMagic + 8);
  const auto list = tensors(params);
  detail::put_u32(out, version);
  detail::put_u32(out, static_cast<std::uint32_t>(list.size()));
  for (const auto& t : list) {
    detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(t.value->rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(t.value->cols()));
    for (Eigen::Index i = 0; i < t.value->size(); ++i) {
      const double v = static_cast<double>(t.value->data()[i]);
      const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
      out.insert(out.end(), p, p + 8);
    }
  }
  const auto digest = sha256(out);
  out.insert(out.end(), digest.begin(), digest.end());
  return out;
}

/// Fills a shaped parameter struct from params.bin bytes. Names and shapes
/// must match exactly.
template <class P>
void deserialize_params(std::span<const std::uint8_t> bytes, P& params) {
  if (bytes.size() < 8 + 4 + 4 + 32) fail(ErrorCode::CorruptArtifact, "params.bin truncated");
  if (std::memcmp(bytes.data(), kParamsMagic, 8) != 0) fail(ErrorCode::CorruptArtifact, "bad magic");
  detail::Reader header(bytes.subspan(8));
  const std::uint32_t version = header.u32();
  if (version > kFormatVersion) {
    fail(ErrorCode::VersionMismatch, "artifact format version " + std::to_string(version) +
                                         " is newer than supported version " + std::to_string(kFormatVersion));
  }
  const auto body = bytes.first(bytes.size() - 32);
  const auto digest = sha256(body);
  if (std::memcmp(digest.data(), bytes.data() + body.size(), 32) != 0) {
    fail(ErrorCode::CorruptArtifact, "checksum mismatch");
  }
  detail::Reader r(body.subspan(12));
  auto list = tensors(params);
  if (r.u32() != list.size()) fail(ErrorCode::CorruptArtifact, "tensor count mismatch");
  for (auto& t : list) {
    std::string name(r.u32(), '\0');
    r.read(name.data(), name.size());
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (name != t.name || rows != t.value->rows() || cols != t.value->cols()) {
      fail(ErrorCode::CorruptArtifact, "tensor " + name + " does not match expected " + t.name);
    }
    for (Eigen::Index i = 0; i < t.value->size(); ++i) {
      double v;
      r.read(&v, 8);
      t.value->data()[i] = static_cast<typename P::Scalar>(v);
    }
  }
  if (r.remaining() != 0) fail(ErrorCode::CorruptArtifact, "trailing bytes in params.bin");
}

/// Short stable identifier derived from the serialized weights.
inline std::string model_id(const CtrModel& m) { return sha256_hex(serialize_params(m.weights)).substr(0, 16); }

inline void save_model(const CtrModel& m, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "cannot create model directory " + dir.string());
  const auto params = serialize_params(m.weights);
  write_atomic(dir / "params.bin", params);
  write_atomic(dir / "vocab.json", m.vocab.to_json().dump(2) + "\n");
  write_atomic(dir / "thresholds.json", nlohmann::json(m.thresholds).dump(2) + "\n");
  write_atomic(dir / "stats.json", nlohmann::json(m.stats).dump(2) + "\n");
  const nlohmann::json config = {{"format_version", kFormatVersion},
                                 {"model_id", sha256_hex(params).substr(0, 16)},
                                 {"fusion", m.config},
                                 {"schema", to_json(m.schema)},
                                 {"seed", m.seed},
                                 {"training", m.training}};
  write_atomic(dir / "config.json", config.dump(2) + "\n");
}

inline CtrModel load_model(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::NotFound, "model directory not found: " + dir.string());
  auto parse = [&](const char* name) {
    try {
      return nlohmann::json::parse(read_text(dir / name));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::CorruptArtifact, std::string(name) + ": " + e.what());
    }
  };
  const auto config = parse("config.json");
  CtrModel m;
  try {
    const auto version = config.at("format_version").get<std::uint32_t>();
    if (version > kFormatVersion) {
      fail(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) + " unsupported");
    }
    m.config = config.at("fusion").get<FusionConfig>();
    m.schema = schema_from_json(config.at("schema").at("continuous"), config.at("schema").at("categorical"));
    m.seed = config.at("seed").get<std::uint64_t>();
    m.training = config.value("training", nlohmann::json::object());
    m.vocab = Vocabulary::from_json(parse("vocab.json"));
    m.thresholds = parse("thresholds.json").get<BucketThresholds>();
    m.stats = parse("stats.json").get<NormalizationStats>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptArtifact, std::string("model metadata: ") + e.what());
  }
  m.weights = FusionParams<float>(m.config);
  deserialize_params(read_bytes(dir / "params.bin"), m.weights);
  return m;
}

}  // namespace soda::nn
