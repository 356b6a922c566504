#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "soda/error.hpp"

namespace soda {

namespace fs = std::filesystem;

inline std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Test hook: called after the temporary file is written and before the
/// rename. Throwing from it simulates a crash mid-write.
inline std::function<void(const fs::path&)>& atomic_write_fault_hook() {
  static std::function<void(const fs::path&)> hook;
  return hook;
}

/// Writes via a sibling temp file and rename(2), so readers never observe a
/// partial file.
inline void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  static std::atomic<std::uint64_t> counter{0};
  const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "directory does not exist: " + dir.string());
  const fs::path tmp =
      dir / ("." + path.filename().string() + ".tmp" + std::to_string(counter.fetch_add(1)));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
  }
  try {
    if (auto& hook = atomic_write_fault_hook()) hook(tmp);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::IoError, "rename failed for " + path.string());
  }
}

inline void write_atomic(const fs::path& path, std::string_view text) {
  write_atomic(path, std::span<const std::uint8_t>(
                         reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace soda
