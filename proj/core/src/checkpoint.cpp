#include "dashkin/checkpoint.hpp"

#include "dashkin/error.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <map>

namespace dashkin {

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'K', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError("truncated checkpoint " + path.string());
  }
  return v;
}

std::string get_string(std::istream& in, std::size_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw FormatError("truncated checkpoint " + path.string());
  }
  return s;
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  // Write-then-rename so an interrupted run never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) {
      throw IoError("cannot write checkpoint " + tmp.string());
    }
    out.write(kMagic.data(), 4);
    put(out, kVersion);
    put(out, static_cast<std::uint64_t>(ckpt.metadata_json.size()));
    out.write(ckpt.metadata_json.data(), static_cast<std::streamsize>(ckpt.metadata_json.size()));
    put(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, m] : ckpt.tensors) {
      put(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put(out, static_cast<std::uint32_t>(m.rows()));
      put(out, static_cast<std::uint32_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) {
      throw IoError("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.metadata_json = get_string(in, get<std::uint64_t>(in, path), path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, get<std::uint32_t>(in, path), path);
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    nn::Matrix m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw FormatError("truncated checkpoint " + path.string());
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

Checkpoint snapshot(const models::ParamList& params, std::string metadata_json) {
  Checkpoint ckpt;
  ckpt.metadata_json = std::move(metadata_json);
  for (const auto& p : params) {
    ckpt.tensors.emplace_back(p.name, p.var.value());
  }
  return ckpt;
}

void restore(const Checkpoint& ckpt, models::ParamList& params) {
  std::map<std::string, const nn::Matrix*> by_name;
  for (const auto& [name, m] : ckpt.tensors) {
    by_name[name] = &m;
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint has no tensor '" + p.name + "'");
    }
    if (it->second->rows() != p.var.rows() || it->second->cols() != p.var.cols()) {
      throw DimensionError("checkpoint tensor '" + p.name + "' has the wrong shape");
    }
    p.var.mutable_value() = *it->second;
  }
}

}  // namespace dashkin
