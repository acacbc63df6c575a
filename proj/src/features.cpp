#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "priorshift/errors.hpp"
#include "priorshift/ingest.hpp"

namespace priorshift {

namespace {

constexpr std::array<char, 8> kMagic{'P', 'S', 'F', 'E', 'A', 'T', '0', '1'};

template <typename T>
void putLe(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T getLe(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> bytes;
  const auto offset = static_cast<std::uint64_t>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
    throw ParseError(path.string() + ": truncated feature file", offset);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void writeFeatures(const FeatureMap& features, const std::filesystem::path& path) {
  std::vector<std::int64_t> ids;
  ids.reserve(features.size());
  for (const auto& [id, v] : features) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  const auto dim = features.empty() ? Eigen::Index{0} : features.begin()->second.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  putLe<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  putLe<std::uint32_t>(out, 0);
  putLe<std::uint64_t>(out, ids.size());
  for (auto id : ids) {
    const auto& v = features.at(id);
    if (v.size() != dim) throw ValidationError("feature vectors must share one dimension");
    putLe<std::int64_t>(out, id);
    for (Eigen::Index d = 0; d < dim; ++d) putLe<double>(out, v[d]);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

FeatureMap readFeatures(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw ParseError(path.string() + ": bad feature file magic", 0);
  const auto dim = getLe<std::uint32_t>(in, path);
  getLe<std::uint32_t>(in, path);
  const auto count = getLe<std::uint64_t>(in, path);
  FeatureMap out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id = getLe<std::int64_t>(in, path);
    Eigen::VectorXd v(dim);
    for (std::uint32_t d = 0; d < dim; ++d) v[d] = getLe<double>(in, path);
    if (!out.emplace(id, std::move(v)).second)
      throw IntegrityError(path.string() + ": duplicate question_id " + std::to_string(id));
  }
  return out;
}

std::size_t attachFeatures(Dataset& data, const FeatureMap& features) {
  std::size_t attached = 0;
  for (auto& inst : data.instances) {
    if (auto it = features.find(inst.question_id); it != features.end()) {
      inst.features = it->second;
      ++attached;
    }
  }
  return attached;
}

}  // namespace priorshift
