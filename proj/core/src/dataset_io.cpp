#include "canc/dataset_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "canc/errors.hpp"

namespace canc {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'A', 'N', 'C'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw DataError("dataset file truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

void put_f32(std::ostream& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }
float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

std::uint8_t get_label(std::istream& in) {
  const auto y = get_le<std::uint8_t>(in);
  if (y > 1) throw DataError(fmt::format("label byte {} is not 0 or 1", y));
  return y;
}

}  // namespace

void write_dataset(std::ostream& out, const MaskDataset& ds, std::uint32_t version) {
  if (version != kDatasetVersionSingle && version != kDatasetVersionPaired)
    throw ConfigError(fmt::format("unsupported dataset version {}", version));
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, version);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.mask_size));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.channels));
  put_le<std::uint64_t>(out, ds.masks.size());
  const std::size_t len = ds.sample_shape().size();
  for (const auto& m : ds.masks) {
    if (m.patch.size() != len) throw DataError("mask patch does not match dataset geometry");
    put_le<std::uint8_t>(out, m.clean_label);
    if (version == kDatasetVersionPaired) put_le<std::uint8_t>(out, m.label);
    for (float v : m.patch) put_f32(out, v);
  }
  if (!out) throw DataError("failed writing dataset");
}

void write_dataset(const std::filesystem::path& path, const MaskDataset& ds,
                   std::uint32_t version) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  write_dataset(out, ds, version);
}

MaskDataset read_dataset(std::istream& in, std::size_t masks_per_scene, double tau) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw DataError("not a CANC dataset (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kDatasetVersionSingle && version != kDatasetVersionPaired)
    throw DataError(fmt::format("unsupported dataset version {}", version));
  MaskDataset ds;
  ds.mask_size = get_le<std::uint32_t>(in);
  ds.channels = get_le<std::uint32_t>(in);
  ds.tau = tau;
  const auto count = get_le<std::uint64_t>(in);
  if (ds.mask_size == 0 || ds.channels == 0) throw DataError("dataset header has a zero dimension");

  const std::size_t per_scene = masks_per_scene == 0 ? count : masks_per_scene;
  const auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(per_scene))));
  if (count > 0 && (grid * grid != per_scene || count % per_scene != 0))
    throw DataError(fmt::format("{} records cannot be split into square scenes of {} masks", count,
                                per_scene));

  const std::size_t len = ds.sample_shape().size();
  ds.masks.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Mask m;
    m.clean_label = get_label(in);
    m.label = version == kDatasetVersionPaired ? get_label(in) : m.clean_label;
    m.patch.resize(len);
    for (auto& v : m.patch) {
      v = get_f32(in);
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError(fmt::format("record {}: pixel outside [0,1]", i));
    }
    const std::size_t local = i % per_scene;
    m.scene_id = static_cast<std::uint32_t>(i / per_scene);
    m.row = static_cast<std::uint32_t>(local / grid);
    m.col = static_cast<std::uint32_t>(local % grid);
    ds.masks.push_back(std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after dataset records");
  return ds;
}

MaskDataset read_dataset(const std::filesystem::path& path, std::size_t masks_per_scene,
                         double tau) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open dataset '{}'", path.string()));
  return read_dataset(in, masks_per_scene, tau);
}

}  // namespace canc
