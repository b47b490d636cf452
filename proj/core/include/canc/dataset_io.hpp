#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "canc/data.hpp"

namespace canc {

/// Flat binary mask dataset, all integers little-endian:
///
///   offset 0   char[4]  magic "CANC"
///          4   u32      version (1 or 2)
///          8   u32      mask size m
///         12   u32      channels C
///         16   u64      record count
///         24   records
///
/// Version 1 record: u8 label, then m*m*C f32 values (HWC, row-major).
/// Writing version 1 stores the clean label; reading it sets both labels.
/// Version 2 record: u8 clean label, u8 observed label, then the patch.
///
/// Scene identity and grid position are not stored; on import the records
/// are taken to be scene-major and row-major within a scene.
inline constexpr std::uint32_t kDatasetVersionSingle = 1;
inline constexpr std::uint32_t kDatasetVersionPaired = 2;

void write_dataset(std::ostream& out, const MaskDataset& ds, std::uint32_t version);
void write_dataset(const std::filesystem::path& path, const MaskDataset& ds,
                   std::uint32_t version);

/// masks_per_scene == 0 treats the whole file as one scene. Must be a perfect
/// square dividing the record count otherwise. Throws DataError on malformed input.
MaskDataset read_dataset(std::istream& in, std::size_t masks_per_scene = 0, double tau = 0.01);
MaskDataset read_dataset(const std::filesystem::path& path, std::size_t masks_per_scene = 0,
                         double tau = 0.01);

}  // namespace canc
