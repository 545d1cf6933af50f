#pragma once

#include <filesystem>
#include <variant>

#include "dhc/tensor.hpp"

namespace dhc {

// Portable volume container. Layout, all little-endian:
//   8-byte magic "DHCVOL01"
//   u32 header length
//   UTF-8 JSON header {dims:[D,H,W], dtype:"f32"|"u8", spacing:[sz,sy,sx],
//                      num_classes (u8 label maps only)}
//   raw payload (f32 scalar field or u8 label indices)
void write_volume(const std::filesystem::path& path, const Volume& v);
void write_volume(const std::filesystem::path& path, const LabelMap& l);

std::variant<Volume, LabelMap> read_volume(const std::filesystem::path& path);

// Typed readers; throw Errc::bad_header when the file holds the other dtype.
Volume read_volume_f32(const std::filesystem::path& path);
LabelMap read_label_map(const std::filesystem::path& path);

}  // namespace dhc
