#include "dhc/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace dhc {

namespace {

constexpr char kMagic[8] = {'D', 'H', 'C', 'V', 'O', 'L', '0', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string& out, float f) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io_failure, "write failed: " + path.string());
}

std::string header_json(const Dims3& dims, const Spacing& spacing, const char* dtype,
                        int num_classes) {
  nlohmann::json j;
  j["dims"] = {dims.d, dims.h, dims.w};
  j["dtype"] = dtype;
  j["spacing"] = {spacing.z, spacing.y, spacing.x};
  if (num_classes > 0) j["num_classes"] = num_classes;
  return j.dump();
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open for reading: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

void write_volume(const std::filesystem::path& path, const Volume& v) {
  std::string bytes;
  bytes.append(kMagic, sizeof(kMagic));
  const std::string header = header_json(v.dims(), v.spacing(), "f32", 0);
  put_u32_le(bytes, static_cast<std::uint32_t>(header.size()));
  bytes += header;
  bytes.reserve(bytes.size() + 4 * v.data().size());
  for (float f : v.data()) put_f32_le(bytes, f);
  write_file(path, bytes);
}

void write_volume(const std::filesystem::path& path, const LabelMap& l) {
  std::string bytes;
  bytes.append(kMagic, sizeof(kMagic));
  const std::string header = header_json(l.dims(), Spacing{}, "u8", l.num_classes());
  put_u32_le(bytes, static_cast<std::uint32_t>(header.size()));
  bytes += header;
  bytes.append(reinterpret_cast<const char*>(l.data().data()), l.data().size());
  write_file(path, bytes);
}

std::variant<Volume, LabelMap> read_volume(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(Errc::bad_magic, "not a DHCVOL01 file: " + path.string());
  }
  const std::uint32_t header_len = get_u32_le(p + sizeof(kMagic));
  const std::size_t payload_off = sizeof(kMagic) + 4 + header_len;
  if (payload_off > bytes.size()) fail(Errc::bad_header, "header extends past end of file");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(sizeof(kMagic) + 4, header_len));
  } catch (const nlohmann::json::exception&) {
    fail(Errc::bad_header, "malformed header JSON");
  }

  Dims3 dims;
  Spacing spacing;
  std::string dtype;
  try {
    dims = {j.at("dims").at(0).get<int>(), j.at("dims").at(1).get<int>(),
            j.at("dims").at(2).get<int>()};
    dtype = j.at("dtype").get<std::string>();
    spacing = {j.at("spacing").at(0).get<float>(), j.at("spacing").at(1).get<float>(),
               j.at("spacing").at(2).get<float>()};
  } catch (const nlohmann::json::exception&) {
    fail(Errc::bad_header, "header missing required fields");
  }
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) fail(Errc::bad_header, "non-positive dims");
  const std::int64_t n = dims.voxels();
  const std::size_t payload_size = bytes.size() - payload_off;

  if (dtype == "f32") {
    if (payload_size < static_cast<std::size_t>(n) * 4) {
      fail(Errc::truncated_payload, "truncated payload");
    }
    if (payload_size != static_cast<std::size_t>(n) * 4) {
      fail(Errc::size_mismatch, "payload size does not match dims");
    }
    std::vector<float> data(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      data[static_cast<std::size_t>(i)] =
          std::bit_cast<float>(get_u32_le(p + payload_off + 4 * static_cast<std::size_t>(i)));
    }
    return Volume(dims, std::move(data), spacing);
  }
  if (dtype == "u8") {
    int num_classes = 0;
    try {
      num_classes = j.at("num_classes").get<int>();
    } catch (const nlohmann::json::exception&) {
      fail(Errc::bad_header, "label map header missing num_classes");
    }
    if (payload_size < static_cast<std::size_t>(n)) {
      fail(Errc::truncated_payload, "truncated payload");
    }
    if (payload_size != static_cast<std::size_t>(n)) {
      fail(Errc::size_mismatch, "payload size does not match dims");
    }
    std::vector<std::uint8_t> data(p + payload_off, p + payload_off + n);
    // LabelMap construction re-checks the range and reports label_out_of_range.
    return LabelMap(dims, num_classes, std::move(data));
  }
  fail(Errc::bad_header, "unknown dtype: " + dtype);
}

Volume read_volume_f32(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (!std::holds_alternative<Volume>(v)) {
    fail(Errc::bad_header, "expected f32 volume: " + path.string());
  }
  return std::get<Volume>(std::move(v));
}

LabelMap read_label_map(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (!std::holds_alternative<LabelMap>(v)) {
    fail(Errc::bad_header, "expected u8 label map: " + path.string());
  }
  return std::get<LabelMap>(std::move(v));
}

}  // namespace dhc
