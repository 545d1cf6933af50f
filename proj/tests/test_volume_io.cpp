#include <doctest.h>

#include <cstring>
#include <fstream>

#include "dhc/rng.hpp"
#include "dhc/volume_io.hpp"
#include "oracle_helpers.hpp"

using namespace dhc;

namespace {

std::filesystem::path temp_file(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / "dhc_io_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("volume round trip is bit exact") {
  CounterRng rng(5, 0, 0);
  std::vector<float> data(512);
  for (auto& v : data) v = static_cast<float>(rng.next_uniform(-10.0, 10.0));
  const Volume vol({8, 8, 8}, data, Spacing{2.0f, 1.0f, 0.5f});

  const auto path = temp_file("roundtrip.dhcvol");
  write_volume(path, vol);
  const Volume back = read_volume_f32(path);

  CHECK(back.dims() == vol.dims());
  CHECK(back.spacing() == vol.spacing());
  REQUIRE(back.data().size() == vol.data().size());
  CHECK(std::memcmp(back.data().data(), vol.data().data(), 4 * data.size()) == 0);

  // Rewriting produces identical bytes.
  const std::string first = slurp(path);
  write_volume(path, vol);
  CHECK(slurp(path) == first);
}

TEST_CASE("label map round trip") {
  CounterRng rng(6, 0, 0);
  const LabelMap labels = oracle::random_labels({4, 4, 4}, 5, rng);
  const auto path = temp_file("labels.dhcvol");
  write_volume(path, labels);
  const LabelMap back = read_label_map(path);
  CHECK(back == labels);
  CHECK(back.num_classes() == 5);
}

TEST_CASE("read errors carry distinct codes") {
  const Volume vol({2, 2, 2}, std::vector<float>(8, 1.0f));
  const auto path = temp_file("base.dhcvol");
  write_volume(path, vol);
  const std::string good = slurp(path);

  auto expect_code = [&](const std::string& bytes, Errc code) {
    const auto p = temp_file("mutated.dhcvol");
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
      read_volume(p);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };

  SUBCASE("bad magic") {
    std::string bytes = good;
    bytes[0] = 'X';
    expect_code(bytes, Errc::bad_magic);
  }
  SUBCASE("malformed header json") {
    std::string bytes = good;
    bytes[12] = '{';
    bytes[13] = 'x';
    expect_code(bytes, Errc::bad_header);
  }
  SUBCASE("truncated payload") {
    std::string bytes = good.substr(0, good.size() - 4);  // drop one voxel
    expect_code(bytes, Errc::truncated_payload);
  }
  SUBCASE("payload larger than dims") {
    std::string bytes = good + std::string(4, '\0');
    expect_code(bytes, Errc::size_mismatch);
  }
  SUBCASE("label value beyond num_classes") {
    LabelMap labels({2, 2, 2}, 4, std::vector<std::uint8_t>(8, 3));
    const auto p = temp_file("labels_oob.dhcvol");
    write_volume(p, labels);
    std::string bytes = slurp(p);
    // Header claims 4 classes; raise one payload byte beyond it.
    bytes[bytes.size() - 1] = static_cast<char>(9);
    expect_code(bytes, Errc::label_out_of_range);
  }
}
