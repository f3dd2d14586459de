#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "pixellens/frame.hpp"
#include "pixellens/rng.hpp"

using namespace pixellens;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto p = fs::temp_directory_path() / "pixellens_frame_tests";
    fs::create_directories(p);
    return p;
}

std::string pad_card(std::string s) {
    s.resize(80, ' ');
    return s;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("hand-encoded 2x2 file decodes pixel (row 0, col 1) = 2.0") {
    // Built by hand, independently of the writer: one header block with the
    // five mandatory cards plus END, then four big-endian 32-bit reals.
    std::string bytes;
    bytes += pad_card("SIMPLE  =                    T");
    bytes += pad_card("BITPIX  =                  -32");
    bytes += pad_card("NAXIS   =                    2");
    bytes += pad_card("NAXIS1  =                    2");
    bytes += pad_card("NAXIS2  =                    2");
    bytes += pad_card("END");
    while (bytes.size() < 2880) bytes += pad_card("");
    const unsigned char data[16] = {
        0x3F, 0x80, 0x00, 0x00,  // 1.0f
        0x40, 0x00, 0x00, 0x00,  // 2.0f
        0x40, 0x40, 0x00, 0x00,  // 3.0f
        0x40, 0x80, 0x00, 0x00,  // 4.0f
    };
    bytes.append(reinterpret_cast<const char*>(data), 16);
    bytes.resize(5760, '\0');

    const auto path = temp_dir() / "hand2x2.fits";
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }

    const Frame f = read_frame(path.string());
    REQUIRE(f.width == 2);
    REQUIRE(f.height == 2);
    CHECK(f.at(1, 0) == 2.0f);
    CHECK(f.at(0, 0) == 1.0f);
    CHECK(f.at(0, 1) == 3.0f);
    CHECK(f.at(1, 1) == 4.0f);
}

TEST_CASE("1x1 frame writes exactly one header and one data block (5760 bytes)") {
    Frame f = Frame::zeros(1, 1);
    const auto path = temp_dir() / "one.fits";
    write_frame(f, path.string());
    CHECK(fs::file_size(path) == 5760);
}

TEST_CASE("512x512 frame data segment pads to a 2880 multiple") {
    Frame f = Frame::constant(512, 512, 1.5f);
    const auto path = temp_dir() / "big.fits";
    write_frame(f, path.string());
    // 512*512*4 = 1048576 bytes -> 365 blocks of 2880 = 1051200, plus header.
    CHECK(fs::file_size(path) == 2880 + 1051200);
}

TEST_CASE("write/read round-trip is bit exact over random frames") {
    Rng rng(20260809);
    for (int iter = 0; iter < 40; ++iter) {
        const int w = 1 + static_cast<int>(rng.uniform_index(17));
        const int h = 1 + static_cast<int>(rng.uniform_index(17));
        Frame f = Frame::zeros(w, h);
        for (auto& p : f.pixels) {
            const double pick = rng.uniform();
            if (pick < 0.1) p = 0.0f;
            else if (pick < 0.2) p = static_cast<float>(-rng.uniform(0.0, 1e-30));
            else p = static_cast<float>(rng.uniform(-1e5, 1e5));
        }
        f.epoch_id = static_cast<int>(rng.uniform_index(1000)) - 3;
        f.exposure = rng.uniform(1e-3, 1e4);
        if (rng.uniform() < 0.5) f.seeing = rng.uniform(0.5, 10.0);

        const auto path = temp_dir() / "roundtrip.fits";
        write_frame(f, path.string());
        const Frame g = read_frame(path.string());
        REQUIRE(bitwise_equal(f, g));
    }
}

TEST_CASE("NaN pixels round-trip bit-exactly when masked") {
    Frame f = Frame::zeros(3, 3);
    f.ensure_mask();
    f.pixels[4] = std::numeric_limits<float>::quiet_NaN();
    f.mask[4] = 1;
    const auto path = temp_dir() / "nan.fits";
    write_frame(f, path.string());
    const Frame g = read_frame(path.string());
    CHECK(std::isnan(g.pixels[4]));
    CHECK(std::memcmp(&f.pixels[4], &g.pixels[4], 4) == 0);
}

TEST_CASE("NaN without mask flag is rejected before write") {
    Frame f = Frame::zeros(2, 2);
    f.pixels[1] = std::numeric_limits<float>::infinity();
    const auto path = temp_dir() / "badnan.fits";
    CHECK_THROWS_WITH(write_frame(f, path.string()),
                      Catch::Matchers::ContainsSubstring("non-finite pixel"));
}

TEST_CASE("file whose first card is not SIMPLE is rejected as malformed") {
    std::string bytes;
    bytes += pad_card("FOOBAR  =                    T");
    bytes += pad_card("END");
    bytes.resize(2880, ' ');
    bytes.resize(5760, '\0');
    const auto path = temp_dir() / "nosimple.fits";
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH(read_frame(path.string()),
                      Catch::Matchers::ContainsSubstring("malformed header"));
}

TEST_CASE("unsupported BITPIX is rejected with its byte offset") {
    std::string bytes;
    bytes += pad_card("SIMPLE  =                    T");
    bytes += pad_card("BITPIX  =                   16");
    bytes += pad_card("NAXIS   =                    2");
    bytes += pad_card("NAXIS1  =                    1");
    bytes += pad_card("NAXIS2  =                    1");
    bytes += pad_card("END");
    bytes.resize(2880, ' ');
    bytes.resize(5760, '\0');
    const auto path = temp_dir() / "bitpix16.fits";
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH(read_frame(path.string()),
                      Catch::Matchers::ContainsSubstring("unsupported BITPIX 16") &&
                          Catch::Matchers::ContainsSubstring("byte offset 80"));
}

TEST_CASE("truncated data block is rejected with the observed byte count") {
    Frame f = Frame::constant(10, 10, 2.0f);
    const auto path = temp_dir() / "trunc.fits";
    write_frame(f, path.string());
    auto bytes = file_bytes(path);
    bytes.resize(2880 + 100);  // 400 data bytes expected
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH(read_frame(path.string()),
                      Catch::Matchers::ContainsSubstring("truncated data block"));
}

TEST_CASE("mask sidecar round-trips") {
    std::vector<std::uint8_t> mask(64, 0);
    mask[7] = 1;
    mask[63] = 1;
    const auto path = temp_dir() / "mask.bin";
    write_mask(mask, path.string());
    CHECK(read_mask(path.string(), 64) == mask);
    CHECK_THROWS(read_mask(path.string(), 65));
}

TEST_CASE("16384x16384 with 256 workers gives a 16x16 grid of 1024x1024 cores") {
    const auto tiles = tile_partition(16384, 16384, 256, 8);
    REQUIRE(tiles.size() == 256);
    for (const auto& t : tiles) {
        CHECK(t.core_w == 1024);
        CHECK(t.core_h == 1024);
    }
    CHECK(tiles[0].x0 == 0);
    CHECK(tiles[255].x0 == 15 * 1024);
    CHECK(tiles[255].y0 == 15 * 1024);
}

TEST_CASE("single worker covers the frame with halo clipped at borders") {
    const auto tiles = tile_partition(512, 512, 1, 8);
    REQUIRE(tiles.size() == 1);
    const auto& t = tiles[0];
    CHECK(t.core_w == 512);
    CHECK(t.core_h == 512);
    CHECK(t.outer_x0() == 0);
    CHECK(t.outer_y0() == 0);
    CHECK(t.outer_x1() == 512);
    CHECK(t.outer_y1() == 512);
}

TEST_CASE("100x100 with 4 workers gives 2x2 tiles of 50x50 with interior halos") {
    const auto tiles = tile_partition(100, 100, 4, 3);
    REQUIRE(tiles.size() == 4);
    for (const auto& t : tiles) {
        CHECK(t.core_w == 50);
        CHECK(t.core_h == 50);
    }
    CHECK(tiles[3].outer_x0() == 47);  // 3 px halo into the neighbor
    CHECK(tiles[3].outer_y0() == 47);
    CHECK(tiles[0].outer_x1() == 53);
    CHECK(tiles[0].outer_y1() == 53);
}

TEST_CASE("tile cores exactly cover the frame for every worker count up to 64") {
    const int w = 97, h = 101;
    for (int n = 1; n <= 64; ++n) {
        const auto tiles = tile_partition(w, h, n, 3);
        REQUIRE(!tiles.empty());
        REQUIRE(tiles.size() <= static_cast<std::size_t>(n));
        std::vector<int> painted(static_cast<std::size_t>(w) * h, 0);
        for (const auto& t : tiles) {
            REQUIRE(t.x0 >= 0);
            REQUIRE(t.y0 >= 0);
            REQUIRE(t.x0 + t.core_w <= w);
            REQUIRE(t.y0 + t.core_h <= h);
            for (int y = t.y0; y < t.y0 + t.core_h; ++y)
                for (int x = t.x0; x < t.x0 + t.core_w; ++x)
                    ++painted[static_cast<std::size_t>(y) * w + x];
        }
        for (int v : painted) REQUIRE(v == 1);
    }
}

TEST_CASE("worker counts outside [1, 256] are rejected") {
    CHECK_THROWS_WITH(tile_partition(512, 512, 257, 3),
                      Catch::Matchers::ContainsSubstring("architecture cap of 256"));
    CHECK_THROWS(tile_partition(512, 512, 0, 3));
}
