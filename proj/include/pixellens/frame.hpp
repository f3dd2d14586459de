#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixellens/bytes.hpp"

// Pixel-image data model, tile geometry and the on-disk frame format shared
// by every stage. Frames are value types and treated as immutable: every
// operation in the pipeline takes frames by const reference and returns a
// new one.

namespace pixellens {

class pipeline_error : public std::runtime_error {
public:
    explicit pipeline_error(const std::string& what) : std::runtime_error(what) {}
};

struct Frame {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;        // row-major, width*height ADU
    std::vector<std::uint8_t> mask;   // empty = all valid; else width*height, 0 = good
    int epoch_id = 0;
    double exposure = 1.0;            // seconds
    std::optional<double> seeing;     // PSF FWHM in px, informational

    static Frame constant(int w, int h, float value) {
        Frame f;
        f.width = w;
        f.height = h;
        f.pixels.assign(static_cast<std::size_t>(w) * h, value);
        return f;
    }

    static Frame zeros(int w, int h) { return constant(w, h, 0.0f); }

    std::size_t size() const { return pixels.size(); }

    float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool has_mask() const { return !mask.empty(); }

    bool masked(int x, int y) const {
        return has_mask() && mask[static_cast<std::size_t>(y) * width + x] != 0;
    }

    void ensure_mask() {
        if (mask.empty()) mask.assign(pixels.size(), 0);
    }

    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

inline void validate_frame(const Frame& f) {
    if (f.width < 1 || f.height < 1)
        throw pipeline_error("invalid frame: width and height must be >= 1");
    if (f.pixels.size() != static_cast<std::size_t>(f.width) * f.height)
        throw pipeline_error("invalid frame: pixel count does not match dimensions");
    if (!f.mask.empty() && f.mask.size() != f.pixels.size())
        throw pipeline_error("invalid frame: mask size does not match dimensions");
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
        if (!std::isfinite(f.pixels[i]) && (f.mask.empty() || f.mask[i] == 0))
            throw pipeline_error("invalid frame: non-finite pixel at index " + std::to_string(i) +
                                 " without mask flag");
    }
}

inline bool bitwise_equal(const Frame& a, const Frame& b) {
    if (a.width != b.width || a.height != b.height) return false;
    if (a.epoch_id != b.epoch_id || a.exposure != b.exposure) return false;
    if (a.seeing.has_value() != b.seeing.has_value()) return false;
    if (a.seeing && *a.seeing != *b.seeing) return false;
    if (a.mask != b.mask) return false;
    return std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(float)) == 0 &&
           a.pixels.size() == b.pixels.size();
}

inline std::uint64_t frame_hash(const Frame& f) {
    std::uint64_t h = fnv1a64(f.pixels.data(), f.pixels.size() * sizeof(float));
    if (!f.mask.empty()) h = fnv1a64(f.mask.data(), f.mask.size(), h);
    return h;
}

// ---------------------------------------------------------------------------
// Tile geometry

struct TileSpec {
    int x0 = 0;        // core origin
    int y0 = 0;
    int core_w = 0;    // owned region, disjoint across the partition
    int core_h = 0;
    int halo = 0;      // read-only overlap requested on each side
    int frame_w = 0;   // parent frame extent, for clipping
    int frame_h = 0;

    // Halo extent clipped at the frame borders.
    int outer_x0() const { return std::max(0, x0 - halo); }
    int outer_y0() const { return std::max(0, y0 - halo); }
    int outer_x1() const { return std::min(frame_w, x0 + core_w + halo); }  // exclusive
    int outer_y1() const { return std::min(frame_h, y0 + core_h + halo); }
    int outer_w() const { return outer_x1() - outer_x0(); }
    int outer_h() const { return outer_y1() - outer_y0(); }

    bool core_contains(int x, int y) const {
        return x >= x0 && x < x0 + core_w && y >= y0 && y < y0 + core_h;
    }
};

inline constexpr int kMaxWorkers = 256;

// Splits n into g1*g2 with g1 <= g2 and g1 as large as possible (the most
// square factorization).
inline void most_square_factors(int n, int& g1, int& g2) {
    g1 = 1;
    for (int d = static_cast<int>(std::sqrt(static_cast<double>(n))); d >= 1; --d) {
        if (n % d == 0) {
            g1 = d;
            break;
        }
    }
    g2 = n / g1;
}

// Partition a width x height frame into one tile per worker. The grid is the
// most-square factorization of n_workers, oriented so the larger factor runs
// along the longer frame dimension. Last row/column tiles absorb remainder
// pixels. If the frame cannot host that many unit-wide tiles the grid is
// clamped and the extra workers idle.
inline std::vector<TileSpec> tile_partition(int width, int height, int n_workers, int halo) {
    if (n_workers < 1) throw pipeline_error("tile_partition: need at least one worker");
    if (n_workers > kMaxWorkers)
        throw pipeline_error("tile_partition: architecture cap of 256 workers exceeded (" +
                             std::to_string(n_workers) + " requested)");
    if (width < 1 || height < 1) throw pipeline_error("tile_partition: empty frame");
    if (halo < 0) throw pipeline_error("tile_partition: negative halo");

    int g1, g2;
    most_square_factors(n_workers, g1, g2);
    int cols = width >= height ? g2 : g1;
    int rows = n_workers / cols;
    cols = std::min(cols, width);
    rows = std::min(rows, height);

    const int base_w = width / cols;
    const int base_h = height / rows;

    std::vector<TileSpec> tiles;
    tiles.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            TileSpec t;
            t.x0 = c * base_w;
            t.y0 = r * base_h;
            t.core_w = (c == cols - 1) ? width - t.x0 : base_w;
            t.core_h = (r == rows - 1) ? height - t.y0 : base_h;
            t.halo = halo;
            t.frame_w = width;
            t.frame_h = height;
            tiles.push_back(t);
        }
    }
    return tiles;
}

// ---------------------------------------------------------------------------
// FITS-subset I/O
//
// Layout: 2880-byte header blocks of 80-byte ASCII cards, mandatory cards in
// order SIMPLE, BITPIX(-32), NAXIS(2), NAXIS1, NAXIS2, optional EPOCH,
// EXPTIME, SEEING, then END; data as big-endian IEEE-754 32-bit reals,
// row-major, zero-padded to a 2880-byte multiple.

inline constexpr std::size_t kFitsBlock = 2880;
inline constexpr std::size_t kFitsCard = 80;

namespace detail {

inline std::string fits_card(const std::string& keyword, const std::string& value) {
    char buf[kFitsCard + 1];
    // keyword padded to 8, "= ", value right-justified to column 30.
    std::snprintf(buf, sizeof buf, "%-8s= %20s", keyword.c_str(), value.c_str());
    std::string card(buf);
    card.resize(kFitsCard, ' ');
    return card;
}

inline std::string fits_int_card(const std::string& keyword, long long v) {
    return fits_card(keyword, std::to_string(v));
}

inline std::string fits_real_card(const std::string& keyword, double v) {
    char num[40];
    std::snprintf(num, sizeof num, "%.17g", v);
    std::string s(num);
    // FITS wants reals to look real.
    if (s.find_first_of(".eEnN") == std::string::npos) s += ".";
    return fits_card(keyword, s);
}

inline std::string fits_end_card() {
    std::string card = "END";
    card.resize(kFitsCard, ' ');
    return card;
}

}  // namespace detail

inline void write_frame(const Frame& frame, const std::string& path) {
    validate_frame(frame);

    std::string header;
    header += detail::fits_card("SIMPLE", "T");
    header += detail::fits_int_card("BITPIX", -32);
    header += detail::fits_int_card("NAXIS", 2);
    header += detail::fits_int_card("NAXIS1", frame.width);
    header += detail::fits_int_card("NAXIS2", frame.height);
    header += detail::fits_int_card("EPOCH", frame.epoch_id);
    header += detail::fits_real_card("EXPTIME", frame.exposure);
    if (frame.seeing) header += detail::fits_real_card("SEEING", *frame.seeing);
    header += detail::fits_end_card();
    while (header.size() % kFitsBlock != 0) header.append(kFitsCard, ' ');

    std::string data(frame.pixels.size() * 4, '\0');
    for (std::size_t i = 0; i < frame.pixels.size(); ++i)
        put_f32_be(frame.pixels[i], reinterpret_cast<unsigned char*>(data.data()) + 4 * i);
    while (data.size() % kFitsBlock != 0) data.push_back('\0');

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw pipeline_error("write_frame: cannot open " + path);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw pipeline_error("write_frame: I/O failure writing " + path);
}

namespace detail {

struct CardView {
    std::string keyword;
    std::string value;
};

inline CardView parse_card(const std::string& raw, std::size_t byte_offset) {
    CardView c;
    std::string kw = raw.substr(0, 8);
    while (!kw.empty() && kw.back() == ' ') kw.pop_back();
    c.keyword = kw;
    if (c.keyword == "END") return c;
    if (raw[8] != '=' || raw[9] != ' ')
        throw pipeline_error("read_frame: malformed header card at byte offset " +
                             std::to_string(byte_offset) + " (missing '= ')");
    std::string val = raw.substr(10);
    const auto b = val.find_first_not_of(' ');
    if (b == std::string::npos)
        throw pipeline_error("read_frame: malformed header card at byte offset " +
                             std::to_string(byte_offset) + " (empty value)");
    const auto e = val.find_last_not_of(' ');
    c.value = val.substr(b, e - b + 1);
    return c;
}

inline long long parse_int_value(const CardView& c, std::size_t byte_offset) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(c.value, &pos);
        if (pos != c.value.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw pipeline_error("read_frame: malformed header card at byte offset " +
                             std::to_string(byte_offset) + " (bad integer '" + c.value + "')");
    }
}

inline double parse_real_value(const CardView& c, std::size_t byte_offset) {
    try {
        std::size_t pos = 0;
        double v = std::stod(c.value, &pos);
        if (pos != c.value.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw pipeline_error("read_frame: malformed header card at byte offset " +
                             std::to_string(byte_offset) + " (bad real '" + c.value + "')");
    }
}

}  // namespace detail

inline Frame read_frame(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pipeline_error("read_frame: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < kFitsBlock)
        throw pipeline_error("read_frame: truncated header block at byte offset " +
                             std::to_string(bytes.size()) + " in " + path);

    Frame frame;
    long long naxis1 = -1, naxis2 = -1;
    bool saw_end = false;
    std::size_t offset = 0;
    int card_index = 0;
    // Mandatory cards, in order.
    static const char* kMandatory[5] = {"SIMPLE", "BITPIX", "NAXIS", "NAXIS1", "NAXIS2"};

    while (!saw_end) {
        if (offset + kFitsCard > bytes.size())
            throw pipeline_error("read_frame: truncated header block at byte offset " +
                                 std::to_string(offset) + " in " + path);
        const std::string raw = bytes.substr(offset, kFitsCard);
        const auto card = detail::parse_card(raw, offset);

        if (card_index < 5) {
            if (card.keyword != kMandatory[card_index])
                throw pipeline_error("read_frame: malformed header at byte offset " +
                                     std::to_string(offset) + ": expected " +
                                     kMandatory[card_index] + ", found '" + card.keyword + "'");
            switch (card_index) {
                case 0:
                    if (card.value != "T")
                        throw pipeline_error("read_frame: malformed header at byte offset " +
                                             std::to_string(offset) + ": SIMPLE must be T");
                    break;
                case 1: {
                    long long bitpix = detail::parse_int_value(card, offset);
                    if (bitpix != -32)
                        throw pipeline_error("read_frame: unsupported BITPIX " +
                                             std::to_string(bitpix) + " at byte offset " +
                                             std::to_string(offset) + " (only -32 supported)");
                    break;
                }
                case 2: {
                    long long naxis = detail::parse_int_value(card, offset);
                    if (naxis != 2)
                        throw pipeline_error("read_frame: unsupported NAXIS " +
                                             std::to_string(naxis) + " at byte offset " +
                                             std::to_string(offset) + " (only 2-D supported)");
                    break;
                }
                case 3:
                    naxis1 = detail::parse_int_value(card, offset);
                    break;
                case 4:
                    naxis2 = detail::parse_int_value(card, offset);
                    break;
            }
        } else if (card.keyword == "END") {
            saw_end = true;
        } else if (card.keyword == "EPOCH") {
            frame.epoch_id = static_cast<int>(detail::parse_int_value(card, offset));
        } else if (card.keyword == "EXPTIME") {
            frame.exposure = detail::parse_real_value(card, offset);
        } else if (card.keyword == "SEEING") {
            frame.seeing = detail::parse_real_value(card, offset);
        } else {
            throw pipeline_error("read_frame: malformed header card at byte offset " +
                                 std::to_string(offset) + ": unknown keyword '" + card.keyword +
                                 "'");
        }
        offset += kFitsCard;
        ++card_index;
    }

    if (naxis1 < 1 || naxis2 < 1)
        throw pipeline_error("read_frame: invalid dimensions " + std::to_string(naxis1) + "x" +
                             std::to_string(naxis2) + " in " + path);

    // Data starts at the next 2880-byte boundary.
    std::size_t data_start = ((offset + kFitsBlock - 1) / kFitsBlock) * kFitsBlock;
    const std::size_t n_pixels = static_cast<std::size_t>(naxis1) * static_cast<std::size_t>(naxis2);
    if (bytes.size() < data_start + n_pixels * 4)
        throw pipeline_error("read_frame: truncated data block at byte offset " +
                             std::to_string(bytes.size()) + " (expected " +
                             std::to_string(data_start + n_pixels * 4) + "+ bytes) in " + path);

    frame.width = static_cast<int>(naxis1);
    frame.height = static_cast<int>(naxis2);
    frame.pixels.resize(n_pixels);
    const unsigned char* d = reinterpret_cast<const unsigned char*>(bytes.data()) + data_start;
    for (std::size_t i = 0; i < n_pixels; ++i) frame.pixels[i] = get_f32_be(d + 4 * i);
    return frame;
}

// Bad-pixel mask sidecar: one byte per pixel, row-major, 0 = good.
inline void write_mask(const std::vector<std::uint8_t>& mask, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw pipeline_error("write_mask: cannot open " + path);
    out.write(reinterpret_cast<const char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
    if (!out) throw pipeline_error("write_mask: I/O failure writing " + path);
}

inline std::vector<std::uint8_t> read_mask(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pipeline_error("read_mask: cannot open " + path);
    std::vector<std::uint8_t> mask((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (mask.size() != expected)
        throw pipeline_error("read_mask: " + path + " holds " + std::to_string(mask.size()) +
                             " bytes, expected " + std::to_string(expected));
    return mask;
}

}  // namespace pixellens
