#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Big-endian serialization helpers shared by the FITS writer, the curve
// export and the wire protocol. All multi-byte integers and IEEE-754 reals
// on disk and on the wire are big-endian.

namespace pixellens {

class serial_error : public std::runtime_error {
public:
    explicit serial_error(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint16_t byteswap16(std::uint16_t v) {
    return static_cast<std::uint16_t>((v << 8) | (v >> 8));
}

inline std::uint32_t byteswap32(std::uint32_t v) {
    return (v << 24) | ((v & 0x0000ff00u) << 8) | ((v & 0x00ff0000u) >> 8) | (v >> 24);
}

inline std::uint64_t byteswap64(std::uint64_t v) {
    return (static_cast<std::uint64_t>(byteswap32(static_cast<std::uint32_t>(v))) << 32) |
           byteswap32(static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t host_to_be32(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return byteswap32(v);
    return v;
}

inline std::uint64_t host_to_be64(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return byteswap64(v);
    return v;
}

inline std::uint32_t be32_to_host(std::uint32_t v) { return host_to_be32(v); }
inline std::uint64_t be64_to_host(std::uint64_t v) { return host_to_be64(v); }

inline void put_f32_be(float v, unsigned char* out) {
    std::uint32_t bits = host_to_be32(std::bit_cast<std::uint32_t>(v));
    std::memcpy(out, &bits, 4);
}

inline float get_f32_be(const unsigned char* in) {
    std::uint32_t bits;
    std::memcpy(&bits, in, 4);
    return std::bit_cast<float>(be32_to_host(bits));
}

// Append-only buffer writer used for wire messages and binary records.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        std::uint32_t be = host_to_be32(v);
        append(&be, 4);
    }

    void u64(std::uint64_t v) {
        std::uint64_t be = host_to_be64(v);
        append(&be, 8);
    }

    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    // Length-prefixed UTF-8 string (u32 byte count + bytes).
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        append(s.data(), s.size());
    }

    void raw(const void* data, std::size_t n) { append(data, n); }

    const std::string& data() const { return buf_; }
    std::string take() { return std::move(buf_); }
    std::size_t size() const { return buf_.size(); }

private:
    void append(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    std::string buf_;
};

// Bounds-checked reader over a byte buffer; throws serial_error with the
// offending offset on truncation.
class ByteReader {
public:
    ByteReader(const void* data, std::size_t size)
        : data_(static_cast<const unsigned char*>(data)), size_(size) {}
    explicit ByteReader(std::string_view s) : ByteReader(s.data(), s.size()) {}

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t be;
        std::memcpy(&be, data_ + pos_, 4);
        pos_ += 4;
        return be32_to_host(be);
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t be;
        std::memcpy(&be, data_ + pos_, 8);
        pos_ += 8;
        return be64_to_host(be);
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    void raw(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

    std::size_t remaining() const { return size_ - pos_; }
    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == size_; }

private:
    void need(std::size_t n) const {
        if (size_ - pos_ < n)
            throw serial_error("truncated buffer at byte offset " + std::to_string(pos_) +
                               " (need " + std::to_string(n) + ", have " +
                               std::to_string(size_ - pos_) + ")");
    }
    const unsigned char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

// FNV-1a, used for config hashing and catalog record checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

inline std::uint32_t fnv1a32(const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint32_t h = 0x811c9dc5u;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x01000193u;
    }
    return h;
}

}  // namespace pixellens
