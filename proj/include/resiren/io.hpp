#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace resiren {

// Library-wide error type. Messages are single-line and name the offending
// field/file so the CLI can forward them verbatim.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// CRC-32 (IEEE 802.3, reflected), table-driven. Every binary file ends with
// the CRC of all preceding bytes so corruption is detected on load.
inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t crc = 0) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

// Little-endian byte buffer writer. All formats are explicitly little-endian
// regardless of host order.
class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_le(bits);
    }

    // Appends the CRC of everything written so far, then flushes to disk.
    void finish_to_file(const std::string& path) {
        const std::uint32_t crc = crc32(buf_.data(), buf_.size());
        u32(crc);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open for writing: " + path);
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        if (!out) throw Error("write failed: " + path);
    }

    const std::vector<std::uint8_t>& bytes() const { return buf_; }

private:
    template <typename T>
    void put_le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

// Bounds-checked little-endian reader over a whole file image.
class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)), end_(buf_.size()) {}

    static ByteReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw Error("cannot open: " + path);
        const auto size = static_cast<std::size_t>(in.tellg());
        in.seekg(0);
        std::vector<std::uint8_t> bytes(size);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
        if (!in) throw Error("read failed: " + path);
        return ByteReader(std::move(bytes));
    }

    // Validates the trailing CRC32 and excludes it from subsequent reads.
    void check_crc(const std::string& what) {
        if (buf_.size() < 4) throw Error(what + ": truncated file");
        const std::size_t body = buf_.size() - 4;
        std::uint32_t stored = 0;
        for (int i = 3; i >= 0; --i) stored = (stored << 8) | buf_[body + static_cast<std::size_t>(i)];
        if (crc32(buf_.data(), body) != stored) throw Error(what + ": checksum mismatch (corrupted file)");
        end_ = body;
    }

    void raw(void* p, std::size_t n) {
        if (pos_ + n > end_) throw Error("truncated file (read past end)");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    float f32() {
        const std::uint32_t bits = get_le<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const std::uint64_t bits = get_le<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::size_t remaining() const { return end_ - pos_; }

private:
    template <typename T>
    T get_le() {
        if (pos_ + sizeof(T) > end_) throw Error("truncated file (read past end)");
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::size_t end_;
};

} // namespace resiren
