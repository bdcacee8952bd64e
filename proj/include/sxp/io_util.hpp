#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <zlib.h>

#include "sxp/error.hpp"

namespace sxp {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

inline std::uint32_t crc32_of(const std::string& payload) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

// Sequential little-endian writer into an in-memory payload buffer.
class PayloadWriter {
public:
    void u16(std::uint16_t v) { raw(&v, sizeof v); }
    void i32(std::int32_t v) { raw(&v, sizeof v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void bytes(const void* data, std::size_t n) { raw(data, n); }

    const std::string& str() const { return buffer_; }

private:
    void raw(const void* data, std::size_t n) {
        buffer_.append(reinterpret_cast<const char*>(data), n);
    }
    std::string buffer_;
};

// Bounds-checked little-endian reader over a byte buffer.
class PayloadReader {
public:
    PayloadReader(const char* data, std::size_t size, std::string context)
        : data_(data), size_(size), context_(std::move(context)) {}

    std::uint16_t u16() { return read<std::uint16_t>(); }
    std::int32_t i32() { return read<std::int32_t>(); }
    std::uint32_t u32() { return read<std::uint32_t>(); }
    double f64() { return read<double>(); }

    void bytes(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

    std::size_t remaining() const { return size_ - pos_; }

    void expect_end() const {
        if (pos_ != size_) throw format_error(context_ + ": trailing bytes after payload");
    }

private:
    template <typename T>
    T read() {
        T v;
        bytes(&v, sizeof v);
        return v;
    }

    void need(std::size_t n) const {
        if (size_ - pos_ < n) throw format_error(context_ + ": truncated file");
    }

    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string context_;
};

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open for reading: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw io_error("read failure: " + path);
    return bytes;
}

// Write-temp-then-rename so a crashed writer never leaves a torn file behind.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw io_error("write failure: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw io_error("rename failure: " + tmp + " -> " + path + " (" + ec.message() + ")");
}

// Assemble magic + payload + trailing CRC32 of the payload and write atomically.
inline void write_checksummed_file(const std::string& path, const std::string& magic,
                                   const std::string& payload) {
    std::string bytes;
    bytes.reserve(magic.size() + payload.size() + 4);
    bytes += magic;
    bytes += payload;
    const std::uint32_t crc = crc32_of(payload);
    bytes.append(reinterpret_cast<const char*>(&crc), 4);
    write_file_atomic(path, bytes);
}

// Validate magic and CRC; returns the payload bytes between them.
inline std::string read_checksummed_file(const std::string& path, const std::string& magic) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < magic.size() + 4) throw format_error(path + ": file too short");
    if (bytes.compare(0, magic.size(), magic) != 0)
        throw format_error(path + ": bad magic bytes");
    std::string payload = bytes.substr(magic.size(), bytes.size() - magic.size() - 4);
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    if (stored != crc32_of(payload)) throw format_error(path + ": CRC32 mismatch");
    return payload;
}

} // namespace sxp
