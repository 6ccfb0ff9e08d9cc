#pragma once

// FANT tensor file format, used by all inter-stage feature files:
//   magic "FANT" | version u32 | rank u32 | dims u32[rank] | payload f32[]
// All integers and floats little-endian, payload row-major.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fan/error.h"
#include "fan/tensor.h"

namespace fan {

constexpr std::uint32_t kFantVersion = 1;

namespace io_detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw parse_error("truncated FANT file: " + path);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline float get_f32(std::istream& is, const std::string& path) {
    const std::uint32_t bits = get_u32(is, path);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace io_detail

template <typename T>
void write_fant(std::ostream& os, const Tensor<T>& t) {
    os.write("FANT", 4);
    io_detail::put_u32(os, kFantVersion);
    io_detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (const std::size_t d : t.dims()) {
        io_detail::put_u32(os, static_cast<std::uint32_t>(d));
    }
    for (std::size_t i = 0; i < t.numel(); ++i) {
        io_detail::put_f32(os, static_cast<float>(t[i]));
    }
}

template <typename T>
void write_fant(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(ErrorClass::generic, "cannot open for writing: " + path);
    }
    write_fant(os, t);
    if (!os) {
        throw Error(ErrorClass::generic, "write failed: " + path);
    }
}

template <typename T = float>
Tensor<T> read_fant(std::istream& is, const std::string& path = "<stream>") {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FANT", 4) != 0) {
        throw parse_error("not a FANT file: " + path);
    }
    const std::uint32_t version = io_detail::get_u32(is, path);
    if (version != kFantVersion) {
        throw parse_error("unsupported FANT version in " + path);
    }
    const std::uint32_t rank = io_detail::get_u32(is, path);
    if (rank == 0 || rank > 8) {
        throw parse_error("bad FANT rank in " + path);
    }
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        dims[i] = io_detail::get_u32(is, path);
        if (dims[i] == 0) {
            throw parse_error("zero extent in " + path);
        }
        numel *= dims[i];
    }
    std::vector<T> data(numel);
    for (std::size_t i = 0; i < numel; ++i) {
        data[i] = static_cast<T>(io_detail::get_f32(is, path));
    }
    return Tensor<T>(std::move(dims), std::move(data));
}

template <typename T = float>
Tensor<T> read_fant(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw missing_input_error("cannot open FANT file: " + path);
    }
    return read_fant<T>(is, path);
}

}  // namespace fan
