#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dnf/image.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// ---- Tensor container ("DNFT") ------------------------------------------
//
// magic "DNFT" | version u8 = 1 | dtype u8 (0 = f32) | ndim u8 |
// ndim x u32 dims (LE) | payload, row-major f32 LE.
//
// ndim = 0 is a scalar (one element); a zero dim gives an empty payload.

struct F32Payload {
    Shape dims;
    std::vector<float> values;
};

void write_container(std::ostream& os, const Shape& dims, const std::vector<float>& values);
F32Payload read_container(std::istream& is);

// Tensor convenience wrappers (narrow to f32 on write, widen on read).
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

// ---- PNG ----------------------------------------------------------------

ImageU8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageU8& img);
ImageU8 decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const ImageU8& img);

// ---- Hashing and atomic writes ------------------------------------------

// FNV-1a 64-bit; used for cache keys and provenance ids, not security.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_image(const ImageU8& img);
std::string to_hex(std::uint64_t v);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t len);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace dnf
