#pragma once

// Binary PPM (P6) images and PGM (P5) masks, 8-bit with maxval 255.
// Byte v maps to v/255; writing rounds to the nearest byte after clamping
// to [0,1]. Masks read as 1 where the byte is >= 128 and write as 0/255.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uad/segmodel.hpp"
#include "uad/tensor.hpp"

namespace uad::io {

using Bytes = std::vector<std::uint8_t>;

/// Throws FormatError naming the byte offset of the first malformed field.
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
Bytes encode_ppm(const Tensor& image);
seg::BinaryMask decode_pgm(std::span<const std::uint8_t> bytes);
Bytes encode_pgm(const seg::BinaryMask& mask);

/// File variants; I/O failures throw IoError, bad contents FormatError.
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);
seg::BinaryMask read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const seg::BinaryMask& mask);

Bytes read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace uad::io
