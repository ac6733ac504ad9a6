#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adverx {

// Decoded raster, one or three interleaved channels, values in the file's
// sample range (8-bit stays 0..255, 16-bit 0..65535).
struct RawImage {
  int64_t height = 0, width = 0;
  int channels = 1;
  int bit_depth = 8;  // 8 or 16 (file container depth)
  std::vector<uint16_t> pixels;
};

RawImage read_png(const std::string& path);
void write_png8(const std::string& path, int64_t height, int64_t width,
                const uint8_t* pixels);
void write_png16(const std::string& path, int64_t height, int64_t width,
                 const uint16_t* pixels);

// Minimal single-frame grayscale DICOM support: implicit or explicit VR
// little endian, uncompressed pixel data. Anything else is rejected.
struct DicomImage {
  int64_t rows = 0, cols = 0;
  int bits_allocated = 16;
  int bits_stored = 12;
  bool monochrome1 = false;  // inverted intensity convention
  std::string model_name;    // ManufacturerModelName (0008,1090), may be empty
  std::vector<uint16_t> pixels;
};

DicomImage read_dicom(const std::string& path);

// Fixture-grade writer (explicit VR little endian, MONOCHROME1/2 only).
void write_basic_dicom(const std::string& path, int64_t rows, int64_t cols,
                       int bits_stored, const uint16_t* pixels,
                       const std::string& model_name = "",
                       bool monochrome1 = false, int number_of_frames = 1);

}  // namespace adverx
