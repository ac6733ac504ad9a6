#include "adverx/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "adverx/error.hpp"

namespace adverx {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::IoError, path + ": " + what);
}

}  // namespace

RawImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) io_fail(path, "cannot open");

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw Error(ErrorKind::FormatError, path + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  if (!png) io_fail(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    io_fail(path, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::CorruptPixelData, path + ": PNG decode error");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // file is big-endian
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  RawImage img;
  img.height = png_get_image_height(png, info);
  img.width = png_get_image_width(png, info);
  img.bit_depth = png_get_bit_depth(png, info) == 16 ? 16 : 8;
  img.channels = int(png_get_channels(png, info));

  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> raster(size_t(img.height) * rowbytes);
  std::vector<png_bytep> rows(size_t(img.height));
  for (int64_t y = 0; y < img.height; ++y)
    rows[size_t(y)] = raster.data() + size_t(y) * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img.pixels.resize(size_t(img.height) * size_t(img.width) * size_t(img.channels));
  if (img.bit_depth == 8) {
    for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = raster[i];
  } else {
    const uint16_t* src = reinterpret_cast<const uint16_t*>(raster.data());
    std::memcpy(img.pixels.data(), src, img.pixels.size() * 2);
  }
  return img;
}

namespace {

void write_png_impl(const std::string& path, int64_t height, int64_t width,
                    int bit_depth, const void* pixels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) io_fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) io_fail(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    io_fail(path, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_fail(path, "PNG encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const size_t rowbytes = size_t(width) * (bit_depth == 16 ? 2 : 1);
  const png_byte* base = static_cast<const png_byte*>(pixels);
  for (int64_t y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(base + size_t(y) * rowbytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png8(const std::string& path, int64_t height, int64_t width,
                const uint8_t* pixels) {
  write_png_impl(path, height, width, 8, pixels);
}

void write_png16(const std::string& path, int64_t height, int64_t width,
                 const uint16_t* pixels) {
  write_png_impl(path, height, width, 16, pixels);
}

// ---- DICOM ------------------------------------------------------------------

namespace {

struct Cursor {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;
  const std::string& path;

  bool eof() const { return pos >= n; }
  size_t left() const { return n - pos; }

  void need(size_t k, const char* what) {
    if (left() < k)
      throw Error(ErrorKind::CorruptPixelData,
                  path + ": truncated DICOM while reading " + std::string(what));
  }
  uint16_t u16() {
    need(2, "u16");
    uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4, "u32");
    uint32_t v = uint32_t(p[pos]) | uint32_t(p[pos + 1]) << 8 |
                 uint32_t(p[pos + 2]) << 16 | uint32_t(p[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  void skip(size_t k) {
    need(k, "value");
    pos += k;
  }
};

bool is_long_form_vr(const char vr[2]) {
  static const char* long_vrs[] = {"OB", "OW", "OF", "SQ", "UT", "UN"};
  for (const char* v : long_vrs)
    if (vr[0] == v[0] && vr[1] == v[1]) return true;
  return false;
}

constexpr uint32_t kUndefinedLength = 0xFFFFFFFFu;

struct Element {
  uint16_t group = 0, elem = 0;
  char vr[3] = {0, 0, 0};
  uint32_t length = 0;
  size_t value_pos = 0;
};

// Reads one element header at the cursor. explicit_vr selects the syntax.
Element read_element_header(Cursor& c, bool explicit_vr) {
  Element e;
  e.group = c.u16();
  e.elem = c.u16();
  // Item/delimiter tags always use the implicit layout.
  const bool delimiter = e.group == 0xFFFE;
  if (explicit_vr && !delimiter) {
    c.need(2, "VR");
    e.vr[0] = char(c.p[c.pos]);
    e.vr[1] = char(c.p[c.pos + 1]);
    c.pos += 2;
    if (is_long_form_vr(e.vr)) {
      c.skip(2);
      e.length = c.u32();
    } else {
      e.length = c.u16();
    }
  } else {
    e.length = c.u32();
  }
  e.value_pos = c.pos;
  return e;
}

// Skips a value of undefined length (sequences / nested items).
void skip_undefined(Cursor& c, bool explicit_vr) {
  while (true) {
    Element e = read_element_header(c, explicit_vr);
    if (e.group == 0xFFFE && e.elem == 0xE0DD) return;  // sequence delimiter
    if (e.group == 0xFFFE && e.elem == 0xE000) {        // item
      if (e.length == kUndefinedLength) {
        while (true) {
          Element inner = read_element_header(c, explicit_vr);
          if (inner.group == 0xFFFE && inner.elem == 0xE00D) break;
          if (inner.length == kUndefinedLength)
            skip_undefined(c, explicit_vr);
          else
            c.skip(inner.length);
        }
      } else {
        c.skip(e.length);
      }
      continue;
    }
    if (e.length == kUndefinedLength)
      skip_undefined(c, explicit_vr);
    else
      c.skip(e.length);
  }
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \0\t", 0, 3);
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \0\t", std::string::npos, 3);
  return s.substr(b, e - b + 1);
}

}  // namespace

DicomImage read_dicom(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail(path, "cannot open");
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (f.bad()) io_fail(path, "read failed");

  Cursor c{buf.data(), buf.size(), 0, path};
  bool has_preamble =
      buf.size() > 132 && std::memcmp(buf.data() + 128, "DICM", 4) == 0;
  if (has_preamble) c.pos = 132;

  bool explicit_vr = true;
  // Sniff: in explicit VR the two bytes after the first tag are an
  // uppercase VR code.
  if (buf.size() >= c.pos + 8) {
    char a = char(buf[c.pos + 4]), b = char(buf[c.pos + 5]);
    explicit_vr = (a >= 'A' && a <= 'Z' && b >= 'A' && b <= 'Z');
  }

  DicomImage img;
  img.bits_allocated = 16;
  img.bits_stored = 0;
  int samples_per_pixel = 1;
  int pixel_representation = 0;
  int number_of_frames = 1;
  std::string photometric = "MONOCHROME2";
  bool meta_explicit = true;  // file meta group is always explicit VR
  std::string transfer_syntax;
  const uint8_t* pixel_data = nullptr;
  uint32_t pixel_length = 0;

  while (!c.eof()) {
    if (c.left() < 8) break;
    const bool in_meta = [&] {
      // Peek group without consuming.
      uint16_t g = uint16_t(c.p[c.pos]) | uint16_t(c.p[c.pos + 1]) << 8;
      return g == 0x0002;
    }();
    Element e = read_element_header(c, in_meta ? meta_explicit : explicit_vr);

    auto value_str = [&]() {
      return std::string(reinterpret_cast<const char*>(c.p + e.value_pos),
                         e.length);
    };
    auto value_u16 = [&]() -> uint16_t {
      if (e.length < 2)
        throw Error(ErrorKind::CorruptPixelData, path + ": short US value");
      return uint16_t(c.p[e.value_pos]) | uint16_t(c.p[e.value_pos + 1]) << 8;
    };

    if (e.group == 0x0002 && e.elem == 0x0010) {
      transfer_syntax = trim(value_str());
      if (transfer_syntax == "1.2.840.10008.1.2") explicit_vr = false;
      if (transfer_syntax == "1.2.840.10008.1.2.1") explicit_vr = true;
    } else if (e.group == 0x0008 && e.elem == 0x1090) {
      img.model_name = trim(value_str());
    } else if (e.group == 0x0028) {
      switch (e.elem) {
        case 0x0002: samples_per_pixel = value_u16(); break;
        case 0x0004: photometric = trim(value_str()); break;
        case 0x0008: number_of_frames = std::atoi(value_str().c_str()); break;
        case 0x0010: img.rows = value_u16(); break;
        case 0x0011: img.cols = value_u16(); break;
        case 0x0100: img.bits_allocated = value_u16(); break;
        case 0x0101: img.bits_stored = value_u16(); break;
        case 0x0103: pixel_representation = value_u16(); break;
        default: break;
      }
    } else if (e.group == 0x7FE0 && e.elem == 0x0010) {
      if (e.length == kUndefinedLength)
        throw Error(ErrorKind::UnsupportedInput,
                    path + ": encapsulated (compressed) pixel data");
      c.need(e.length, "pixel data");
      pixel_data = c.p + e.value_pos;
      pixel_length = e.length;
      c.skip(e.length);
      break;
    }

    if (e.length == kUndefinedLength) {
      skip_undefined(c, in_meta ? meta_explicit : explicit_vr);
    } else {
      c.skip(e.length);
    }
  }

  if (!transfer_syntax.empty() && transfer_syntax != "1.2.840.10008.1.2" &&
      transfer_syntax != "1.2.840.10008.1.2.1")
    throw Error(ErrorKind::UnsupportedInput,
                path + ": unsupported transfer syntax " + transfer_syntax);
  if (number_of_frames > 1)
    throw Error(ErrorKind::UnsupportedInput,
                path + ": multi-frame DICOM (" +
                    std::to_string(number_of_frames) + " frames)");
  if (samples_per_pixel != 1)
    throw Error(ErrorKind::UnsupportedInput,
                path + ": SamplesPerPixel=" + std::to_string(samples_per_pixel));
  if (pixel_representation != 0)
    throw Error(ErrorKind::UnsupportedInput, path + ": signed pixel data");
  if (photometric != "MONOCHROME1" && photometric != "MONOCHROME2")
    throw Error(ErrorKind::UnsupportedInput,
                path + ": photometric interpretation " + photometric);
  img.monochrome1 = photometric == "MONOCHROME1";
  if (img.rows < 1 || img.cols < 1)
    throw Error(ErrorKind::CorruptPixelData, path + ": missing Rows/Columns");
  if (img.bits_allocated != 8 && img.bits_allocated != 16)
    throw Error(ErrorKind::UnsupportedInput,
                path + ": BitsAllocated=" + std::to_string(img.bits_allocated));
  if (img.bits_stored == 0) img.bits_stored = img.bits_allocated;
  if (!pixel_data)
    throw Error(ErrorKind::CorruptPixelData, path + ": no pixel data element");

  const size_t count = size_t(img.rows) * size_t(img.cols);
  const size_t bytes_needed = count * size_t(img.bits_allocated / 8);
  if (pixel_length < bytes_needed)
    throw Error(ErrorKind::CorruptPixelData,
                path + ": pixel data holds " + std::to_string(pixel_length) +
                    " bytes, need " + std::to_string(bytes_needed));

  img.pixels.resize(count);
  if (img.bits_allocated == 8) {
    for (size_t i = 0; i < count; ++i) img.pixels[i] = pixel_data[i];
  } else {
    for (size_t i = 0; i < count; ++i)
      img.pixels[i] =
          uint16_t(pixel_data[2 * i]) | uint16_t(pixel_data[2 * i + 1]) << 8;
  }
  return img;
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xFF));
  out.push_back(uint8_t(v >> 8));
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xFF));
}

void put_short_element(std::vector<uint8_t>& out, uint16_t group, uint16_t elem,
                       const char* vr, const std::string& value_in) {
  std::string value = value_in;
  if (value.size() % 2) value += (vr[0] == 'U' && vr[1] == 'I') ? '\0' : ' ';
  put_u16(out, group);
  put_u16(out, elem);
  out.push_back(uint8_t(vr[0]));
  out.push_back(uint8_t(vr[1]));
  put_u16(out, uint16_t(value.size()));
  out.insert(out.end(), value.begin(), value.end());
}

void put_us_element(std::vector<uint8_t>& out, uint16_t group, uint16_t elem,
                    uint16_t value) {
  put_u16(out, group);
  put_u16(out, elem);
  out.push_back('U');
  out.push_back('S');
  put_u16(out, 2);
  put_u16(out, value);
}

}  // namespace

void write_basic_dicom(const std::string& path, int64_t rows, int64_t cols,
                       int bits_stored, const uint16_t* pixels,
                       const std::string& model_name, bool monochrome1,
                       int number_of_frames) {
  std::vector<uint8_t> out(128, 0);
  out.insert(out.end(), {'D', 'I', 'C', 'M'});
  put_short_element(out, 0x0002, 0x0010, "UI", "1.2.840.10008.1.2.1");
  if (!model_name.empty())
    put_short_element(out, 0x0008, 0x1090, "LO", model_name);
  put_us_element(out, 0x0028, 0x0002, 1);
  put_short_element(out, 0x0028, 0x0004, "CS",
                    monochrome1 ? "MONOCHROME1" : "MONOCHROME2");
  if (number_of_frames != 1)
    put_short_element(out, 0x0028, 0x0008, "IS",
                      std::to_string(number_of_frames));
  put_us_element(out, 0x0028, 0x0010, uint16_t(rows));
  put_us_element(out, 0x0028, 0x0011, uint16_t(cols));
  put_us_element(out, 0x0028, 0x0100, 16);
  put_us_element(out, 0x0028, 0x0101, uint16_t(bits_stored));
  put_us_element(out, 0x0028, 0x0102, uint16_t(bits_stored - 1));
  put_us_element(out, 0x0028, 0x0103, 0);

  const size_t count = size_t(rows) * size_t(cols);
  put_u16(out, 0x7FE0);
  put_u16(out, 0x0010);
  out.push_back('O');
  out.push_back('W');
  put_u16(out, 0);  // reserved
  put_u32(out, uint32_t(count * 2));
  for (size_t i = 0; i < count; ++i) put_u16(out, pixels[i]);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) io_fail(path, "cannot open for writing");
  f.write(reinterpret_cast<const char*>(out.data()),
          std::streamsize(out.size()));
  if (!f) io_fail(path, "write failed");
}

}  // namespace adverx
