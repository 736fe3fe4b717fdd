#include <png.h>

#include <csetjmp>
#include <cstring>

#include "dnf/errors.hpp"
#include "dnf/io.hpp"

namespace dnf {

namespace {

struct ByteReader {
    const std::uint8_t* data;
    std::size_t len;
    std::size_t pos;
};

void read_fn(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<ByteReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->len) png_error(png, "unexpected end of PNG stream");
    std::memcpy(out, r->data + r->pos, n);
    r->pos += n;
}

void write_fn(png_structp png, png_bytep data, png_size_t n) {
    auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    v->insert(v->end(), data, data + n);
}

void flush_fn(png_structp) {}

}  // namespace

ImageU8 decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw IoError("not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: allocation failed");
    }
    ImageU8 img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: decode failed");
    }

    ByteReader reader{bytes.data(), bytes.size(), 0};
    png_set_read_fn(png, &reader, read_fn);
    png_read_info(png, info);

    // Normalize everything to 8-bit gray or RGB.
    png_set_strip_16(png);
    png_set_packing(png);
    png_set_strip_alpha(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    const png_uint_32 h = png_get_image_height(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const int ch = static_cast<int>(png_get_channels(png, info));
    if (ch != 1 && ch != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: unsupported channel count");
    }

    img = ImageU8(static_cast<int>(h), static_cast<int>(w), ch);
    rows.resize(h);
    const std::size_t stride = static_cast<std::size_t>(w) * static_cast<std::size_t>(ch);
    for (png_uint_32 r = 0; r < h; ++r)
        rows[r] = img.pixels.data() + static_cast<std::size_t>(r) * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
    if (img.height <= 0 || img.width <= 0 || (img.channels != 1 && img.channels != 3))
        throw std::invalid_argument("png: expected non-empty gray or RGB image");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: allocation failed");
    }
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: encode failed");
    }

    png_set_write_fn(png, &out, write_fn, flush_fn);
    // Fixed settings keep the emitted bytes reproducible.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t stride =
        static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
    rows.resize(static_cast<std::size_t>(img.height));
    for (int r = 0; r < img.height; ++r)
        rows[static_cast<std::size_t>(r)] =
            const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(r) * stride);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageU8 read_png(const std::filesystem::path& path) {
    return decode_png(read_file_bytes(path));
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
    const std::vector<std::uint8_t> bytes = encode_png(img);
    write_file_atomic(path, bytes.data(), bytes.size());
}

}  // namespace dnf
