#include "gsedit/io/png.hpp"
#include "gsedit/io/files.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace gsedit::io {

using numerics::DTensor;

std::uint8_t quantize_unit(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), len);
}

void flush_noop(png_structp) {}

struct Reader {
    const std::string* bytes;
    std::size_t pos;
};

void read_bytes(png_structp png, png_bytep data, png_size_t len) {
    auto* r = static_cast<Reader*>(png_get_io_ptr(png));
    if (r->pos + len > r->bytes->size()) png_error(png, "truncated PNG");
    std::memcpy(data, r->bytes->data() + r->pos, len);
    r->pos += len;
}

} // namespace

void write_png(const std::filesystem::path& path, const DTensor& image) {
    if (image.ndim() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
        throw IoError(fmt::format("write_png expects [3 x H x W] or [1 x H x W], got {}",
                                  numerics::shape_str(image.shape())));
    }
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) throw IoError("libpng initialization failed");
    std::string encoded;
    std::vector<png_byte> row(w * c);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(fmt::format("PNG encoding failed for {}", path.string()));
    }
    png_set_write_fn(png, &encoded, append_bytes, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const auto v = image.values();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) row[x * c + ch] = quantize_unit(v[(ch * h + y) * w + x]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    write_file_atomic(path, encoded);
}

DTensor read_png(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
        throw IoError(fmt::format("{} is not a PNG file", path.string()));
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) throw IoError("libpng initialization failed");
    Reader reader{&bytes, 0};
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(fmt::format("PNG decoding failed for {}", path.string()));
    }
    png_set_read_fn(png, &reader, read_bytes);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const std::size_t w = png_get_image_width(png, info);
    const std::size_t h = png_get_image_height(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * h);
    rows.resize(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    std::vector<double> out(3 * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) out[(ch * h + y) * w + x] = pixels[y * stride + x * 3 + ch] / 255.0;
    return DTensor::from({3, h, w}, std::move(out));
}

} // namespace gsedit::io
