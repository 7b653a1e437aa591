#include "gsgen/io/codec.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gsgen {

namespace {

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

[[noreturn]] void png_error_fn(png_structp, png_const_charp message) {
    throw std::runtime_error(std::string("png: ") + message);
}

void png_warning_fn(png_structp, png_const_charp) {}

void write_fn(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_fn(png_structp) {}

void read_fn(png_structp png, png_bytep data, png_size_t length) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->bytes.size()) png_error(png, "truncated stream");
    std::memcpy(data, cursor->bytes.data() + cursor->offset, length);
    cursor->offset += length;
}

int color_type_for(int channels) {
    switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: throw std::invalid_argument("encode_png: unsupported channel count");
    }
}

} // namespace

Bytes encode_png(const ImageBuffer& image, int bit_depth) {
    if (image.empty()) throw std::invalid_argument("encode_png: empty image");
    if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("encode_png: bit depth must be 8 or 16");
    const int channels = image.channels();
    const int color_type = color_type_for(channels);
    const double max_value = bit_depth == 8 ? 255.0 : 65535.0;
    const std::size_t bytes_per_sample = bit_depth / 8;

    std::vector<png_byte> rows(image.size() * bytes_per_sample);
    const auto data = image.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double v = std::isfinite(data[i]) ? std::clamp(data[i], 0.0, 1.0) : 0.0;
        const auto q = static_cast<unsigned>(std::lround(v * max_value));
        if (bit_depth == 8) {
            rows[i] = static_cast<png_byte>(q);
        } else {
            rows[2 * i] = static_cast<png_byte>(q >> 8);
            rows[2 * i + 1] = static_cast<png_byte>(q & 0xff);
        }
    }

    Bytes out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png) throw std::runtime_error("png: cannot create writer");
    png_infop info = png_create_info_struct(png);
    try {
        if (!info) throw std::runtime_error("png: cannot create info");
        png_set_write_fn(png, &out, write_fn, flush_fn);
        png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()),
                     bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        const std::size_t stride = static_cast<std::size_t>(image.width()) * channels * bytes_per_sample;
        for (int y = 0; y < image.height(); ++y) png_write_row(png, rows.data() + stride * y);
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw std::runtime_error("png: bad signature");
    ReadCursor cursor{bytes, 0};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png) throw std::runtime_error("png: cannot create reader");
    png_infop info = png_create_info_struct(png);
    ImageBuffer image;
    try {
        if (!info) throw std::runtime_error("png: cannot create info");
        png_set_read_fn(png, &cursor, read_fn);
        png_read_info(png, info);
        const int color_type = png_get_color_type(png, info);
        int bit_depth = png_get_bit_depth(png, info);
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
        if (bit_depth == 16) png_set_swap(png);
        png_read_update_info(png, info);

        const int width = static_cast<int>(png_get_image_width(png, info));
        const int height = static_cast<int>(png_get_image_height(png, info));
        const int channels = png_get_channels(png, info);
        bit_depth = png_get_bit_depth(png, info);
        if (channels != 1 && channels != 3 && channels != 4) throw std::runtime_error("png: unsupported layout");

        const std::size_t stride = png_get_rowbytes(png, info);
        std::vector<png_byte> rows(stride * static_cast<std::size_t>(height));
        for (int y = 0; y < height; ++y) png_read_row(png, rows.data() + stride * y, nullptr);
        png_read_end(png, nullptr);

        image = ImageBuffer(width, height, channels);
        auto data = image.data();
        if (bit_depth == 16) {
            for (std::size_t y = 0; y < static_cast<std::size_t>(height); ++y) {
                const std::size_t n = static_cast<std::size_t>(width) * channels;
                for (std::size_t i = 0; i < n; ++i) {
                    std::uint16_t v;
                    std::memcpy(&v, rows.data() + y * stride + 2 * i, 2);
                    data[y * n + i] = v / 65535.0;
                }
            }
        } else {
            for (std::size_t y = 0; y < static_cast<std::size_t>(height); ++y) {
                const std::size_t n = static_cast<std::size_t>(width) * channels;
                for (std::size_t i = 0; i < n; ++i) data[y * n + i] = rows[y * stride + i] / 255.0;
            }
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image, int bit_depth) {
    write_file_bytes(path, encode_png(image, bit_depth));
}

ImageBuffer read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

Bytes base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw std::runtime_error("base64: length is not a multiple of 4");
    Bytes out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw std::runtime_error("base64: invalid input");
    std::size_t padding = 0;
    if (!text.empty() && text.back() == '=') ++padding;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
    out.resize(static_cast<std::size_t>(n) - padding);
    return out;
}

Bytes read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

} // namespace gsgen
