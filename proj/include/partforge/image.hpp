#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "partforge/common.hpp"
#include "partforge/geometry.hpp"

namespace partforge {

// Row-major RGB image, 8 bits per channel.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    bool valid() const {
        return width > 0 && height > 0 &&
               pixels.size() == static_cast<std::size_t>(width) * height * 3;
    }

    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    Size size() const { return Size{static_cast<double>(width), static_cast<double>(height)}; }
    BBox full_box() const {
        return BBox{0.0, 0.0, static_cast<double>(width), static_cast<double>(height)};
    }
};

namespace detail {

inline void skip_ppm_space(std::string_view data, std::size_t& pos) {
    while (pos < data.size()) {
        const char c = data[pos];
        if (c == '#') {
            while (pos < data.size() && data[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
            ++pos;
        } else {
            return;
        }
    }
}

inline long parse_ppm_int(std::string_view data, std::size_t& pos) {
    skip_ppm_space(data, pos);
    require(pos < data.size() && data[pos] >= '0' && data[pos] <= '9', errc::malformed_header,
            "expected integer in PPM header");
    long value = 0;
    while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') {
        value = value * 10 + (data[pos] - '0');
        require(value <= 1000000000L, errc::malformed_header, "PPM header value too large");
        ++pos;
    }
    return value;
}

}  // namespace detail

// Binary portable pixmap (P6), max value 255.
inline Raster parse_ppm(std::string_view data) {
    require(data.size() >= 2 && data[0] == 'P' && data[1] == '6', errc::malformed_header,
            "not a P6 pixmap");
    std::size_t pos = 2;
    const long w = detail::parse_ppm_int(data, pos);
    const long h = detail::parse_ppm_int(data, pos);
    const long maxval = detail::parse_ppm_int(data, pos);
    require(w > 0 && h > 0, errc::malformed_header, "non-positive PPM dimensions");
    require(maxval == 255, errc::malformed_header, "only max value 255 is supported");
    require(pos < data.size() && (data[pos] == ' ' || data[pos] == '\t' || data[pos] == '\n' ||
                                  data[pos] == '\r'),
            errc::malformed_header, "missing whitespace after PPM max value");
    ++pos;
    const std::size_t payload = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    require(data.size() - pos >= payload, errc::truncated_payload, "PPM pixel data truncated");
    Raster r;
    r.width = static_cast<int>(w);
    r.height = static_cast<int>(h);
    r.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                    data.begin() + static_cast<std::ptrdiff_t>(pos + payload));
    return r;
}

inline std::string encode_ppm(const Raster& r) {
    require(r.valid(), errc::invalid_argument, "encode_ppm: invalid raster");
    std::string out = "P6\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(r.pixels.data()), r.pixels.size());
    return out;
}

inline Raster load_image(const std::filesystem::path& path) { return parse_ppm(read_file(path)); }

inline void save_image(const std::filesystem::path& path, const Raster& r) {
    write_file_atomic(path, encode_ppm(r));
}

// Binary portable graymap (P5), for mask and heatmap dumps.
inline std::string encode_pgm(int width, int height, const std::vector<std::uint8_t>& gray) {
    require(width > 0 && height > 0 &&
                gray.size() == static_cast<std::size_t>(width) * height,
            errc::invalid_argument, "encode_pgm: bad dimensions");
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(gray.data()), gray.size());
    return out;
}

inline void save_pgm(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& gray) {
    write_file_atomic(path, encode_pgm(width, height, gray));
}

inline Raster mirror_horizontal(const Raster& r) {
    require(r.valid(), errc::invalid_argument, "mirror_horizontal: invalid raster");
    Raster out;
    out.width = r.width;
    out.height = r.height;
    out.pixels.resize(r.pixels.size());
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = r.at(r.width - 1 - x, y, c);
            }
        }
    }
    return out;
}

// Pixel-exact crop of the box rounded outward, clamped to the image.
inline Raster crop_pixels(const Raster& r, const BBox& box) {
    require(r.valid(), errc::invalid_argument, "crop_pixels: invalid raster");
    require(box.valid(), errc::invalid_argument, "crop_pixels: invalid box");
    int x0 = static_cast<int>(std::floor(box.x_min));
    int y0 = static_cast<int>(std::floor(box.y_min));
    int x1 = static_cast<int>(std::ceil(box.x_max));
    int y1 = static_cast<int>(std::ceil(box.y_max));
    x0 = std::clamp(x0, 0, r.width - 1);
    y0 = std::clamp(y0, 0, r.height - 1);
    x1 = std::clamp(x1, x0 + 1, r.width);
    y1 = std::clamp(y1, y0 + 1, r.height);
    Raster out;
    out.width = x1 - x0;
    out.height = y1 - y0;
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) out.at(x - x0, y - y0, c) = r.at(x, y, c);
        }
    }
    return out;
}

namespace detail {

inline double bilinear_channel(const Raster& r, double sx, double sy, int c) {
    const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, r.width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, r.height - 1);
    const int x1 = std::min(x0 + 1, r.width - 1);
    const int y1 = std::min(y0 + 1, r.height - 1);
    const double fx = std::clamp(sx - x0, 0.0, 1.0);
    const double fy = std::clamp(sy - y0, 0.0, 1.0);
    const double top = (1.0 - fx) * r.at(x0, y0, c) + fx * r.at(x1, y0, c);
    const double bot = (1.0 - fx) * r.at(x0, y1, c) + fx * r.at(x1, y1, c);
    return (1.0 - fy) * top + fy * bot;
}

}  // namespace detail

// Bilinear crop-and-resize returning continuous RGB values (row-major triples).
// Sampling at output pixel centers; an identity-size full-image crop samples
// exactly at input pixel centers.
inline std::vector<double> crop_resize_rgb(const Raster& r, const BBox& box, int out_w, int out_h) {
    require(r.valid(), errc::invalid_argument, "crop_resize_rgb: invalid raster");
    require(box.valid() && box.area() > 0.0, errc::invalid_argument,
            "crop_resize_rgb: degenerate box");
    require(out_w > 0 && out_h > 0, errc::invalid_argument, "crop_resize_rgb: bad output size");
    std::vector<double> out(static_cast<std::size_t>(out_w) * out_h * 3);
    const double step_x = box.width() / out_w;
    const double step_y = box.height() / out_h;
    std::size_t idx = 0;
    for (int y = 0; y < out_h; ++y) {
        const double sy = box.y_min + (y + 0.5) * step_y - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double sx = box.x_min + (x + 0.5) * step_x - 0.5;
            for (int c = 0; c < 3; ++c) out[idx++] = detail::bilinear_channel(r, sx, sy, c);
        }
    }
    return out;
}

inline Raster resize_bilinear(const Raster& r, int out_w, int out_h) {
    const std::vector<double> rgb = crop_resize_rgb(r, r.full_box(), out_w, out_h);
    Raster out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::llround(rgb[i]), 0LL, 255LL));
    }
    return out;
}

}  // namespace partforge
