// raster.hpp - 8-bit RGB rasters, binary PPM (P6) I/O and color conversions.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fishboard/common.hpp"
#include "fishboard/mask.hpp"

namespace fishboard {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Hsv {
    double h = 0.0;  // degrees in [0, 360)
    double s = 0.0;  // [0, 1]
    double v = 0.0;  // [0, 1]
};

class Raster {
public:
    Raster() = default;
    Raster(int width, int height, Rgb fill = {0, 0, 0})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height * 3) {
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill.r;
            data_[i + 1] = fill.g;
            data_[i + 2] = fill.b;
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    const std::vector<std::uint8_t>& data() const { return data_; }
    std::vector<std::uint8_t>& data() { return data_; }

    Rgb get(int x, int y) const {
        const std::size_t i = idx(x, y);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }

    void set(int x, int y, Rgb c) {
        const std::size_t i = idx(x, y);
        data_[i] = c.r;
        data_[i + 1] = c.g;
        data_[i + 2] = c.b;
    }

    bool in_bounds(int x, int y) const {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    std::size_t idx(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

inline void write_ppm(const Raster& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data().data()),
              static_cast<std::streamsize>(img.data().size()));
    if (!out) throw IoError("write failed: " + path);
}

inline Raster read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw DataError("not a P6 ppm: " + path);
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w <= 0 || h <= 0 || maxval != 255) throw DataError("bad ppm header: " + path);
    in.get();  // single whitespace after header
    Raster img(w, h);
    in.read(reinterpret_cast<char*>(img.data().data()),
            static_cast<std::streamsize>(img.data().size()));
    if (in.gcount() != static_cast<std::streamsize>(img.data().size()))
        throw DataError("truncated ppm: " + path);
    return img;
}

inline Hsv rgb_to_hsv(Rgb c) {
    const double r = c.r / 255.0, g = c.g / 255.0, b = c.b / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    Hsv out;
    out.v = mx;
    out.s = mx > 0.0 ? d / mx : 0.0;
    if (d > 0.0) {
        if (mx == r) out.h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
        else if (mx == g) out.h = 60.0 * ((b - r) / d + 2.0);
        else out.h = 60.0 * ((r - g) / d + 4.0);
    }
    return out;
}

inline Rgb hsv_to_rgb(Hsv c) {
    const double h = std::fmod(std::fmod(c.h, 360.0) + 360.0, 360.0) / 60.0;
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = c.v * (1.0 - c.s);
    const double q = c.v * (1.0 - c.s * f);
    const double t = c.v * (1.0 - c.s * (1.0 - f));
    double r = 0, g = 0, b = 0;
    switch (i) {
        case 0: r = c.v; g = t; b = p; break;
        case 1: r = q; g = c.v; b = p; break;
        case 2: r = p; g = c.v; b = t; break;
        case 3: r = p; g = q; b = c.v; break;
        case 4: r = t; g = p; b = c.v; break;
        case 5: r = c.v; g = p; b = q; break;
    }
    auto to8 = [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    return {to8(r), to8(g), to8(b)};
}

// Nearest-neighbor resample of an image (and optionally its mask) to a fixed
// target size.
inline Raster rescale_nearest(const Raster& src, int out_w, int out_h) {
    Raster out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(src.height() - 1,
                                static_cast<int>((y + 0.5) * src.height() / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(src.width() - 1,
                                    static_cast<int>((x + 0.5) * src.width() / out_w));
            out.set(x, y, src.get(sx, sy));
        }
    }
    return out;
}

inline Mask rescale_mask_nearest(const Mask& src, int out_w, int out_h) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(out_w) * out_h, 0);
    const std::vector<std::uint8_t> src_bits = src.to_dense();
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(src.height() - 1,
                                static_cast<int>((y + 0.5) * src.height() / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(src.width() - 1,
                                    static_cast<int>((x + 0.5) * src.width() / out_w));
            bits[static_cast<std::size_t>(y) * out_w + x] =
                src_bits[static_cast<std::size_t>(sy) * src.width() + sx];
        }
    }
    return Mask::from_dense(out_w, out_h, bits);
}

}  // namespace fishboard
