#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spap/tensor.hpp"

namespace spap::io {

/// Unit-interval intensity → byte: round half to even of 255·a (the default
/// floating-point rounding mode), clamped to [0, 255]. 0.5 maps to 128.
inline unsigned char to_byte(double a) {
    const double v = std::nearbyint(255.0 * std::clamp(a, 0.0, 1.0));
    return static_cast<unsigned char>(v);
}

/// Writes a (C, H, W) or (H, W) tensor with values in [0, 1] as binary PGM
/// (one channel) or PPM (three channels).
inline void write_pnm(const std::string& path, const Tensor& img) {
    if (img.rank() != 2 && img.rank() != 3) throw std::invalid_argument("write_pnm: expected (C,H,W) or (H,W)");
    const std::size_t c = img.rank() == 3 ? img.dim(0) : 1;
    const std::size_t h = img.dim(img.rank() - 2), w = img.dim(img.rank() - 1);
    if (c != 1 && c != 3) throw std::invalid_argument("write_pnm: need 1 or 3 channels, got " + std::to_string(c));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << '\n' << 255 << '\n';
    std::vector<unsigned char> buf(c * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) buf[(y * w + x) * c + ch] = to_byte(img.values()[(ch * h + y) * w + x]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("write failed for " + path);
}

/// Reads binary PGM/PPM (8-bit) into a (C, H, W) tensor with values in [0, 1].
inline Tensor read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    auto token = [&]() {
        std::string t;
        int ch;
        while ((ch = f.get()) != EOF) {
            if (ch == '#') {
                while ((ch = f.get()) != EOF && ch != '\n') {
                }
                continue;
            }
            if (std::isspace(ch)) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(static_cast<char>(ch));
        }
        return t;
    };
    const std::string magic = token();
    if (magic != "P5" && magic != "P6") throw std::runtime_error(path + ": not a binary PGM/PPM (magic '" + magic + "')");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception&) {
        throw std::runtime_error(path + ": malformed header");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw std::runtime_error(path + ": unsupported header (8-bit only)");
    const std::size_t c = magic == "P5" ? 1 : 3;
    std::vector<unsigned char> buf(c * h * w);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(f.gcount()) != buf.size()) throw std::runtime_error(path + ": truncated pixel data");
    Tensor t({c, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                t.values()[(ch * h + y) * w + x] = buf[(y * w + x) * c + ch] / static_cast<double>(maxval);
    return t;
}

/// Sorted .pgm/.ppm files of a directory.
inline std::vector<std::string> list_images(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Image i of an (N, C, H, W) batch in [−1, 1], mapped to [0, 1].
inline Tensor unit_image(const Tensor& batch, std::size_t i) {
    const std::size_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3), n = c * h * w;
    Tensor t({c, h, w});
    for (std::size_t k = 0; k < n; ++k) t.values()[k] = 0.5 * (batch.values()[i * n + k] + 1.0);
    return t;
}

}  // namespace spap::io
