// 8-bit image container with binary PGM (P5) / PPM (P6) reading and PGM
// writing. maxval is fixed at 255.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eyedeg/errors.hpp"
#include "eyedeg/tensor.hpp"

namespace eyedeg {

struct Image {
    int w = 0;
    int h = 0;
    int channels = 1;  // 1 = gray, 3 = rgb
    std::vector<std::uint8_t> px;  // row-major, interleaved channels

    Image() = default;
    Image(int width, int height, int ch = 1)
        : w(width), h(height), channels(ch),
          px(static_cast<std::size_t>(width) * height * ch, 0) {}

    std::uint8_t& at(int row, int col, int c = 0) {
        return px[(static_cast<std::size_t>(row) * w + col) * channels + static_cast<std::size_t>(c)];
    }
    std::uint8_t at(int row, int col, int c = 0) const {
        return px[(static_cast<std::size_t>(row) * w + col) * channels + static_cast<std::size_t>(c)];
    }
};

namespace detail {

// Skips PNM whitespace and '#' comments, then parses one unsigned integer.
inline int pnm_int(std::istream& in) {
    int c = in.get();
    while (c != EOF && (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    if (c == EOF || c < '0' || c > '9') throw DataError("pnm: malformed header");
    long v = 0;
    while (c >= '0' && c <= '9') {
        v = v * 10 + (c - '0');
        if (v > 1000000) throw DataError("pnm: implausible header value");
        c = in.get();
    }
    return static_cast<int>(v);
}

}  // namespace detail

inline Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("pnm: cannot open '" + path.string() + "'");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    int channels;
    if (magic[0] == 'P' && magic[1] == '5')
        channels = 1;
    else if (magic[0] == 'P' && magic[1] == '6')
        channels = 3;
    else
        throw DataError("pnm: '" + path.string() + "' is not a binary PGM/PPM");
    const int w = detail::pnm_int(in);
    const int h = detail::pnm_int(in);
    const int maxval = detail::pnm_int(in);
    if (maxval != 255) throw DataError("pnm: only maxval 255 supported");
    Image img(w, h, channels);
    in.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.px.size()))
        throw DataError("pnm: truncated pixel data in '" + path.string() + "'");
    return img;
}

inline void write_pgm(const Image& img, const std::filesystem::path& path) {
    if (img.channels != 1) throw DataError("pgm: image must be grayscale");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("pgm: cannot open '" + path.string() + "' for writing");
    out << "P5\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.px.data()),
              static_cast<std::streamsize>(img.px.size()));
    if (!out) throw IoError("pgm: write failed for '" + path.string() + "'");
}

// Grayscale image -> 1x1xHxW float tensor with values in [0,255].
inline Tensor image_to_tensor(const Image& img) {
    if (img.channels != 1) throw DataError("image_to_tensor: image must be grayscale");
    Tensor t({1, 1, img.h, img.w});
    for (std::size_t i = 0; i < img.px.size(); ++i) t.data[i] = static_cast<float>(img.px[i]);
    return t;
}

}  // namespace eyedeg
