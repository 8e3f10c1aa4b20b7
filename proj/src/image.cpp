#include "pvloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace pvloc {

double ImageU8::sample(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = std::min(static_cast<int>(x), width - 2 >= 0 ? width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), height - 2 >= 0 ? height - 2 : 0);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = at(x0, y0), v10 = at(x1, y0), v01 = at(x0, y1), v11 = at(x1, y1);
    return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
}

ImageF32 to_float(const ImageU8& img) {
    ImageF32 out(img.width, img.height);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<float>(img.data[i]);
    return out;
}

ImageU8 to_u8(const ImageF32& img) {
    ImageU8 out(img.width, img.height);
    for (size_t i = 0; i < img.data.size(); ++i) {
        out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(img.data[i]), 0l, 255l));
    }
    return out;
}

ImageU8 resize_to_max_dim(const ImageU8& img, int max_dim, double* scale_out) {
    const int cur = std::max(img.width, img.height);
    if (cur <= max_dim || cur == 0) {
        if (scale_out) *scale_out = 1.0;
        return img;
    }
    const double s = static_cast<double>(max_dim) / cur;
    if (scale_out) *scale_out = s;
    const int nw = std::max(1, static_cast<int>(std::lround(img.width * s)));
    const int nh = std::max(1, static_cast<int>(std::lround(img.height * s)));
    ImageU8 out(nw, nh);
    const double inv = 1.0 / s;
    for (int y = 0; y < nh; ++y) {
        const int sy0 = static_cast<int>(y * inv);
        const int sy1 = std::min(static_cast<int>((y + 1) * inv), img.height);
        for (int x = 0; x < nw; ++x) {
            const int sx0 = static_cast<int>(x * inv);
            const int sx1 = std::min(static_cast<int>((x + 1) * inv), img.width);
            int sum = 0, n = 0;
            for (int sy = sy0; sy < sy1; ++sy)
                for (int sx = sx0; sx < sx1; ++sx) {
                    sum += img.at(sx, sy);
                    ++n;
                }
            out.at(x, y) = static_cast<std::uint8_t>(n > 0 ? (sum + n / 2) / n : 0);
        }
    }
    return out;
}

void write_pgm(const ImageU8& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {
int next_pgm_int(std::istream& in) {
    // skips whitespace and '#' comments
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        }
        c = in.get();
    }
    int value = 0;
    bool got = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        got = true;
        c = in.get();
    }
    if (!got) throw std::runtime_error("malformed PGM header");
    return value;
}
}  // namespace

ImageU8 read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("not a binary PGM (P5): " + path);
    const int w = next_pgm_int(f);
    const int h = next_pgm_int(f);
    const int maxval = next_pgm_int(f);
    if (maxval <= 0 || maxval > 255) throw std::runtime_error("unsupported PGM maxval: " + path);
    ImageU8 img(w, h);
    f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.data.size()))
        throw std::runtime_error("truncated PGM: " + path);
    return img;
}

}  // namespace pvloc
