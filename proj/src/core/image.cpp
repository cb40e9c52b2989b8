#include "core/image.hpp"

#include <cctype>
#include <cmath>

#include "core/errors.hpp"
#include "core/util.hpp"

namespace fuseformer {

GrayImage::GrayImage(int w, int h, double fill)
    : width(w), height(h), pixels(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {
    if (w <= 0 || h <= 0) throw ShapeError("image dimensions must be positive");
}

Tensor GrayImage::to_tensor() const { return Tensor({1, height, width}, pixels); }

GrayImage GrayImage::from_tensor(const Tensor& t) {
    int h, w;
    if (t.ndim() == 2) {
        h = t.dim(0);
        w = t.dim(1);
    } else if (t.ndim() == 3 && t.dim(0) == 1) {
        h = t.dim(1);
        w = t.dim(2);
    } else {
        throw ShapeError("from_tensor: expected [H,W] or [1,H,W]");
    }
    GrayImage img(w, h);
    std::copy(t.data(), t.data() + t.size(), img.pixels.begin());
    return img;
}

namespace {

// next integer token, skipping whitespace and '#' comments
long next_header_int(const std::string& in, size_t& pos, const std::string& origin) {
    for (;;) {
        while (pos < in.size() && std::isspace(static_cast<unsigned char>(in[pos]))) ++pos;
        if (pos < in.size() && in[pos] == '#') {
            while (pos < in.size() && in[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    if (pos >= in.size() || !std::isdigit(static_cast<unsigned char>(in[pos])))
        throw IoError("malformed PGM header: " + origin);
    long v = 0;
    while (pos < in.size() && std::isdigit(static_cast<unsigned char>(in[pos]))) {
        v = v * 10 + (in[pos] - '0');
        if (v > 1000000000L) throw IoError("malformed PGM header (value too large): " + origin);
        ++pos;
    }
    return v;
}

} // namespace

GrayImage parse_pgm(const std::string& in, const std::string& origin) {
    if (in.size() < 2 || in[0] != 'P' || (in[1] != '2' && in[1] != '5'))
        throw IoError("not a PGM (P2/P5) file: " + origin);
    const bool binary = in[1] == '5';
    size_t pos = 2;
    const long w = next_header_int(in, pos, origin);
    const long h = next_header_int(in, pos, origin);
    const long maxval = next_header_int(in, pos, origin);
    if (w <= 0 || h <= 0) throw IoError("malformed PGM header (bad dimensions): " + origin);
    if (maxval <= 0) throw IoError("PGM maxval must be positive: " + origin);
    if (maxval > 65535) throw IoError("PGM maxval above 65535 unsupported: " + origin);

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    const size_t n = img.size();
    const double scale = static_cast<double>(maxval);
    if (binary) {
        // exactly one whitespace byte separates the header from the payload
        if (pos >= in.size() || !std::isspace(static_cast<unsigned char>(in[pos])))
            throw IoError("malformed PGM header (missing payload separator): " + origin);
        ++pos;
        const int bytes_per = maxval < 256 ? 1 : 2;
        if (in.size() - pos < n * static_cast<size_t>(bytes_per))
            throw IoError("truncated PGM payload: " + origin);
        for (size_t i = 0; i < n; ++i) {
            unsigned v;
            if (bytes_per == 1) {
                v = static_cast<unsigned char>(in[pos + i]);
            } else {
                v = (static_cast<unsigned>(static_cast<unsigned char>(in[pos + 2 * i])) << 8) |
                    static_cast<unsigned>(static_cast<unsigned char>(in[pos + 2 * i + 1]));
            }
            img.pixels[i] = static_cast<double>(v) / scale;
        }
    } else {
        for (size_t i = 0; i < n; ++i) {
            long v;
            try {
                v = next_header_int(in, pos, origin);
            } catch (const IoError&) {
                throw IoError("truncated PGM payload: " + origin);
            }
            if (v > maxval) throw IoError("PGM sample exceeds maxval: " + origin);
            img.pixels[i] = static_cast<double>(v) / scale;
        }
    }
    return img;
}

GrayImage load_pgm(const std::string& path) { return parse_pgm(read_file(path), path); }

std::string encode_pgm(const GrayImage& img, int maxval) {
    if (maxval != 255 && maxval != 65535) throw IoError("save_pgm: maxval must be 255 or 65535");
    std::string out;
    out += "P5\n";
    out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n";
    out += std::to_string(maxval) + "\n";
    for (double p : img.pixels) {
        double clamped = p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
        const unsigned v = static_cast<unsigned>(std::lround(clamped * maxval));
        if (maxval == 255) {
            out.push_back(static_cast<char>(v & 0xff));
        } else {
            out.push_back(static_cast<char>((v >> 8) & 0xff));
            out.push_back(static_cast<char>(v & 0xff));
        }
    }
    return out;
}

void save_pgm(const GrayImage& img, const std::string& path, int maxval) {
    write_file_atomic(path, encode_pgm(img, maxval));
}

} // namespace fuseformer
