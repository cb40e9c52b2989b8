#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace fuseformer {

// Single-band image, pixels row-major in [0,1]. The [0,1] range is enforced
// at the file boundary (load/save quantization); in-memory images used as
// test fixtures may carry values outside it.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0);

    double at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
    double& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return pixels.size(); }

    Tensor to_tensor() const;                     // [1,H,W]
    static GrayImage from_tensor(const Tensor&);  // accepts [H,W] or [1,H,W]
};

// PGM reader: P2 (ASCII) and P5 (binary), '#' comments anywhere in the
// header, maxval up to 65535 (two-byte big-endian samples in P5). Pixels are
// normalized as value/maxval.
GrayImage load_pgm(const std::string& path);
GrayImage parse_pgm(const std::string& bytes, const std::string& origin);

// P5 writer, quantizing with round(p*maxval) after clamping to [0,1].
// maxval must be 255 or 65535. Layout: "P5\n<w> <h>\n<maxval>\n" + samples.
// Written atomically.
void save_pgm(const GrayImage& img, const std::string& path, int maxval = 255);
std::string encode_pgm(const GrayImage& img, int maxval = 255);

} // namespace fuseformer
