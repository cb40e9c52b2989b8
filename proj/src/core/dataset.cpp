#include "core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/util.hpp"

namespace fs = std::filesystem;

namespace fuseformer {

DatasetSplit split_dataset(std::vector<std::string> ids, uint64_t seed) {
    const size_t n = ids.size();
    if (n < 10) throw ConfigError("split_dataset: need at least 10 ids, got " + std::to_string(n));
    Rng rng(seed);
    rng.shuffle(ids);
    const size_t n_train = static_cast<size_t>(std::floor(0.8 * static_cast<double>(n)));
    const size_t n_test = static_cast<size_t>(std::floor(0.1 * static_cast<double>(n)));
    DatasetSplit split;
    split.seed = seed;
    split.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
    split.test.assign(ids.begin() + static_cast<long>(n_train),
                      ids.begin() + static_cast<long>(n_train + n_test));
    split.validation.assign(ids.begin() + static_cast<long>(n_train + n_test), ids.end());
    return split;
}

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

struct Rect {
    int x0, y0, x1, y1; // half-open
};

Rect random_rect(Rng& rng, int size, int min_side, int max_side) {
    const int w = min_side + rng.uniform_int(max_side - min_side + 1);
    const int h = min_side + rng.uniform_int(max_side - min_side + 1);
    const int x = rng.uniform_int(size - w);
    const int y = rng.uniform_int(size - h);
    return {x, y, x + w, y + h};
}

ImagePair synth_one(Rng& rng, int size, const std::string& id) {
    GrayImage vis(size, size), ir(size, size);

    // backgrounds: visible mid-gray, infrared darker with a smooth ramp
    const double vis_bg = rng.uniform(0.30, 0.45);
    const double ir_bg = rng.uniform(0.15, 0.30);
    const double ramp_x = rng.uniform(-0.05, 0.05);
    const double ramp_y = rng.uniform(-0.05, 0.05);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            vis.at(x, y) = vis_bg;
            ir.at(x, y) = ir_bg + ramp_x * x / size + ramp_y * y / size;
        }

    // shared geometric layout: same rectangles in both bands, band-specific
    // albedo so intensities stay only loosely related
    const int n_rects = 3 + rng.uniform_int(3);
    for (int r = 0; r < n_rects; ++r) {
        Rect rect = random_rect(rng, size, size / 8, size / 2);
        const double a_vis = rng.uniform(0.15, 0.80);
        const double a_ir = rng.uniform(0.20, 0.50);
        for (int y = rect.y0; y < rect.y1; ++y)
            for (int x = rect.x0; x < rect.x1; ++x) {
                vis.at(x, y) = a_vis;
                ir.at(x, y) = a_ir;
            }
        // visible band shows the rectangle outline as a bright edge
        for (int x = rect.x0; x < rect.x1; ++x) {
            vis.at(x, rect.y0) = clamp01(a_vis + 0.2);
            vis.at(x, rect.y1 - 1) = clamp01(a_vis + 0.2);
        }
        for (int y = rect.y0; y < rect.y1; ++y) {
            vis.at(rect.x0, y) = clamp01(a_vis + 0.2);
            vis.at(rect.x1 - 1, y) = clamp01(a_vis + 0.2);
        }
    }

    // fine texture only in the visible band; the infrared band stays smooth
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            vis.at(x, y) += rng.uniform(-0.04, 0.04);
            ir.at(x, y) += rng.uniform(-0.008, 0.008);
        }

    // hot regions: bright plateaus only the infrared band carries. The first
    // one is sized and placed so a >= 4% area square exceeds the visible
    // band's local mean by a wide margin.
    const int hot_side = std::max(4, (22 * size) / 100); // 0.22*size -> ~4.8% area
    const int n_hot = 1 + rng.uniform_int(2);
    for (int b = 0; b < n_hot; ++b) {
        const int side = b == 0 ? hot_side : std::max(3, hot_side / 2);
        const int hx = 1 + rng.uniform_int(size - side - 2);
        const int hy = 1 + rng.uniform_int(size - side - 2);
        const int skirt = 2;
        for (int y = std::max(0, hy - skirt); y < std::min(size, hy + side + skirt); ++y)
            for (int x = std::max(0, hx - skirt); x < std::min(size, hx + side + skirt); ++x) {
                const bool inside = x >= hx && x < hx + side && y >= hy && y < hy + side;
                if (inside) {
                    ir.at(x, y) = std::max(ir.at(x, y), 0.95 + rng.uniform(-0.01, 0.01));
                    if (b == 0) vis.at(x, y) = std::min(vis.at(x, y), 0.45);
                } else {
                    // cosine skirt keeps the blob smooth
                    const int dx = x < hx ? hx - x : (x >= hx + side ? x - (hx + side - 1) : 0);
                    const int dy = y < hy ? hy - y : (y >= hy + side ? y - (hy + side - 1) : 0);
                    const double d = std::sqrt(static_cast<double>(dx * dx + dy * dy)) / (skirt + 1);
                    if (d < 1.0)
                        ir.at(x, y) = std::max(ir.at(x, y), ir_bg + (0.95 - ir_bg) * 0.5 * (1.0 + std::cos(3.14159265358979 * d)));
                }
            }
    }

    for (auto& p : vis.pixels) p = clamp01(p);
    for (auto& p : ir.pixels) p = clamp01(p);
    return ImagePair{std::move(vis), std::move(ir), id};
}

} // namespace

std::vector<ImagePair> synth_pairs(int count, int size, uint64_t seed) {
    if (count < 0) throw ConfigError("synth_pairs: negative count");
    if (count > 0 && size < 16) throw ConfigError("synth_pairs: size must be >= 16");
    Rng rng(seed);
    std::vector<ImagePair> pairs;
    pairs.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%04d", i);
        pairs.push_back(synth_one(rng, size, id));
    }
    return pairs;
}

std::vector<ImagePair> load_manifest(const std::string& manifest_path) {
    const std::string text = read_file(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<ImagePair> pairs;
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream tok(line);
        std::string id, vis_rel, ir_rel, extra;
        if (!(tok >> id)) continue; // blank line
        if (!(tok >> vis_rel >> ir_rel) || (tok >> extra))
            throw IoError("manifest line " + std::to_string(lineno) +
                          ": expected 'id visible_path infrared_path'");
        ImagePair pair;
        pair.id = id;
        pair.visible = load_pgm((base / vis_rel).string());
        pair.infrared = load_pgm((base / ir_rel).string());
        if (pair.visible.width != pair.infrared.width || pair.visible.height != pair.infrared.height)
            throw ShapeError("pair '" + id + "': visible and infrared dimensions differ");
        if (pair.visible.width < 8 || pair.visible.height < 8)
            throw ShapeError("pair '" + id + "': images must be at least 8x8");
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::string export_pairs(const std::vector<ImagePair>& pairs, const std::string& dir) {
    fs::create_directories(dir);
    std::string manifest = "# id visible infrared\n";
    for (const auto& p : pairs) {
        const std::string vis_name = p.id + "_vis.pgm";
        const std::string ir_name = p.id + "_ir.pgm";
        save_pgm(p.visible, (fs::path(dir) / vis_name).string());
        save_pgm(p.infrared, (fs::path(dir) / ir_name).string());
        manifest += p.id + " " + vis_name + " " + ir_name + "\n";
    }
    const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
    write_file_atomic(manifest_path, manifest);
    return manifest_path;
}

std::vector<std::string> pair_ids(const std::vector<ImagePair>& pairs) {
    std::vector<std::string> ids;
    ids.reserve(pairs.size());
    for (const auto& p : pairs) ids.push_back(p.id);
    return ids;
}

const ImagePair& pair_by_id(const std::vector<ImagePair>& pairs, const std::string& id) {
    for (const auto& p : pairs)
        if (p.id == id) return p;
    throw ConfigError("unknown pair id: " + id);
}

} // namespace fuseformer
