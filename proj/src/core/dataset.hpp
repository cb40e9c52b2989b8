#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/image.hpp"

namespace fuseformer {

// Pre-registered (visible, infrared) pair; both bands share dimensions.
struct ImagePair {
    GrayImage visible;
    GrayImage infrared;
    std::string id;
};

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::vector<std::string> validation;
    uint64_t seed = 0;
};

// Seeded shuffle, then floor(0.8n) / floor(0.1n) / remainder into
// train / test / validation. Requires n >= 10.
DatasetSplit split_dataset(std::vector<std::string> ids, uint64_t seed);

// Synthetic complementary pairs: both bands share a random rectangle layout;
// the visible band carries fine texture and edges, the infrared band carries
// smooth bright regions that the visible band does not show. One hot region
// of at least 4% image area is guaranteed to exceed the visible band's local
// mean by a wide margin. size >= 16.
std::vector<ImagePair> synth_pairs(int count, int size, uint64_t seed);

// Manifest: one "id visible_path infrared_path" triple per line, paths
// relative to the manifest's directory, '#' comments and blank lines
// ignored. Pair dimensions must match and be at least 8x8.
std::vector<ImagePair> load_manifest(const std::string& manifest_path);

// Writes pairs as <dir>/<id>_vis.pgm, <dir>/<id>_ir.pgm plus
// <dir>/manifest.txt referencing them. Returns the manifest path.
std::string export_pairs(const std::vector<ImagePair>& pairs, const std::string& dir);

std::vector<std::string> pair_ids(const std::vector<ImagePair>& pairs);

const ImagePair& pair_by_id(const std::vector<ImagePair>& pairs, const std::string& id);

} // namespace fuseformer
