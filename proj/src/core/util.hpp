#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace fuseformer {

// Writes via a sibling temp file and renames into place.
void write_file_atomic(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

// "%.6f" formatting used by metric CSVs.
std::string fmt6(double v);

// shortest round-trippable double, for training logs
std::string fmt17(double v);

// Effective worker count: min(requested, FUSEFORMER_THREADS if set).
// requested <= 0 means hardware concurrency.
int effective_threads(int requested);

// Runs fn(i) for i in [0,n) on up to `threads` workers. Falls back to the
// calling thread when threads <= 1. fn must be safe to run concurrently for
// distinct i.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// little-endian scalar encoding for binary file formats
void put_u32(std::string& out, uint32_t v);
void put_u64(std::string& out, uint64_t v);
void put_f64(std::string& out, double v);
uint32_t get_u32(const std::string& in, size_t& pos);
uint64_t get_u64(const std::string& in, size_t& pos);
double get_f64(const std::string& in, size_t& pos);

// FNV-1a 64-bit, used as the weight-file checksum
uint64_t fnv1a64(const void* data, size_t n);

} // namespace fuseformer
