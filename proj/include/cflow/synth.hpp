#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cflow/image.hpp"
#include "cflow/rng.hpp"

namespace cflow {

// Toy pages whose ground truth is a reading ORDER, not just content: each
// layout kind fills the grid with a recognizable visual structure and defines
// how the non-blank cells are traversed.
enum class LayoutKind : uint8_t { raster = 0, two_column = 1, spiral = 2, table_rowwise = 3 };

const char* layout_name(LayoutKind k);
LayoutKind layout_from_name(const std::string& name);

struct GlyphGrid {
    int64_t rows = 0, cols = 0;
    std::vector<int> cells; // glyph id per cell, 0 = blank
    LayoutKind layout = LayoutKind::raster;
    std::vector<int64_t> reading_order; // flat cell indices, each non-blank exactly once

    int cell(int64_t r, int64_t c) const { return cells[static_cast<size_t>(r * cols + c)]; }
};

// token ids: pad 0, bos 1, eos 2, glyph g -> g + 2
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kGlyphOffset = 2;

struct Sample {
    GlyphGrid grid;
    ImageTensor image;
    std::vector<int> target; // [bos, glyphs along reading_order, eos]
    uint64_t seed = 0;
};

// Fixed per-glyph binary stamps derived from a salted hash; the salt is
// searched once so that every pair differs in at least cell_pixels^2 / 8
// bits.
struct GlyphPatterns {
    int64_t cell_pixels = 0;
    uint64_t salt = 0;
    std::vector<std::vector<uint8_t>> bits; // index g-1 -> cell_pixels^2 bits
};

GlyphPatterns make_glyph_patterns(int64_t vocab, int64_t cell_pixels);

constexpr int64_t kMaxGlyphVocab = 192;

struct SynthConfig {
    int64_t rows = 8, cols = 8;
    int64_t vocab = 32; // glyph ids 1..vocab
    double density = 0.5;
    int64_t cell_pixels = 11;
};

GlyphGrid generate_grid(uint64_t seed, LayoutKind kind, const SynthConfig& cfg);
ImageTensor render(const GlyphGrid& grid, const GlyphPatterns& patterns);
Sample generate(uint64_t seed, LayoutKind kind, const SynthConfig& cfg, const GlyphPatterns& patterns);

struct LayoutMix {
    double raster = 1.0;
    double two_column = 0.0;
    double spiral = 0.0;
    double table_rowwise = 0.0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::string manifest; // per-layout counts, then one record per sample
};

// Deterministic in (seed, mix, count, cfg); layout counts allocated by
// largest remainder, then shuffled so batches interleave kinds.
Dataset make_dataset(uint64_t seed, const LayoutMix& mix, int64_t count, const SynthConfig& cfg);

// Snapshot: <dir>/sample_NNNNN.pgm + <dir>/manifest.txt.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

} // namespace cflow
