#include "cflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "cflow/serialize.hpp"

namespace cflow {

const char* layout_name(LayoutKind k) {
    switch (k) {
        case LayoutKind::raster: return "raster";
        case LayoutKind::two_column: return "two_column";
        case LayoutKind::spiral: return "spiral";
        case LayoutKind::table_rowwise: return "table_rowwise";
    }
    return "?";
}

LayoutKind layout_from_name(const std::string& name) {
    for (auto k : {LayoutKind::raster, LayoutKind::two_column, LayoutKind::spiral, LayoutKind::table_rowwise})
        if (name == layout_name(k)) return k;
    throw ConfigError("unknown layout kind: " + name);
}

GlyphPatterns make_glyph_patterns(int64_t vocab, int64_t cell_pixels) {
    if (cell_pixels < 4) throw ConfigError("glyph patterns: cells below 4x4 pixels are unreadable");
    if (vocab < 1 || vocab > kMaxGlyphVocab) throw ConfigError("glyph patterns: vocab outside 1.." + std::to_string(kMaxGlyphVocab));
    const int64_t nbits = cell_pixels * cell_pixels;
    const int64_t min_dist = nbits / 8;
    for (uint64_t salt = 0; salt < 1000; ++salt) {
        GlyphPatterns p;
        p.cell_pixels = cell_pixels;
        p.salt = salt;
        for (int64_t g = 1; g <= vocab; ++g) {
            Rng rng(Rng::mix(0x676c797068u + salt, static_cast<uint64_t>(g)));
            std::vector<uint8_t> bits(static_cast<size_t>(nbits));
            for (auto& b : bits) b = static_cast<uint8_t>(rng.next_u64() & 1u);
            p.bits.push_back(std::move(bits));
        }
        bool ok = true;
        for (size_t i = 0; i + 1 < p.bits.size() && ok; ++i)
            for (size_t j = i + 1; j < p.bits.size() && ok; ++j) {
                int64_t dist = 0;
                for (int64_t b = 0; b < nbits; ++b) dist += p.bits[i][static_cast<size_t>(b)] != p.bits[j][static_cast<size_t>(b)];
                if (dist < min_dist) ok = false;
            }
        if (ok) return p;
    }
    throw ValueError("glyph patterns: no salt yields separated patterns at this size");
}

namespace {

// clockwise inward spiral starting top-left
std::vector<int64_t> spiral_path(int64_t rows, int64_t cols) {
    std::vector<int64_t> path;
    path.reserve(static_cast<size_t>(rows * cols));
    int64_t top = 0, bottom = rows - 1, left = 0, right = cols - 1;
    while (top <= bottom && left <= right) {
        for (int64_t c = left; c <= right; ++c) path.push_back(top * cols + c);
        for (int64_t r = top + 1; r <= bottom; ++r) path.push_back(r * cols + right);
        if (top < bottom)
            for (int64_t c = right - 1; c >= left; --c) path.push_back(bottom * cols + c);
        if (left < right)
            for (int64_t r = bottom - 1; r > top; --r) path.push_back(r * cols + left);
        ++top;
        --bottom;
        ++left;
        --right;
    }
    return path;
}

int draw_glyph(Rng& rng, int64_t vocab) { return static_cast<int>(rng.below(static_cast<uint64_t>(vocab))) + 1; }

} // namespace

GlyphGrid generate_grid(uint64_t seed, LayoutKind kind, const SynthConfig& cfg) {
    if (cfg.rows < 1 || cfg.cols < 1) throw ConfigError("generate: empty grid");
    if (cfg.density <= 0.0 || cfg.density > 1.0) throw ConfigError("generate: density must be in (0,1]");
    if (kind == LayoutKind::spiral && (cfg.rows < 2 || cfg.cols < 2))
        throw ConfigError("generate: spiral needs at least a 2x2 grid");
    if (kind == LayoutKind::two_column && cfg.cols < 3)
        throw ConfigError("generate: two_column needs at least 3 columns");

    GlyphGrid g;
    g.rows = cfg.rows;
    g.cols = cfg.cols;
    g.layout = kind;
    g.cells.assign(static_cast<size_t>(cfg.rows * cfg.cols), 0);
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(kind) + 0x1a70u));

    switch (kind) {
        case LayoutKind::raster: {
            for (int64_t i = 0; i < cfg.rows * cfg.cols; ++i)
                if (rng.uniform() < cfg.density) g.cells[static_cast<size_t>(i)] = draw_glyph(rng, cfg.vocab);
            for (int64_t i = 0; i < cfg.rows * cfg.cols; ++i)
                if (g.cells[static_cast<size_t>(i)] != 0) g.reading_order.push_back(i);
            break;
        }
        case LayoutKind::two_column: {
            // blank gutter column splits the page; left column block read
            // fully before the right one
            const int64_t gutter = cfg.cols / 2;
            for (int64_t r = 0; r < cfg.rows; ++r)
                for (int64_t c = 0; c < cfg.cols; ++c) {
                    if (c == gutter) continue;
                    if (rng.uniform() < cfg.density)
                        g.cells[static_cast<size_t>(r * cfg.cols + c)] = draw_glyph(rng, cfg.vocab);
                }
            for (int64_t r = 0; r < cfg.rows; ++r)
                for (int64_t c = 0; c < gutter; ++c)
                    if (g.cell(r, c) != 0) g.reading_order.push_back(r * cfg.cols + c);
            for (int64_t r = 0; r < cfg.rows; ++r)
                for (int64_t c = gutter + 1; c < cfg.cols; ++c)
                    if (g.cell(r, c) != 0) g.reading_order.push_back(r * cfg.cols + c);
            break;
        }
        case LayoutKind::spiral: {
            // contiguous run along the spiral path so the shape itself
            // signals the traversal
            const auto path = spiral_path(cfg.rows, cfg.cols);
            int64_t filled = std::max<int64_t>(1, static_cast<int64_t>(std::llround(
                                                      cfg.density * static_cast<double>(path.size()))));
            filled = std::min(filled, static_cast<int64_t>(path.size()));
            for (int64_t i = 0; i < filled; ++i) {
                g.cells[static_cast<size_t>(path[static_cast<size_t>(i)])] = draw_glyph(rng, cfg.vocab);
                g.reading_order.push_back(path[static_cast<size_t>(i)]);
            }
            break;
        }
        case LayoutKind::table_rowwise: {
            // one solid rectangle, read row-wise within it
            const int64_t side_frac_h = std::max<int64_t>(
                1, static_cast<int64_t>(std::llround(std::sqrt(cfg.density) * static_cast<double>(cfg.rows))));
            const int64_t side_frac_w = std::max<int64_t>(
                1, static_cast<int64_t>(std::llround(std::sqrt(cfg.density) * static_cast<double>(cfg.cols))));
            const int64_t h = std::min(side_frac_h, cfg.rows);
            const int64_t w = std::min(side_frac_w, cfg.cols);
            const int64_t r0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(cfg.rows - h + 1)));
            const int64_t c0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(cfg.cols - w + 1)));
            for (int64_t r = r0; r < r0 + h; ++r)
                for (int64_t c = c0; c < c0 + w; ++c) {
                    g.cells[static_cast<size_t>(r * cfg.cols + c)] = draw_glyph(rng, cfg.vocab);
                    g.reading_order.push_back(r * cfg.cols + c);
                }
            break;
        }
    }
    return g;
}

ImageTensor render(const GlyphGrid& grid, const GlyphPatterns& patterns) {
    const int64_t cp = patterns.cell_pixels;
    ImageTensor img(grid.rows * cp, grid.cols * cp, 1, 0.0f);
    for (int64_t r = 0; r < grid.rows; ++r)
        for (int64_t c = 0; c < grid.cols; ++c) {
            const int id = grid.cell(r, c);
            if (id == 0) continue;
            if (id > static_cast<int>(patterns.bits.size()))
                throw ValueError("render: glyph id outside the pattern table");
            const auto& bits = patterns.bits[static_cast<size_t>(id - 1)];
            for (int64_t y = 0; y < cp; ++y)
                for (int64_t x = 0; x < cp; ++x)
                    if (bits[static_cast<size_t>(y * cp + x)]) img.at(r * cp + y, c * cp + x) = 1.0f;
        }
    return img;
}

Sample generate(uint64_t seed, LayoutKind kind, const SynthConfig& cfg, const GlyphPatterns& patterns) {
    Sample s;
    s.seed = seed;
    s.grid = generate_grid(seed, kind, cfg);
    s.image = render(s.grid, patterns);
    s.target.push_back(kBos);
    for (int64_t idx : s.grid.reading_order)
        s.target.push_back(s.grid.cells[static_cast<size_t>(idx)] + kGlyphOffset);
    s.target.push_back(kEos);
    return s;
}

Dataset make_dataset(uint64_t seed, const LayoutMix& mix, int64_t count, const SynthConfig& cfg) {
    const double total = mix.raster + mix.two_column + mix.spiral + mix.table_rowwise;
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("make_dataset: layout fractions must sum to 1");
    if (count < 1) throw ConfigError("make_dataset: count must be >= 1");

    const double fracs[4] = {mix.raster, mix.two_column, mix.spiral, mix.table_rowwise};
    int64_t counts[4];
    double rema[4];
    int64_t assigned = 0;
    for (int i = 0; i < 4; ++i) {
        const double want = fracs[i] * static_cast<double>(count);
        counts[i] = static_cast<int64_t>(want);
        rema[i] = want - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < count) { // largest remainder, ties to the earlier kind
        int best = 0;
        for (int i = 1; i < 4; ++i)
            if (rema[i] > rema[best]) best = i;
        ++counts[best];
        rema[best] = -1;
        ++assigned;
    }

    std::vector<LayoutKind> kinds;
    kinds.reserve(static_cast<size_t>(count));
    for (int i = 0; i < 4; ++i)
        for (int64_t j = 0; j < counts[i]; ++j) kinds.push_back(static_cast<LayoutKind>(i));
    Rng shuffle_rng(Rng::mix(seed, 0x51fu));
    for (size_t i = kinds.size(); i > 1; --i)
        std::swap(kinds[i - 1], kinds[shuffle_rng.below(i)]);

    const GlyphPatterns patterns = make_glyph_patterns(cfg.vocab, cfg.cell_pixels);
    Dataset ds;
    std::ostringstream man;
    man << "count=" << count;
    for (int i = 0; i < 4; ++i) man << " " << layout_name(static_cast<LayoutKind>(i)) << "=" << counts[i];
    man << "\n";
    for (int64_t i = 0; i < count; ++i) {
        const uint64_t sample_seed = Rng::mix(seed, static_cast<uint64_t>(i) + 0x5a0u);
        Sample s = generate(sample_seed, kinds[static_cast<size_t>(i)], cfg, patterns);
        man << sample_seed << " " << layout_name(s.grid.layout);
        for (int id : s.target) man << " " << id;
        man << "\n";
        ds.samples.push_back(std::move(s));
    }
    ds.manifest = man.str();
    return ds;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    write_file_text(dir + "/manifest.txt", ds.manifest);
    char name[32];
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        std::snprintf(name, sizeof(name), "/sample_%05zu.pgm", i);
        write_pgm(dir + name, ds.samples[i].image);
    }
}

Dataset read_dataset(const std::string& dir) {
    Dataset ds;
    ds.manifest = read_file_text(dir + "/manifest.txt");
    std::istringstream in(ds.manifest);
    std::string header;
    std::getline(in, header);
    std::string line;
    char name[32];
    size_t i = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Sample s;
        std::string layout;
        ls >> s.seed >> layout;
        s.grid.layout = layout_from_name(layout);
        int id;
        while (ls >> id) s.target.push_back(id);
        if (s.target.size() < 2 || s.target.front() != kBos || s.target.back() != kEos)
            throw IntegrityError("read_dataset: malformed target record");
        std::snprintf(name, sizeof(name), "/sample_%05zu.pgm", i);
        s.image = read_pgm(dir + name);
        ds.samples.push_back(std::move(s));
        ++i;
    }
    if (ds.samples.empty()) throw IoError("read_dataset: no records in " + dir);
    return ds;
}

} // namespace cflow
