#pragma once

#include <cstdint>
#include <vector>

#include "cflow/autodiff.hpp"
#include "cflow/image.hpp"

namespace cflow {

// patch embedding + stride-2 learned merges; every stage quarters the token
// count, so m = H*W / (patch^2 * 4^stages).
struct TokenizerConfig {
    int64_t patch = 16;
    int64_t downsample_stages = 2;
    int64_t d_out = 64;
    int64_t channels = 1;

    int64_t cell() const { return patch << downsample_stages; } // pixels per final token side
};

// Count for an image of the given extents; throws unless both axes divide
// by patch * 2^stages (padding is the planner's job).
int64_t token_count(int64_t height, int64_t width, const TokenizerConfig& cfg);

// Row-major patch extraction: row p = flattened pixels of patch p.
template <typename T>
Tensor<T> extract_patches(const ImageTensor& img, const TokenizerConfig& cfg);

template <typename T>
struct TokenizerParams {
    Linear<T> patch_embed;
    std::vector<Linear<T>> merges; // each maps 4*d_out -> d_out

    TokenizerParams() = default;
    TokenizerParams(const TokenizerConfig& cfg, Rng& rng);

    void collect(std::vector<Parameter<T>*>& out);
};

// Full differentiable forward: [m x d_out] in row-major final-grid order.
template <typename T>
typename Tape<T>::Id tokenize(Tape<T>& tape, const ImageTensor& img, const TokenizerConfig& cfg,
                              TokenizerParams<T>& params);

} // namespace cflow
