#include "cflow/tokenizer.hpp"

namespace cflow {

int64_t token_count(int64_t height, int64_t width, const TokenizerConfig& cfg) {
    const int64_t cell = cfg.cell();
    if (height < cell || width < cell || height % cell != 0 || width % cell != 0)
        throw ShapeError("token_count: " + std::to_string(height) + "x" + std::to_string(width) +
                         " not divisible by " + std::to_string(cell));
    return (height / cell) * (width / cell);
}

template <typename T>
Tensor<T> extract_patches(const ImageTensor& img, const TokenizerConfig& cfg) {
    const int64_t p = cfg.patch;
    if (img.height % p != 0 || img.width % p != 0)
        throw ShapeError("extract_patches: image extents must divide by patch size");
    if (img.channels != cfg.channels)
        throw ShapeError("extract_patches: channel count mismatch");
    const int64_t gh = img.height / p, gw = img.width / p;
    const int64_t flat = p * p * cfg.channels;
    Tensor<T> out = Tensor<T>::zeros({gh * gw, flat});
    for (int64_t gy = 0; gy < gh; ++gy)
        for (int64_t gx = 0; gx < gw; ++gx) {
            T* row = out.data.data() + (gy * gw + gx) * flat;
            int64_t idx = 0;
            for (int64_t y = 0; y < p; ++y)
                for (int64_t x = 0; x < p; ++x)
                    for (int64_t c = 0; c < cfg.channels; ++c)
                        row[idx++] = static_cast<T>(img.at(gy * p + y, gx * p + x, c));
        }
    return out;
}

template <typename T>
TokenizerParams<T>::TokenizerParams(const TokenizerConfig& cfg, Rng& rng) {
    patch_embed = Linear<T>("tokenizer.patch_embed", ParamGroup::tokenizer,
                            cfg.patch * cfg.patch * cfg.channels, cfg.d_out, rng);
    for (int64_t s = 0; s < cfg.downsample_stages; ++s)
        merges.emplace_back("tokenizer.merge" + std::to_string(s), ParamGroup::tokenizer,
                            4 * cfg.d_out, cfg.d_out, rng);
}

template <typename T>
void TokenizerParams<T>::collect(std::vector<Parameter<T>*>& out) {
    patch_embed.collect(out);
    for (auto& m : merges) m.collect(out);
}

template <typename T>
typename Tape<T>::Id tokenize(Tape<T>& tape, const ImageTensor& img, const TokenizerConfig& cfg,
                              TokenizerParams<T>& params) {
    const int64_t cell = cfg.cell();
    if (img.height % cell != 0 || img.width % cell != 0)
        throw ShapeError("tokenize: image extents must divide by patch * 2^stages");
    auto x = params.patch_embed.apply(tape, tape.constant(extract_patches<T>(img, cfg)));
    int64_t gh = img.height / cfg.patch, gw = img.width / cfg.patch;
    for (auto& merge : params.merges) {
        // 2x2 neighborhood concat in row-major order of the halved grid
        const int64_t nh = gh / 2, nw = gw / 2;
        std::vector<int64_t> tl, tr, bl, br;
        tl.reserve(static_cast<size_t>(nh * nw));
        for (int64_t y = 0; y < nh; ++y)
            for (int64_t x2 = 0; x2 < nw; ++x2) {
                tl.push_back((2 * y) * gw + 2 * x2);
                tr.push_back((2 * y) * gw + 2 * x2 + 1);
                bl.push_back((2 * y + 1) * gw + 2 * x2);
                br.push_back((2 * y + 1) * gw + 2 * x2 + 1);
            }
        auto grouped = tape.concat_cols({tape.gather_rows(x, tl), tape.gather_rows(x, tr),
                                         tape.gather_rows(x, bl), tape.gather_rows(x, br)});
        x = merge.apply(tape, grouped);
        gh = nh;
        gw = nw;
    }
    return x;
}

template Tensor<float> extract_patches<float>(const ImageTensor&, const TokenizerConfig&);
template Tensor<double> extract_patches<double>(const ImageTensor&, const TokenizerConfig&);
template struct TokenizerParams<float>;
template struct TokenizerParams<double>;
template Tape<float>::Id tokenize<float>(Tape<float>&, const ImageTensor&, const TokenizerConfig&,
                                         TokenizerParams<float>&);
template Tape<double>::Id tokenize<double>(Tape<double>&, const ImageTensor&, const TokenizerConfig&,
                                           TokenizerParams<double>&);

} // namespace cflow
