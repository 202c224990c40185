#pragma once

#include <cstdint>
#include <vector>

#include "cflow/config.hpp"
#include "cflow/decoder.hpp"
#include "cflow/encoder.hpp"
#include "cflow/metrics.hpp"
#include "cflow/planner.hpp"
#include "cflow/tokenizer.hpp"

namespace cflow {

// The whole page-to-text stack: planner views -> tokenizer -> dual-stream
// encoder -> assembled flow prefix -> causal decoder. The light decoder is
// the small scaffold trained in the first stage and ignored afterwards; it
// stays in the registry so checkpoints have one fixed layout.
template <typename T>
struct OcrModel {
    TokenizerConfig tok_cfg;
    EncoderConfig enc_cfg;
    DecoderConfig dec_cfg;
    DecoderConfig light_cfg;
    PlannerConfig plan_cfg;
    bool raster_baseline = false;

    TokenizerParams<T> tok;
    QueryBank<T> bank;
    EncoderParams<T> enc;
    DecoderParams<T> dec;
    DecoderParams<T> light;

    OcrModel(const RunConfig& rc, uint64_t init_seed, bool baseline = false)
        : tok_cfg(rc.tokenizer_config()),
          enc_cfg(rc.encoder_config()),
          dec_cfg(rc.decoder_config()),
          light_cfg(rc.decoder_config()),
          plan_cfg(rc.planner_config()),
          raster_baseline(baseline) {
        light_cfg.layers = rc.i("model.light_dec_layers");
        Rng rng(Rng::mix(init_seed, 0xc0dec0deu));
        tok = TokenizerParams<T>(tok_cfg, rng);
        bank = QueryBank<T>(plan_cfg.n_g, plan_cfg.n_l, enc_cfg.d, rng);
        enc = EncoderParams<T>(enc_cfg, rng);
        dec = DecoderParams<T>(dec_cfg, enc_cfg.d, rng, "decoder");
        light = DecoderParams<T>(light_cfg, enc_cfg.d, rng, "light");
    }

    // fixed order; checkpoints and the optimizer both key off this
    std::vector<Parameter<T>*> registry() {
        std::vector<Parameter<T>*> out;
        tok.collect(out);
        bank.collect(out);
        enc.collect(out);
        dec.collect(out);
        light.collect(out);
        return out;
    }

    int64_t param_count() {
        int64_t total = 0;
        for (auto* p : registry()) total += p->value.numel();
        return total;
    }

    // main-path parameters only (what inference actually uses)
    int64_t param_count_inference() {
        std::vector<Parameter<T>*> out;
        tok.collect(out);
        bank.collect(out);
        enc.collect(out);
        dec.collect(out);
        int64_t total = 0;
        for (auto* p : out) total += p->value.numel();
        return total;
    }

    typename Tape<T>::Id flow_for_image(Tape<T>& tape, const ImageTensor& image) {
        const CropPlan p = plan(image.width, image.height, plan_cfg);
        const AppliedViews views = apply(p, image);
        std::vector<typename Tape<T>::Id> parts;
        for (const auto& local : views.locals) {
            auto vis = tokenize(tape, local, tok_cfg, tok);
            parts.push_back(raster_baseline
                                ? encode_passthrough(tape, vis, enc_cfg, enc)
                                : encode_view(tape, vis, bank, ViewKind::local, enc_cfg, enc));
        }
        auto gvis = tokenize(tape, views.global, tok_cfg, tok);
        parts.push_back(raster_baseline ? encode_passthrough(tape, gvis, enc_cfg, enc)
                                        : encode_view(tape, gvis, bank, ViewKind::global, enc_cfg, enc));
        return parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
    }

    typename Tape<T>::Id sample_loss(Tape<T>& tape, const Sample& sample, bool use_light_decoder) {
        auto flow = flow_for_image(tape, sample.image);
        return decode_train(tape, flow, sample.target, use_light_decoder ? light_cfg : dec_cfg,
                            use_light_decoder ? light : dec);
    }

    std::vector<int> transcribe(const ImageTensor& image, const GenerationSettings& settings) {
        Tape<T> tape;
        auto flow = flow_for_image(tape, image);
        const Tensor<T> flow_values = tape.value(flow);
        const std::vector<int> prompt = {dec_cfg.bos};
        return generate(flow_values, prompt, settings, dec_cfg, dec);
    }
};

} // namespace cflow
