#pragma once

#include <array>

#include "bevnet/heads.hpp"
#include "bevnet/params.hpp"

namespace bevnet {

struct ModelConfig {
    int input_channels = 16;                       // grid C
    std::array<int, 4> channels = {8, 16, 32, 64};  // encoder widths per level
    int desc_dim = 16;
    int saliency_window = 5;

    // Architecture-defining string, hashed into the checkpoint digest.
    std::string signature() const;
    int deep_stride() const { return 8; }  // 4 encoder levels, 3 downsamples
};

// The shared UNet backbone plus the four task heads. Owns all Parameters.
class BevNetModel {
public:
    explicit BevNetModel(const ModelConfig& cfg);

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }

    struct CloudForward {
        SparseMap e1, e2, e3, e4;  // encoder maps, e4 deepest
        SparseMap f1;              // finest decoder map
        SparseMap desc;            // unit descriptors
        SparseMap alpha, beta;     // saliency pieces
        TensorRef score;           // N x 1 detection scores
        HeightForward height;
    };
    CloudForward forward_cloud(Tape& tape, const BevGrid& grid) const;

    struct OverlapForward {
        SparseMap relevant_p, relevant_q;  // cross-attended deep maps
        TensorRef gamma_p, gamma_q;        // N_deep x 1 overlap scores
    };
    // Bilateral cross attention then the shared classification head.
    OverlapForward forward_overlap(Tape& tape, const SparseMap& deep_p,
                                   const SparseMap& deep_q) const;

private:
    SparseMap res_block(Tape& tape, const SparseMap& input, const ConvParams& a,
                        const ConvParams& b) const;
    SparseMap classify(Tape& tape, const SparseMap& m) const;

    ModelConfig cfg_;
    ParamStore store_;

    ConvParams stem_, res1a_, res1b_;
    ConvParams down2_, res2a_, res2b_;
    ConvParams down3_, res3a_, res3b_;
    ConvParams down4_, res4a_, res4b_;
    ConvParams dec3_, dres3a_, dres3b_;
    ConvParams dec2_, dres2a_, dres2b_;
    ConvParams dec1_, dres1a_, dres1b_;
    ConvParams desc_head_, reg_head_;
    AttentionParams attn_;
    Mlp3Params cross_mlp_;
    ConvParams cls1_, cls2_;
};

}  // namespace bevnet
