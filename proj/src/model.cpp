#include "bevnet/model.hpp"

#include <sstream>

namespace bevnet {

std::string ModelConfig::signature() const {
    std::ostringstream ss;
    ss << "bevnet-v1;cin=" << input_channels << ";ch=" << channels[0] << "," << channels[1] << ","
       << channels[2] << "," << channels[3] << ";desc=" << desc_dim << ";win=" << saliency_window;
    return ss.str();
}

namespace {

ConvParams make_conv(ParamStore& store, const std::string& name, int kernel, int cin, int cout) {
    ConvParams p;
    p.kernel = kernel;
    p.weight = &store.create(name + ".w", kernel * kernel * cin, cout);
    p.bias = &store.create(name + ".b", 1, cout);
    return p;
}

}  // namespace

BevNetModel::BevNetModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.desc_dim < 2)
        throw ConfigError("BevNetModel: desc_dim must be at least 2 (one channel is the pad)");
    const int cin = cfg.input_channels;
    const auto [c1, c2, c3, c4] = cfg.channels;

    stem_ = make_conv(store_, "enc1.stem", 3, cin, c1);
    res1a_ = make_conv(store_, "enc1.res.a", 3, c1, c1);
    res1b_ = make_conv(store_, "enc1.res.b", 3, c1, c1);
    down2_ = make_conv(store_, "enc2.down", 3, c1, c2);
    res2a_ = make_conv(store_, "enc2.res.a", 3, c2, c2);
    res2b_ = make_conv(store_, "enc2.res.b", 3, c2, c2);
    down3_ = make_conv(store_, "enc3.down", 3, c2, c3);
    res3a_ = make_conv(store_, "enc3.res.a", 3, c3, c3);
    res3b_ = make_conv(store_, "enc3.res.b", 3, c3, c3);
    down4_ = make_conv(store_, "enc4.down", 3, c3, c4);
    res4a_ = make_conv(store_, "enc4.res.a", 3, c4, c4);
    res4b_ = make_conv(store_, "enc4.res.b", 3, c4, c4);

    dec3_ = make_conv(store_, "dec3.fuse", 3, c3 + c4, c3);
    dres3a_ = make_conv(store_, "dec3.res.a", 3, c3, c3);
    dres3b_ = make_conv(store_, "dec3.res.b", 3, c3, c3);
    dec2_ = make_conv(store_, "dec2.fuse", 3, c2 + c3, c2);
    dres2a_ = make_conv(store_, "dec2.res.a", 3, c2, c2);
    dres2b_ = make_conv(store_, "dec2.res.b", 3, c2, c2);
    dec1_ = make_conv(store_, "dec1.fuse", 3, c1 + c2, c1);
    dres1a_ = make_conv(store_, "dec1.res.a", 3, c1, c1);
    dres1b_ = make_conv(store_, "dec1.res.b", 3, c1, c1);

    desc_head_ = make_conv(store_, "desc.proj", 1, c1, cfg.desc_dim - 1);
    reg_head_ = make_conv(store_, "reg.conv", 3, c1, cin);

    attn_.wq = &store_.create("cross.attn.wq", c4, c4);
    attn_.wk = &store_.create("cross.attn.wk", c4, c4);
    attn_.wv = &store_.create("cross.attn.wv", c4, c4);
    cross_mlp_.w1 = &store_.create("cross.mlp.w1", 2 * c4, c4);
    cross_mlp_.b1 = &store_.create("cross.mlp.b1", 1, c4);
    cross_mlp_.w2 = &store_.create("cross.mlp.w2", c4, c4);
    cross_mlp_.b2 = &store_.create("cross.mlp.b2", 1, c4);
    cross_mlp_.w3 = &store_.create("cross.mlp.w3", c4, c4);
    cross_mlp_.b3 = &store_.create("cross.mlp.b3", 1, c4);
    cls1_ = make_conv(store_, "cls.conv1", 3, c4, c4);
    cls2_ = make_conv(store_, "cls.conv2", 3, c4, 1);
}

SparseMap BevNetModel::res_block(Tape& tape, const SparseMap& input, const ConvParams& a,
                                 const ConvParams& b) const {
    SparseMap h = pointwise(tape, submanifold_conv(tape, input, a), Pointwise::Relu);
    SparseMap h2 = submanifold_conv(tape, h, b);
    SparseMap out = input;
    out.feat = tape.relu(tape.add(h2.feat, input.feat));
    return out;
}

BevNetModel::CloudForward BevNetModel::forward_cloud(Tape& tape, const BevGrid& grid) const {
    if (grid.config().channels != cfg_.input_channels)
        throw ShapeError("forward_cloud: grid channel count differs from model input width");
    CloudForward out;

    SparseMap input;
    input.rows = grid.config().rows;
    input.cols = grid.config().cols;
    input.active = grid.active_pillars();
    if (input.active.empty()) throw EmptyInputError("forward_cloud: empty occupancy grid");
    Mat feat(input.active.size(), cfg_.input_channels);
    for (std::size_t r = 0; r < input.active.size(); ++r) {
        for (int k = 0; k < cfg_.input_channels; ++k)
            feat(static_cast<Eigen::Index>(r), k) =
                grid.at(input.active[r].first, input.active[r].second, k);
    }
    input.feat = tape.constant(std::move(feat));

    SparseMap s = pointwise(tape, submanifold_conv(tape, input, stem_), Pointwise::Relu);
    out.e1 = res_block(tape, s, res1a_, res1b_);
    SparseMap d2 = pointwise(tape, strided_sparse_conv(tape, out.e1, down2_), Pointwise::Relu);
    out.e2 = res_block(tape, d2, res2a_, res2b_);
    SparseMap d3 = pointwise(tape, strided_sparse_conv(tape, out.e2, down3_), Pointwise::Relu);
    out.e3 = res_block(tape, d3, res3a_, res3b_);
    SparseMap d4 = pointwise(tape, strided_sparse_conv(tape, out.e3, down4_), Pointwise::Relu);
    out.e4 = res_block(tape, d4, res4a_, res4b_);

    SparseMap u3 = pointwise(
        tape, submanifold_conv(tape, upsample_concat(tape, out.e4, out.e3), dec3_), Pointwise::Relu);
    SparseMap f3 = res_block(tape, u3, dres3a_, dres3b_);
    SparseMap u2 = pointwise(
        tape, submanifold_conv(tape, upsample_concat(tape, f3, out.e2), dec2_), Pointwise::Relu);
    SparseMap f2 = res_block(tape, u2, dres2a_, dres2b_);
    SparseMap u1 = pointwise(
        tape, submanifold_conv(tape, upsample_concat(tape, f2, out.e1), dec1_), Pointwise::Relu);
    out.f1 = res_block(tape, u1, dres1a_, dres1b_);

    out.desc = describe(tape, out.f1, desc_head_);
    out.alpha = spatial_saliency(tape, out.desc, cfg_.saliency_window);
    out.beta = channel_score(tape, out.desc);
    out.score = detection_score(tape, out.alpha, out.beta);
    out.height = regress_heights(tape, out.f1, grid, reg_head_);
    return out;
}

SparseMap BevNetModel::classify(Tape& tape, const SparseMap& m) const {
    SparseMap h = pointwise(tape, submanifold_conv(tape, m, cls1_), Pointwise::Relu);
    return pointwise(tape, submanifold_conv(tape, h, cls2_), Pointwise::Sigmoid);
}

BevNetModel::OverlapForward BevNetModel::forward_overlap(Tape& tape, const SparseMap& deep_p,
                                                         const SparseMap& deep_q) const {
    if (deep_p.count() == 0 || deep_q.count() == 0)
        throw EmptyInputError("forward_overlap: empty deep feature map");
    OverlapForward out;
    SparseMap att_p = attention(tape, deep_p, deep_q, deep_q, attn_);
    SparseMap att_q = attention(tape, deep_q, deep_p, deep_p, attn_);
    SparseMap mp = deep_p;
    mp.feat = tape.add(deep_p.feat,
                       mlp3(tape, tape.concat_cols({deep_p.feat, att_p.feat}), cross_mlp_));
    SparseMap mq = deep_q;
    mq.feat = tape.add(deep_q.feat,
                       mlp3(tape, tape.concat_cols({deep_q.feat, att_q.feat}), cross_mlp_));
    out.relevant_p = mp;
    out.relevant_q = mq;
    out.gamma_p = classify(tape, mp).feat;
    out.gamma_q = classify(tape, mq).feat;
    return out;
}

}  // namespace bevnet
