#pragma once

#include <array>
#include <deque>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "augvit/nn/attention.hpp"
#include "augvit/nn/autodiff.hpp"
#include "augvit/rng.hpp"

namespace augvit {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
    int input_size = 64;
    std::array<int, 4> stage_channels{16, 32, 64, 128};
    std::array<int, 4> stage_depths{1, 1, 2, 2};
    int attention_dim = 64;
    int attention_heads = 4;
    int multiscale_kernel = 5;
    int expand_ratio = 4;
    int num_classes = 10;

    void validate() const {
        if (input_size < 8) throw std::invalid_argument("model: input_size must be >= 8");
        for (int c : stage_channels)
            if (c < 1) throw std::invalid_argument("model: stage channels must be positive");
        for (int d : stage_depths)
            if (d < 1) throw std::invalid_argument("model: stage depths must be positive");
        if (attention_heads < 1 || attention_dim % attention_heads != 0)
            throw std::invalid_argument("model: attention_dim must divide by heads");
        for (int i = 2; i < 4; ++i)
            if (stage_channels[static_cast<size_t>(i)] % attention_heads != 0)
                throw std::invalid_argument("model: attention stage channels must divide by heads");
        if (multiscale_kernel < 1 || multiscale_kernel % 2 == 0)
            throw std::invalid_argument("model: multiscale kernel must be odd");
        if (expand_ratio < 1) throw std::invalid_argument("model: expand_ratio must be >= 1");
        if (num_classes < 2) throw std::invalid_argument("model: need at least 2 classes");
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "input_size=" << input_size << "\n";
        os << "stage_channels=" << stage_channels[0] << "," << stage_channels[1] << ","
           << stage_channels[2] << "," << stage_channels[3] << "\n";
        os << "stage_depths=" << stage_depths[0] << "," << stage_depths[1] << ","
           << stage_depths[2] << "," << stage_depths[3] << "\n";
        os << "attention_dim=" << attention_dim << "\n";
        os << "attention_heads=" << attention_heads << "\n";
        os << "multiscale_kernel=" << multiscale_kernel << "\n";
        os << "expand_ratio=" << expand_ratio << "\n";
        os << "num_classes=" << num_classes << "\n";
        return os.str();
    }

    static ModelConfig from_text(const std::string& text) {
        ModelConfig cfg;
        std::istringstream is(text);
        std::string line;
        auto parse4 = [](const std::string& s, std::array<int, 4>& out) {
            std::istringstream ls(s);
            std::string tok;
            for (int i = 0; i < 4; ++i) {
                if (!std::getline(ls, tok, ',')) throw std::runtime_error("config: bad 4-tuple");
                out[static_cast<size_t>(i)] = std::stoi(tok);
            }
        };
        while (std::getline(is, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(0, eq);
            const std::string value = line.substr(eq + 1);
            if (key == "input_size") cfg.input_size = std::stoi(value);
            else if (key == "stage_channels") parse4(value, cfg.stage_channels);
            else if (key == "stage_depths") parse4(value, cfg.stage_depths);
            else if (key == "attention_dim") cfg.attention_dim = std::stoi(value);
            else if (key == "attention_heads") cfg.attention_heads = std::stoi(value);
            else if (key == "multiscale_kernel") cfg.multiscale_kernel = std::stoi(value);
            else if (key == "expand_ratio") cfg.expand_ratio = std::stoi(value);
            else if (key == "num_classes") cfg.num_classes = std::stoi(value);
            else throw std::runtime_error("config: unknown key " + key);
        }
        cfg.validate();
        return cfg;
    }

    bool operator==(const ModelConfig&) const = default;
};

// Convolution cost convention: multiply-accumulates x2, bias excluded.
inline double conv2d_flops(int out_h, int out_w, int ci_per_group, int co, int k) {
    return 2.0 * static_cast<double>(out_h) * out_w * co * ci_per_group * k * k;
}

// FNV-1a of the canonical config text; used as the run digest.
inline std::string fnv1a_hex(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

template <typename T>
struct ConvLayer {
    Parameter<T>* w = nullptr;
    Parameter<T>* b = nullptr;  // optional
    int stride = 1, pad = 0, groups = 1;
};

template <typename T>
struct BnLayer {
    Parameter<T>* gamma = nullptr;
    Parameter<T>* beta = nullptr;
    Tensor<T>* run_mean = nullptr;
    Tensor<T>* run_var = nullptr;
};

template <typename T>
typename Tape<T>::Ref apply_conv(Tape<T>& tape, const ConvLayer<T>& c, typename Tape<T>::Ref x) {
    const auto wref = tape.param(*c.w);
    const auto bref = c.b ? tape.param(*c.b) : typename Tape<T>::Ref(-1);
    return tape.conv2d(x, wref, bref, c.stride, c.pad, c.groups);
}

template <typename T>
typename Tape<T>::Ref apply_bn(Tape<T>& tape, const BnLayer<T>& bn, typename Tape<T>::Ref x,
                               bool training) {
    return tape.batchnorm(x, tape.param(*bn.gamma), tape.param(*bn.beta), bn.run_mean,
                          bn.run_var, training);
}

// expand (1x1) -> depthwise (3x3, stride) -> project (1x1), BN + ReLU between;
// residual shortcut at stride 1 with matching channels.
template <typename T>
struct MbConvBlock {
    ConvLayer<T> expand, dw, project;
    BnLayer<T> bn1, bn2, bn3;
    bool residual = false;
};

template <typename T>
typename Tape<T>::Ref apply_mbconv(Tape<T>& tape, const MbConvBlock<T>& m,
                                   typename Tape<T>::Ref x, bool training) {
    auto h = tape.relu(apply_bn(tape, m.bn1, apply_conv(tape, m.expand, x), training));
    h = tape.relu(apply_bn(tape, m.bn2, apply_conv(tape, m.dw, h), training));
    h = apply_bn(tape, m.bn3, apply_conv(tape, m.project, h), training);
    return m.residual ? tape.add(h, x) : h;
}

// identity branch + depthwise small-kernel aggregation, concatenated along
// channels; the combined map feeds the Q/K/V projection.
template <typename T>
typename Tape<T>::Ref multiscale_tokens(Tape<T>& tape, typename Tape<T>::Ref x,
                                        const ConvLayer<T>& dw) {
    const auto& xv = tape.val(x);
    const int k = dw.w->value.dim(2);
    if (k > std::min(xv.dim(2), xv.dim(3)))
        throw std::invalid_argument("multiscale_tokens: kernel larger than spatial dims");
    return tape.concat_channels(x, apply_conv(tape, dw, x));
}

// multi-scale tokens -> per-head ReLU linear attention -> projection, with a
// residual around the attention and an MBConv mixer after it.
template <typename T>
struct AttentionBlock {
    ConvLayer<T> ms_dw;     // depthwise kxk on C channels
    ConvLayer<T> qkv;       // 1x1: 2C -> 3*dim
    ConvLayer<T> out_proj;  // 1x1: dim -> C
    BnLayer<T> out_bn;
    MbConvBlock<T> ffn;
    int heads = 1;
    int dim = 0;
};

template <typename T>
typename Tape<T>::Ref apply_attention_block(Tape<T>& tape, const AttentionBlock<T>& blk,
                                            typename Tape<T>::Ref x, bool training) {
    const auto& xv = tape.val(x);
    const int B = xv.dim(0), H = xv.dim(2), W = xv.dim(3);
    auto ms = multiscale_tokens(tape, x, blk.ms_dw);
    auto qkv = apply_conv(tape, blk.qkv, ms);
    auto q = tape.map_to_tokens(tape.slice_channels(qkv, 0, blk.dim), blk.heads);
    auto k = tape.map_to_tokens(tape.slice_channels(qkv, blk.dim, 2 * blk.dim), blk.heads);
    auto v = tape.map_to_tokens(tape.slice_channels(qkv, 2 * blk.dim, 3 * blk.dim), blk.heads);
    auto att = tape.relu_linear_attention(q, k, v);
    auto amap = tape.tokens_to_map(att, B, blk.dim, H, W);
    auto o = apply_bn(tape, blk.out_bn, apply_conv(tape, blk.out_proj, amap), training);
    auto res = tape.add(x, o);
    return apply_mbconv(tape, blk.ffn, res, training);
}

// ---------------------------------------------------------------------------
// the network
// ---------------------------------------------------------------------------

// Four-stage backbone behind a stride-2 stem. Stages 1 and 2 are MBConv
// stacks; stages 3 and 4 use the attention block. The head aligns P2/P3/P4
// with 1x1 convolutions, upsamples to P2 resolution, sums, pools and
// classifies.
template <typename T>
class Model {
public:
    using Ref = typename Tape<T>::Ref;

    Model() = default;  // uninitialized shell; initialized() is false

    Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
        cfg.validate();
        Rng rng(derive_seed(init_seed, 0xa6, 0x17));

        const int c0 = cfg.stage_channels[0];
        stem_conv_ = make_conv("stem.conv", 3, c0, 3, 2, 1, false, rng);
        stem_bn_ = make_bn("stem.bn", c0);

        int in_c = c0;
        int sp = out_size(cfg.input_size, 3, 2, 1);  // after stem
        for (int s = 0; s < 4; ++s) {
            const std::string sp_name = "stage" + std::to_string(s + 1);
            const int out_c = cfg.stage_channels[static_cast<size_t>(s)];
            Stage st;
            st.down = make_mbconv(sp_name + ".down", in_c, out_c, 2, rng);
            sp = out_size(sp, 3, 2, 1);
            stage_spatial_[static_cast<size_t>(s)] = sp;
            for (int d = 0; d < cfg.stage_depths[static_cast<size_t>(s)]; ++d) {
                const std::string bn = sp_name + ".block" + std::to_string(d);
                if (s < 2) {
                    st.mb_blocks.push_back(make_mbconv(bn, out_c, out_c, 1, rng));
                } else {
                    st.attn_blocks.push_back(
                        make_attention(bn, out_c, clamp_kernel(sp), rng));
                }
            }
            stages_.push_back(std::move(st));
            in_c = out_c;
        }

        const int hc = cfg.stage_channels[3];
        head_p2_ = make_conv("head.p2", cfg.stage_channels[1], hc, 1, 1, 1, false, rng);
        head_p3_ = make_conv("head.p3", cfg.stage_channels[2], hc, 1, 1, 1, false, rng);
        head_p4_ = make_conv("head.p4", cfg.stage_channels[3], hc, 1, 1, 1, false, rng);
        head_bn_ = make_bn("head.bn", hc);
        fc_w_ = add_param("head.fc.w", {cfg.num_classes, hc}, hc, rng);
        fc_b_ = add_param("head.fc.b", {cfg.num_classes}, hc, rng);

        initialized_ = true;
    }

    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    bool initialized() const { return initialized_; }
    const ModelConfig& config() const { return cfg_; }
    std::string config_digest() const { return fnv1a_hex(cfg_.to_text()); }

    std::vector<Parameter<T>*>& parameters() { return param_ptrs_; }
    const std::vector<Parameter<T>*>& parameters() const { return param_ptrs_; }

    struct NamedBuffer {
        std::string name;
        Tensor<T>* value;
    };
    const std::vector<NamedBuffer>& buffers() const { return buffer_ptrs_; }

    // Tape refs of the pyramid feature maps, filled by forward() on request.
    struct ForwardTaps {
        Ref stage2 = -1;
        Ref stage3 = -1;
        Ref stage4 = -1;

        Ref stage(int index) const {
            switch (index) {
                case 2: return stage2;
                case 3: return stage3;
                case 4: return stage4;
            }
            throw std::invalid_argument("taps: stage must be 2, 3 or 4");
        }
    };

    // Forward to logits [B, num_classes]. `taps` (optional) receives the tape
    // refs of the P2/P3/P4 feature maps, before head fusion.
    Ref forward(Tape<T>& tape, const Tensor<T>& batch, bool training,
                ForwardTaps* taps = nullptr) {
        require_initialized();
        if (batch.ndim() != 4 || batch.dim(1) != 3 || batch.dim(2) != cfg_.input_size ||
            batch.dim(3) != cfg_.input_size)
            throw std::invalid_argument("forward: batch must be (B,3," +
                                        std::to_string(cfg_.input_size) + "," +
                                        std::to_string(cfg_.input_size) + ")");
        auto x = tape.input(batch);
        x = tape.relu(apply_bn(tape, stem_bn_, apply_conv(tape, stem_conv_, x), training));

        Ref p2 = -1, p3 = -1, p4 = -1;
        for (int s = 0; s < 4; ++s) {
            auto& st = stages_[static_cast<size_t>(s)];
            x = apply_mbconv(tape, st.down, x, training);
            for (auto& blk : st.mb_blocks) x = apply_mbconv(tape, blk, x, training);
            for (auto& blk : st.attn_blocks) x = apply_attention_block(tape, blk, x, training);
            if (s == 1) p2 = x;
            if (s == 2) p3 = x;
            if (s == 3) p4 = x;
        }
        if (taps) *taps = ForwardTaps{p2, p3, p4};

        const int p2s = stage_spatial_[1];
        auto f2 = apply_conv(tape, head_p2_, p2);
        auto f3 = tape.upsample_bilinear2d(apply_conv(tape, head_p3_, p3), p2s, p2s);
        auto f4 = tape.upsample_bilinear2d(apply_conv(tape, head_p4_, p4), p2s, p2s);
        auto fused = tape.relu(
            apply_bn(tape, head_bn_, tape.add(tape.add(f2, f3), f4), training));
        auto pooled = tape.global_avg_pool(fused);
        return tape.linear(pooled, tape.param(*fc_w_), tape.param(*fc_b_));
    }

    // Convenience: eval-mode logits as a plain tensor.
    Tensor<T> predict(const Tensor<T>& batch) {
        Tape<T> tape;
        const Ref logits = forward(tape, batch, false);
        return tape.val(logits);
    }

    void zero_grads() {
        for (auto* p : param_ptrs_) p->zero_grad();
    }

    int64_t count_params() const {
        int64_t n = 0;
        for (const auto* p : param_ptrs_)
            if (p->trainable) n += p->value.numel();
        return n;
    }

    int64_t count_params(const std::string& prefix) const {
        int64_t n = 0;
        for (const auto* p : param_ptrs_)
            if (p->trainable && p->name.rfind(prefix, 0) == 0) n += p->value.numel();
        return n;
    }

    void freeze(const std::string& prefix) {
        for (auto* p : param_ptrs_)
            if (p->name.rfind(prefix, 0) == 0) p->trainable = false;
    }

    // Multiply-accumulates x2 for a single input, summed over convolutions,
    // the classifier and the factored attention. Returns GFLOPs.
    double estimate_flops(int batch = 1) const {
        require_initialized();
        auto conv_macs = [](int out_sp, int ci, int co, int k) {
            return conv2d_flops(out_sp, out_sp, ci, co, k) / 2.0;
        };
        auto mbconv_macs = [&](int sp_in, int sp_out, int ci, int co, int expand) {
            const int hid = ci * expand;
            return conv_macs(sp_in, ci, hid, 1) + conv_macs(sp_out, 1, hid, 3) +
                   conv_macs(sp_out, hid, co, 1);
        };
        double macs = 0.0;
        int sp = out_size(cfg_.input_size, 3, 2, 1);
        macs += conv_macs(sp, 3, cfg_.stage_channels[0], 3);  // stem
        int ic = cfg_.stage_channels[0];
        for (int s = 0; s < 4; ++s) {
            const int oc = cfg_.stage_channels[static_cast<size_t>(s)];
            const int sp_out = out_size(sp, 3, 2, 1);
            macs += mbconv_macs(sp, sp_out, ic, oc, cfg_.expand_ratio);
            sp = sp_out;
            for (int d = 0; d < cfg_.stage_depths[static_cast<size_t>(s)]; ++d) {
                if (s < 2) {
                    macs += mbconv_macs(sp, sp, oc, oc, cfg_.expand_ratio);
                } else {
                    const int k = clamp_kernel(sp);
                    macs += conv_macs(sp, 1, oc, k);                       // depthwise branch
                    macs += conv_macs(sp, 2 * oc, 3 * cfg_.attention_dim, 1);  // qkv
                    macs += linear_attention_flops(sp * sp,
                                                   cfg_.attention_dim / cfg_.attention_heads,
                                                   cfg_.attention_heads) /
                            2.0;
                    macs += conv_macs(sp, cfg_.attention_dim, oc, 1);      // out projection
                    macs += mbconv_macs(sp, sp, oc, oc, cfg_.expand_ratio);  // ffn
                }
            }
            ic = oc;
        }
        const int hc = cfg_.stage_channels[3];
        macs += conv_macs(stage_spatial_[1], cfg_.stage_channels[1], hc, 1);
        macs += conv_macs(stage_spatial_[2], cfg_.stage_channels[2], hc, 1);
        macs += conv_macs(stage_spatial_[3], cfg_.stage_channels[3], hc, 1);
        macs += static_cast<double>(hc) * cfg_.num_classes;  // classifier
        return 2.0 * macs * batch / 1e9;
    }

    int stage_spatial(int stage) const { return stage_spatial_[static_cast<size_t>(stage)]; }

    // deep copies of all learnable state + running buffers
    std::vector<Tensor<T>> snapshot() const {
        std::vector<Tensor<T>> out;
        out.reserve(param_ptrs_.size() + buffer_ptrs_.size());
        for (const auto* p : param_ptrs_) out.push_back(p->value);
        for (const auto& b : buffer_ptrs_) out.push_back(*b.value);
        return out;
    }

    void restore(const std::vector<Tensor<T>>& snap) {
        if (snap.size() != param_ptrs_.size() + buffer_ptrs_.size())
            throw std::invalid_argument("restore: snapshot size mismatch");
        size_t i = 0;
        for (auto* p : param_ptrs_) p->value = snap[i++];
        for (auto& b : buffer_ptrs_) *b.value = snap[i++];
    }

private:
    struct Stage {
        MbConvBlock<T> down;
        std::vector<MbConvBlock<T>> mb_blocks;
        std::vector<AttentionBlock<T>> attn_blocks;
    };

    static int out_size(int in, int k, int stride, int pad) {
        return (in + 2 * pad - k) / stride + 1;
    }

    int clamp_kernel(int spatial) const {
        // largest odd kernel <= min(configured, spatial)
        int k = std::min(cfg_.multiscale_kernel, spatial);
        if (k % 2 == 0) --k;
        return std::max(k, 1);
    }

    void require_initialized() const {
        if (!initialized_) throw std::logic_error("model: not initialized");
    }

    Parameter<T>* add_param(const std::string& name, std::vector<int> shape, int fan_in,
                            Rng& rng) {
        Tensor<T> v(std::move(shape));
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& x : v.data) x = static_cast<T>(rng.uniform(-bound, bound));
        params_.emplace_back(name, std::move(v));
        param_ptrs_.push_back(&params_.back());
        return &params_.back();
    }

    Parameter<T>* add_const_param(const std::string& name, std::vector<int> shape, T value) {
        Tensor<T> v(std::move(shape), value);
        params_.emplace_back(name, std::move(v));
        param_ptrs_.push_back(&params_.back());
        return &params_.back();
    }

    Tensor<T>* add_buffer(const std::string& name, std::vector<int> shape, T value) {
        buffers_.emplace_back(std::move(shape), value);
        buffer_ptrs_.push_back({name, &buffers_.back()});
        return &buffers_.back();
    }

    ConvLayer<T> make_conv(const std::string& name, int ci, int co, int k, int stride,
                           int groups, bool bias, Rng& rng) {
        ConvLayer<T> c;
        const int fan_in = (ci / groups) * k * k;
        c.w = add_param(name + ".w", {co, ci / groups, k, k}, fan_in, rng);
        if (bias) c.b = add_param(name + ".b", {co}, fan_in, rng);
        c.stride = stride;
        c.pad = k / 2;
        c.groups = groups;
        return c;
    }

    BnLayer<T> make_bn(const std::string& name, int c) {
        BnLayer<T> bn;
        bn.gamma = add_const_param(name + ".gamma", {c}, T(1));
        bn.beta = add_const_param(name + ".beta", {c}, T(0));
        bn.run_mean = add_buffer(name + ".running_mean", {c}, T(0));
        bn.run_var = add_buffer(name + ".running_var", {c}, T(1));
        return bn;
    }

    MbConvBlock<T> make_mbconv(const std::string& name, int ci, int co, int stride, Rng& rng) {
        MbConvBlock<T> m;
        const int hid = ci * cfg_.expand_ratio;
        m.expand = make_conv(name + ".expand", ci, hid, 1, 1, 1, false, rng);
        m.bn1 = make_bn(name + ".bn1", hid);
        m.dw = make_conv(name + ".dw", hid, hid, 3, stride, hid, false, rng);
        m.bn2 = make_bn(name + ".bn2", hid);
        m.project = make_conv(name + ".project", hid, co, 1, 1, 1, false, rng);
        m.bn3 = make_bn(name + ".bn3", co);
        m.residual = stride == 1 && ci == co;
        return m;
    }

    AttentionBlock<T> make_attention(const std::string& name, int c, int kernel, Rng& rng) {
        AttentionBlock<T> b;
        b.heads = cfg_.attention_heads;
        b.dim = cfg_.attention_dim;
        b.ms_dw = make_conv(name + ".msdw", c, c, kernel, 1, c, false, rng);
        b.qkv = make_conv(name + ".qkv", 2 * c, 3 * b.dim, 1, 1, 1, false, rng);
        b.out_proj = make_conv(name + ".proj", b.dim, c, 1, 1, 1, false, rng);
        b.out_bn = make_bn(name + ".bn", c);
        b.ffn = make_mbconv(name + ".ffn", c, c, 1, rng);
        return b;
    }

    ModelConfig cfg_;
    bool initialized_ = false;

    std::deque<Parameter<T>> params_;
    std::deque<Tensor<T>> buffers_;
    std::vector<Parameter<T>*> param_ptrs_;
    std::vector<NamedBuffer> buffer_ptrs_;

    ConvLayer<T> stem_conv_;
    BnLayer<T> stem_bn_;
    std::vector<Stage> stages_;
    ConvLayer<T> head_p2_, head_p3_, head_p4_;
    BnLayer<T> head_bn_;
    Parameter<T>* fc_w_ = nullptr;
    Parameter<T>* fc_b_ = nullptr;

    std::array<int, 4> stage_spatial_{0, 0, 0, 0};
};

}  // namespace augvit
