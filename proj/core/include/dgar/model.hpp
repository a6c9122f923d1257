#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dgar/gradcheck.hpp"
#include "dgar/ops.hpp"
#include "dgar/rng.hpp"

namespace dgar::nn {

enum class Activation { relu, leaky_relu, sigmoid, tanh };
enum class Backbone { cnn, resnet, resnet_se };

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + s +
                      "' (valid: relu, leaky_relu, sigmoid, tanh)");
}
inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "?";
}
inline Backbone backbone_from_string(const std::string& s) {
    if (s == "cnn") return Backbone::cnn;
    if (s == "resnet") return Backbone::resnet;
    if (s == "resnet_se") return Backbone::resnet_se;
    throw ConfigError("unknown backbone '" + s + "' (valid: cnn, resnet, resnet_se)");
}
inline std::string to_string(Backbone b) {
    switch (b) {
        case Backbone::cnn: return "cnn";
        case Backbone::resnet: return "resnet";
        case Backbone::resnet_se: return "resnet_se";
    }
    return "?";
}

struct ModelConfig {
    int64_t in_channels = 30;  // D
    int64_t seq_len = 100;     // L, must be divisible by 4 (two pools)
    int64_t hidden_dim = 256;  // extractor output width; block widths are hidden/2, hidden
    int64_t adapters = 1;      // K, one per source domain in the DGAR configuration
    int64_t n_classes = 6;     // C
    int64_t se_reduction = 16;
    Activation activation = Activation::relu;
    int64_t adapter_hidden = 0;  // 0 -> hidden_dim
    int64_t scorer_hidden = 64;
    Backbone backbone = Backbone::resnet_se;

    int64_t block1_width() const { return hidden_dim / 2; }
    int64_t block2_width() const { return hidden_dim; }
    int64_t adapter_width() const { return adapter_hidden > 0 ? adapter_hidden : hidden_dim; }

    void validate() const {
        if (in_channels < 1 || seq_len < 4) throw ConfigError("ModelConfig: bad input shape");
        if (seq_len % 4 != 0)
            throw ConfigError("ModelConfig: seq_len " + std::to_string(seq_len) +
                              " not divisible by 4");
        if (hidden_dim != 64 && hidden_dim != 128 && hidden_dim != 256 && hidden_dim != 512)
            throw ConfigError("ModelConfig: hidden_dim must be one of {64, 128, 256, 512}");
        if (adapters < 1) throw ConfigError("ModelConfig: adapters must be >= 1");
        if (n_classes < 2) throw ConfigError("ModelConfig: need >= 2 classes");
        if (backbone == Backbone::resnet_se && block2_width() % se_reduction != 0)
            throw ConfigError("ModelConfig: block width " + std::to_string(block2_width()) +
                              " not divisible by se_reduction " + std::to_string(se_reduction));
    }
};

// Everything the training step needs from one forward pass. `leaves` is
// parallel to DgarModel::parameters(); after backward() the gradients are
// collected from it. kink_margin is the distance of the nearest relu /
// maxpool input to its nondifferentiable point (used by the gradient
// checker to reject unlucky evaluation points).
template <class S>
struct ForwardTrace {
    Var<S> h;               // B x hidden shared features
    std::vector<Var<S>> z;  // K refined features, each B x hidden
    Var<S> attention;       // B x K, rows sum to 1
    Var<S> fused;           // B x hidden
    Var<S> logits;          // B x C
    std::vector<Var<S>> leaves;
    double kink_margin = std::numeric_limits<double>::infinity();
};

// The DGAR network: shared extractor (two residual conv blocks with max
// pooling, optional SE gate, global average pooling), K parallel residual
// adapters, a shared attention scorer, and an affine classifier.
template <class S>
class DgarModel {
  public:
    DgarModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(Rng::mix(seed, 0x0d9a4));
        const int64_t d = cfg_.in_channels;
        const int64_t w1 = cfg_.block1_width();
        const int64_t w2 = cfg_.block2_width();
        const bool shortcuts = cfg_.backbone != Backbone::cnn;

        conv1_ = make_conv(rng, "conv1", w1, d, 3);
        conv2_ = make_conv(rng, "conv2", w1, w1, 3);
        if (shortcuts) shortcut1_ = make_conv(rng, "shortcut1", w1, d, 1);
        conv3_ = make_conv(rng, "conv3", w2, w1, 3);
        conv4_ = make_conv(rng, "conv4", w2, w2, 3);
        if (shortcuts) shortcut2_ = make_conv(rng, "shortcut2", w2, w1, 1);

        if (cfg_.backbone == Backbone::resnet_se) {
            int64_t r = w2 / cfg_.se_reduction;
            se_w1_ = make_affine_w(rng, "se_w1", r, w2);
            se_b1_ = make_bias("se_b1", r);
            se_w2_ = make_affine_w(rng, "se_w2", w2, r);
            se_b2_ = make_bias("se_b2", w2);
        }

        const int64_t ah = cfg_.adapter_width();
        for (int64_t k = 0; k < cfg_.adapters; ++k) {
            Adapter a;
            std::string p = "adapter" + std::to_string(k);
            a.w1 = make_affine_w(rng, p + ".w1", ah, cfg_.hidden_dim);
            a.b1 = make_bias(p + ".b1", ah);
            a.w2 = make_affine_w(rng, p + ".w2", cfg_.hidden_dim, ah);
            a.b2 = make_bias(p + ".b2", cfg_.hidden_dim);
            adapters_.push_back(std::move(a));
        }

        scorer_w1_ = make_affine_w(rng, "scorer.w1", cfg_.scorer_hidden, cfg_.hidden_dim);
        scorer_b1_ = make_bias("scorer.b1", cfg_.scorer_hidden);
        scorer_w2_ = make_affine_w(rng, "scorer.w2", 1, cfg_.scorer_hidden);
        scorer_b2_ = make_bias("scorer.b2", 1);
        cls_w_ = make_affine_w(rng, "classifier.w", cfg_.n_classes, cfg_.hidden_dim);
        cls_b_ = make_bias("classifier.b", cfg_.n_classes);
    }

    const ModelConfig& config() const { return cfg_; }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> ps;
        auto add_conv = [&](ConvBn& c) {
            ps.push_back(&c.w);
            ps.push_back(&c.gamma);
            ps.push_back(&c.beta);
        };
        add_conv(conv1_);
        add_conv(conv2_);
        if (has_shortcuts()) add_conv(*shortcut1_);
        add_conv(conv3_);
        add_conv(conv4_);
        if (has_shortcuts()) add_conv(*shortcut2_);
        if (has_se()) {
            ps.push_back(&*se_w1_);
            ps.push_back(&*se_b1_);
            ps.push_back(&*se_w2_);
            ps.push_back(&*se_b2_);
        }
        for (auto& a : adapters_) {
            ps.push_back(&a.w1);
            ps.push_back(&a.b1);
            ps.push_back(&a.w2);
            ps.push_back(&a.b2);
        }
        ps.push_back(&scorer_w1_);
        ps.push_back(&scorer_b1_);
        ps.push_back(&scorer_w2_);
        ps.push_back(&scorer_b2_);
        ps.push_back(&cls_w_);
        ps.push_back(&cls_b_);
        return ps;
    }

    std::vector<BatchNormBuffers<S>*> bn_buffers() {
        std::vector<BatchNormBuffers<S>*> bs{&conv1_.bn, &conv2_.bn};
        if (has_shortcuts()) bs.push_back(&shortcut1_->bn);
        bs.push_back(&conv3_.bn);
        bs.push_back(&conv4_.bn);
        if (has_shortcuts()) bs.push_back(&shortcut2_->bn);
        return bs;
    }

    // Full forward pass. `train` selects batch-statistics normalization
    // (and updates the running buffers); eval mode is deterministic.
    ForwardTrace<S> forward(const Tensor<S>& x, bool train, bool with_grad = true) {
        if (x.rank() != 3 || x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.seq_len)
            throw ShapeError("DgarModel::forward: input " + x.shape_str() + " does not match D=" +
                             std::to_string(cfg_.in_channels) +
                             ", L=" + std::to_string(cfg_.seq_len));
        ForwardTrace<S> t;
        Binding bind_ctx{this, &t, with_grad};
        Var<S> vx = Var<S>::constant(x);

        Var<S> h3 = extract_3d(vx, train, bind_ctx, t);
        t.h = global_avg_pool(h3);

        // adapters: z_k = h + affine(act(affine(h)))
        for (auto& a : adapters_) {
            Var<S> u = linear(t.h, bind_ctx(a.w1), bind_ctx(a.b1));
            u = activate(u, t);
            Var<S> blk = linear(u, bind_ctx(a.w2), bind_ctx(a.b2));
            t.z.push_back(add(t.h, blk));
        }

        // shared scorer -> per-sample softmax over adapters
        std::vector<Var<S>> scores;
        for (auto& zk : t.z) {
            Var<S> u = linear(zk, bind_ctx(scorer_w1_), bind_ctx(scorer_b1_));
            u = activate(u, t);
            scores.push_back(linear(u, bind_ctx(scorer_w2_), bind_ctx(scorer_b2_)));
        }
        t.attention = softmax(concat_cols(scores));

        // fused representation: z = sum_k a_k * z_k
        Var<S> fused = scale_rows(t.z[0], slice_col(t.attention, 0));
        for (size_t k = 1; k < t.z.size(); ++k)
            fused = add(fused, scale_rows(t.z[k], slice_col(t.attention, static_cast<int64_t>(k))));
        t.fused = fused;

        t.logits = linear(t.fused, bind_ctx(cls_w_), bind_ctx(cls_b_));
        return t;
    }

    // Label-free inference: extract -> adapt -> attention -> fuse ->
    // classify -> argmax. Returns 1-based labels.
    std::vector<int> predict(const Tensor<S>& x) {
        ForwardTrace<S> t = forward(x, /*train=*/false, /*with_grad=*/false);
        const Tensor<S>& lg = t.logits.value();
        std::vector<int> labels(static_cast<size_t>(lg.dim(0)));
        for (int64_t i = 0; i < lg.dim(0); ++i) {
            int64_t best = 0;
            for (int64_t j = 1; j < lg.dim(1); ++j)
                if (lg.at(i, j) > lg.at(i, best)) best = j;
            labels[static_cast<size_t>(i)] = static_cast<int>(best) + 1;
        }
        return labels;
    }

    // Copies of all values + running stats, for best-checkpoint restore.
    struct Snapshot {
        std::vector<Tensor<S>> values;
        std::vector<Tensor<S>> running;
    };

    Snapshot snapshot() {
        Snapshot s;
        for (auto* p : parameters()) s.values.push_back(p->value);
        for (auto* b : bn_buffers()) {
            s.running.push_back(b->running_mean);
            s.running.push_back(b->running_var);
        }
        return s;
    }

    void restore(const Snapshot& s) {
        auto ps = parameters();
        auto bs = bn_buffers();
        if (s.values.size() != ps.size() || s.running.size() != bs.size() * 2)
            throw DataError("DgarModel::restore: snapshot does not match model");
        for (size_t i = 0; i < ps.size(); ++i) ps[i]->value = s.values[i];
        for (size_t i = 0; i < bs.size(); ++i) {
            bs[i]->running_mean = s.running[2 * i];
            bs[i]->running_var = s.running[2 * i + 1];
        }
    }

  private:
    struct ConvBn {
        Parameter<S> w;
        Parameter<S> gamma, beta;
        BatchNormBuffers<S> bn;
    };
    struct Adapter {
        Parameter<S> w1, b1, w2, b2;
    };

    bool has_shortcuts() const { return cfg_.backbone != Backbone::cnn; }
    bool has_se() const { return cfg_.backbone == Backbone::resnet_se; }

    ConvBn make_conv(Rng& rng, const std::string& name, int64_t cout, int64_t cin, int64_t k) {
        ConvBn c;
        c.w = Parameter<S>(name + ".w", he_init(rng, {cout, cin, k}, cin * k));
        c.gamma = Parameter<S>(name + ".gamma", Tensor<S>({cout}, S(1)));
        c.beta = Parameter<S>(name + ".beta", Tensor<S>({cout}));
        c.bn = BatchNormBuffers<S>(cout);
        return c;
    }
    Parameter<S> make_affine_w(Rng& rng, const std::string& name, int64_t out, int64_t in) {
        return Parameter<S>(name, he_init(rng, {out, in}, in));
    }
    Parameter<S> make_bias(const std::string& name, int64_t n) {
        return Parameter<S>(name, Tensor<S>({n}));
    }
    Tensor<S> he_init(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
        Tensor<S> t(std::move(shape));
        double std = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = S(rng.gaussian(0.0, std));
        return t;
    }

    // Binds parameters to graph leaves on first use, keeping trace.leaves
    // parallel to parameters().
    struct Binding {
        DgarModel* model;
        ForwardTrace<S>* trace;
        bool with_grad;
        std::vector<Parameter<S>*> order;

        Var<S> operator()(Parameter<S>& p) {
            if (order.empty()) {
                order = model->parameters();
                trace->leaves.resize(order.size());
            }
            for (size_t i = 0; i < order.size(); ++i) {
                if (order[i] == &p) {
                    if (!trace->leaves[i].defined())
                        trace->leaves[i] = Var<S>::leaf(p.value, with_grad && p.trainable);
                    return trace->leaves[i];
                }
            }
            throw DataError("DgarModel: unregistered parameter " + p.name);
        }
    };

    Var<S> activate(const Var<S>& v, ForwardTrace<S>& t) {
        switch (cfg_.activation) {
            case Activation::relu:
                note_kink(v, t);
                return relu(v);
            case Activation::leaky_relu:
                note_kink(v, t);
                return leaky_relu(v, S(0.01));
            case Activation::sigmoid:
                return sigmoid(v);
            case Activation::tanh:
                return tanh_op(v);
        }
        throw ConfigError("unknown activation");
    }

    void note_kink(const Var<S>& pre, ForwardTrace<S>& t) {
        for (int64_t i = 0; i < pre.value().numel(); ++i) {
            double m = std::abs(static_cast<double>(pre.value()[i]));
            if (m < t.kink_margin) t.kink_margin = m;
        }
    }

    Var<S> pooled(const Var<S>& v, ForwardTrace<S>& t) {
        // pairwise gap feeds the same margin diagnostic as relu inputs
        const Tensor<S>& x = v.value();
        int64_t len = x.dim(2);
        for (int64_t bc = 0; bc < x.dim(0) * x.dim(1); ++bc)
            for (int64_t l = 0; l + 1 < len; l += 2) {
                double gap = std::abs(static_cast<double>(x[bc * len + l] - x[bc * len + l + 1]));
                if (gap < t.kink_margin) t.kink_margin = gap;
            }
        return maxpool1d(v);
    }

    Var<S> conv_bn_act(const Var<S>& x, ConvBn& c, int64_t pad, bool train, Binding& bind,
                       ForwardTrace<S>& t) {
        Var<S> none;
        Var<S> v = conv1d(x, bind(c.w), none, pad);
        v = batchnorm1d(v, bind(c.gamma), bind(c.beta), c.bn, train);
        return activate(v, t);
    }

    Var<S> extract_3d(const Var<S>& vx, bool train, Binding& bind, ForwardTrace<S>& t) {
        // Residual block 1
        Var<S> v = conv_bn_act(vx, conv1_, 1, train, bind, t);
        v = conv_bn_act(v, conv2_, 1, train, bind, t);
        if (has_shortcuts()) v = add(v, conv_bn_act(vx, *shortcut1_, 0, train, bind, t));
        v = pooled(v, t);
        // Residual block 2
        Var<S> u = conv_bn_act(v, conv3_, 1, train, bind, t);
        u = conv_bn_act(u, conv4_, 1, train, bind, t);
        if (has_shortcuts()) u = add(u, conv_bn_act(v, *shortcut2_, 0, train, bind, t));
        u = pooled(u, t);
        if (has_se()) u = se_block(u, bind, t);
        return u;
    }

    Var<S> se_block(const Var<S>& u, Binding& bind, ForwardTrace<S>& t) {
        Var<S> desc = global_avg_pool(u);  // B x C channel descriptor
        Var<S> b1 = linear(desc, bind(*se_w1_), bind(*se_b1_));
        b1 = activate(b1, t);
        Var<S> gate = sigmoid(linear(b1, bind(*se_w2_), bind(*se_b2_)));
        return channel_scale(u, gate);
    }

    ModelConfig cfg_;
    ConvBn conv1_, conv2_, conv3_, conv4_;
    std::optional<ConvBn> shortcut1_, shortcut2_;
    std::optional<Parameter<S>> se_w1_, se_b1_, se_w2_, se_b2_;
    std::vector<Adapter> adapters_;
    Parameter<S> scorer_w1_, scorer_b1_, scorer_w2_, scorer_b2_;
    Parameter<S> cls_w_, cls_b_;
};

}  // namespace dgar::nn
