#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ragseco/data.hpp"
#include "ragseco/graphs.hpp"
#include "ragseco/ops.hpp"
#include "ragseco/rng.hpp"
#include "ragseco/sparse.hpp"
#include "ragseco/tensor.hpp"

namespace ragseco::model {

using ad::Tape;
using ad::Tensor;

// Ablation variants. Each one removes a single mechanism:
//   -R  skip relational embedding learning (initial features feed propagation)
//   -M  skip similarity-graph propagation (relational embeddings used directly)
//   -I  drop the initial-feature view from fusion
//   -S  drop the SMILES view from fusion
//   -E  drop the embedding view from fusion
//   -C  drop co-contrastive learning (embedding view only, CE loss only)
enum class Variant {
    full,
    drop_ragsel,
    drop_propagation,
    drop_initial_view,
    drop_smiles_view,
    drop_embed_view,
    drop_contrastive,
};

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::drop_ragsel: return "-R";
        case Variant::drop_propagation: return "-M";
        case Variant::drop_initial_view: return "-I";
        case Variant::drop_smiles_view: return "-S";
        case Variant::drop_embed_view: return "-E";
        case Variant::drop_contrastive: return "-C";
    }
    throw ContractError("variant_name: bad variant");
}

inline Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "-R" || s == "R") return Variant::drop_ragsel;
    if (s == "-M" || s == "M") return Variant::drop_propagation;
    if (s == "-I" || s == "I") return Variant::drop_initial_view;
    if (s == "-S" || s == "S") return Variant::drop_smiles_view;
    if (s == "-E" || s == "E") return Variant::drop_embed_view;
    if (s == "-C" || s == "C") return Variant::drop_contrastive;
    throw ConfigError("unknown variant '" + s + "' (want full, -R, -M, -I, -S, -E or -C)");
}

struct HyperParams {
    std::size_t bs = 512;
    double lr = 2e-5;
    double dr = 0.3;
    std::size_t te = 120;
    std::size_t d_prime = 500;
    int n = 0;
    std::size_t d_fnn = 1000;
    double t_pos = 0.95;
    double t_neg = 0.1;
    double lambda = 5.0;
    double mixup_alpha = 0.2; // 0 disables mixup
    std::uint64_t seed = 1;

    // architecture knobs the headline parameters leave open
    std::size_t decoder_hidden = 0; // 0 -> d_fnn
    std::size_t smiles_q = 100;
    std::vector<std::size_t> cnn_channels = {32, 64, 96};
    std::vector<std::size_t> cnn_kernels = {4, 6, 8};

    std::size_t effective_decoder_hidden() const {
        return decoder_hidden == 0 ? d_fnn : decoder_hidden;
    }
};

inline void validate(const HyperParams& hp) {
    if (hp.bs == 0) throw ConfigError("bs must be >= 1");
    if (!(hp.lr > 0.0)) throw ConfigError("lr must be > 0");
    if (hp.dr < 0.0 || hp.dr >= 1.0) throw ConfigError("dr must lie in [0,1)");
    if (hp.d_prime == 0) throw ConfigError("d_prime must be >= 1");
    if (hp.n < 0) throw ConfigError("n must be >= 0");
    if (hp.d_fnn == 0) throw ConfigError("d_fnn must be >= 1");
    if (!(hp.t_pos > hp.t_neg)) throw ConfigError("t_pos must be greater than t_neg");
    if (hp.t_pos > 1.0) throw ConfigError("t_pos is a cosine threshold and cannot exceed 1");
    if (!(hp.lambda > 0.0)) throw ConfigError("lambda must be > 0");
    if (hp.mixup_alpha < 0.0) throw ConfigError("mixup_alpha must be >= 0");
    if (hp.smiles_q == 0) throw ConfigError("smiles_q must be >= 1");
    if (hp.cnn_channels.empty() || hp.cnn_channels.size() != hp.cnn_kernels.size())
        throw ConfigError("cnn_channels and cnn_kernels must be non-empty and equally long");
}

// Per-drug binary event-type participation, computed from train DDIs only.
// New drugs keep an all-zero row.
struct InteractionCharacteristics {
    std::size_t n_drugs = 0;
    std::size_t n_types = 0;
    std::vector<std::uint8_t> participation; // n_drugs x n_types

    static InteractionCharacteristics from_train(std::span<const data::Ddi> train,
                                                 std::size_t n_drugs, std::size_t n_types) {
        InteractionCharacteristics ic;
        ic.n_drugs = n_drugs;
        ic.n_types = n_types;
        ic.participation.assign(n_drugs * n_types, 0);
        for (const data::Ddi& d : train) {
            ic.participation[d.a * n_types + d.type] = 1;
            ic.participation[d.b * n_types + d.type] = 1;
        }
        return ic;
    }

    // c_k = t_i + t_j, entries in {0,1,2}
    std::vector<int> pair_characteristics(std::uint32_t i, std::uint32_t j) const {
        std::vector<int> c(n_types);
        for (std::size_t r = 0; r < n_types; ++r)
            c[r] = participation[i * n_types + r] + participation[j * n_types + r];
        return c;
    }
};

struct PairSelection {
    std::vector<std::pair<std::size_t, std::size_t>> positives;
    std::vector<std::pair<std::size_t, std::size_t>> negatives;
    bool empty() const { return positives.empty() && negatives.empty(); }
    std::size_t total() const { return positives.size() + negatives.size(); }
};

// Cosine similarity over interaction characteristics decides positives
// (S >= t_pos) and negatives (S <= t_neg); pairs in between are discarded,
// and pairs involving a zero characteristic vector are excluded outright.
// Ordered pairs over the batch, self-pairs included. Integer dot products and
// norms keep the S == 1 boundary exact for parallel vectors.
inline PairSelection select_contrastive_pairs(const std::vector<std::vector<int>>& c,
                                              double t_pos, double t_neg) {
    const std::size_t k = c.size();
    std::vector<std::int64_t> norm2(k, 0);
    for (std::size_t i = 0; i < k; ++i)
        for (int v : c[i]) norm2[i] += static_cast<std::int64_t>(v) * v;

    PairSelection sel;
    for (std::size_t a = 0; a < k; ++a) {
        if (norm2[a] == 0) continue;
        for (std::size_t b = 0; b < k; ++b) {
            if (norm2[b] == 0) continue;
            std::int64_t dot = 0;
            for (std::size_t r = 0; r < c[a].size(); ++r)
                dot += static_cast<std::int64_t>(c[a][r]) * c[b][r];
            const double s = static_cast<double>(dot) /
                             std::sqrt(static_cast<double>(norm2[a]) *
                                       static_cast<double>(norm2[b]));
            if (s >= t_pos)
                sel.positives.push_back({a, b});
            else if (s <= t_neg)
                sel.negatives.push_back({a, b});
        }
    }
    return sel;
}

// Affine map with Glorot-uniform weight init and zero bias.
struct Affine {
    Tensor weight; // in x out
    Tensor bias;   // out

    Affine(std::size_t in, std::size_t out, rng::Engine& init)
        : weight(Tensor::zeros({in, out}, true)), bias(Tensor::zeros({out}, true)) {
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& w : weight.values()) w = init.uniform(-a, a);
    }

    Tensor forward(Tape& tape, const Tensor& x) const {
        return ad::ops::add_rowvec(tape, ad::ops::matmul(tape, x, weight), bias);
    }
};

// Two affine layers with GeLU + batchnorm + dropout between them.
struct FnnBlock {
    Affine fc1;
    Affine fc2;
    ad::ops::BatchNorm bn;
    double dropout_rate;

    FnnBlock(std::size_t in, std::size_t width, double dropout, rng::Engine& init)
        : fc1(in, width, init), fc2(width, width, init), bn(width), dropout_rate(dropout) {}

    Tensor forward(Tape& tape, const Tensor& x, Mode mode, rng::Engine& rng) {
        Tensor h = fc1.forward(tape, x);
        h = ad::ops::gelu(tape, h);
        h = bn.forward(tape, h, mode);
        h = ad::ops::dropout(tape, h, dropout_rate, mode, rng);
        return fc2.forward(tape, h);
    }
};

// 1-D conv stack with ReLU after each layer, then global max pooling and an
// affine projection of the pooled channels.
struct CnnEncoder {
    struct Layer {
        Tensor weight; // out_ch x (in_ch * kernel)
        Tensor bias;   // out_ch
        std::size_t kernel;
    };
    std::vector<Layer> layers;
    Affine proj;

    CnnEncoder(std::size_t in_channels, const std::vector<std::size_t>& channels,
               const std::vector<std::size_t>& kernels, std::size_t out_width, rng::Engine& init)
        : proj(channels.back(), out_width, init) {
        std::size_t prev = in_channels;
        for (std::size_t l = 0; l < channels.size(); ++l) {
            Layer layer{Tensor::zeros({channels[l], prev * kernels[l]}, true),
                        Tensor::zeros({channels[l]}, true), kernels[l]};
            const double a =
                std::sqrt(6.0 / static_cast<double>(prev * kernels[l] + channels[l] * kernels[l]));
            for (double& w : layer.weight.values()) w = init.uniform(-a, a);
            layers.push_back(std::move(layer));
            prev = channels[l];
        }
    }

    // One input [channels x length] -> pooled [1 x last_channels]
    Tensor forward_pooled(Tape& tape, const Tensor& x) const {
        Tensor h = x;
        for (const Layer& layer : layers) {
            h = ad::ops::conv1d(tape, h, layer.weight, layer.bias, layer.kernel);
            h = ad::ops::relu(tape, h);
        }
        return ad::ops::global_max_pool(tape, h);
    }

    // Batch of inputs -> [K x out_width]
    Tensor forward_batch(Tape& tape, std::span<const Tensor> inputs) const {
        std::vector<Tensor> pooled;
        pooled.reserve(inputs.size());
        for (const Tensor& x : inputs) pooled.push_back(forward_pooled(tape, x));
        return proj.forward(tape, ad::ops::concat_rows(tape, pooled));
    }
};

struct ModelDims {
    std::size_t n_drugs = 0;
    std::size_t n_types = 0;   // R
    std::size_t d_in = 0;      // 3N
    std::size_t d_prime = 0;
    std::size_t d_fnn = 0;
    std::size_t decoder_hidden = 0;
    std::size_t smiles_p = 64;
    std::size_t smiles_q = 100;
    std::vector<std::size_t> cnn_channels;
    std::vector<std::size_t> cnn_kernels;
    int power = 0;
    double dropout_rate = 0.0;
    Variant variant = Variant::full;

    static ModelDims from(const data::Dataset& ds, const HyperParams& hp, Variant variant) {
        ModelDims d;
        d.n_drugs = ds.drug_count();
        d.n_types = ds.n_types;
        d.d_in = data::kAttributeCount * ds.drug_count();
        d.d_prime = hp.d_prime;
        d.d_fnn = hp.d_fnn;
        d.decoder_hidden = hp.effective_decoder_hidden();
        d.smiles_q = hp.smiles_q;
        d.cnn_channels = hp.cnn_channels;
        d.cnn_kernels = hp.cnn_kernels;
        d.power = hp.n;
        d.dropout_rate = hp.dr;
        d.variant = variant;
        return d;
    }
};

// Graph operators prepared once per fold; all constants.
struct GraphInputs {
    Tensor x;                                  // N x d initial features
    std::vector<ad::SparseMatrix> rel_norm;    // normalized per-relation adjacency
    std::vector<Tensor> rel_x;                 // (diag(1/R_i) Â_r) X, per relation
    std::vector<Tensor> dds_pow;               // Â_s^n, Â_e^n, Â_t^n
    std::vector<Tensor> smiles;                // per-drug one-hot matrices [p x q]

    static GraphInputs prepare(const data::Dataset& ds, std::span<const data::Ddi> train,
                               const Tensor& x, const graphs::SimilarityAdjacency& dds,
                               const std::vector<Tensor>& smiles, int power) {
        GraphInputs gi;
        gi.x = x;
        gi.smiles = smiles;
        const graphs::MultiRelAdjacency adj =
            graphs::build_ddi_adjacency(train, ds.drug_count(), ds.n_types);
        ad::Tape no_tape; // all constants, nothing is recorded
        for (std::size_t r = 0; r < adj.relations.size(); ++r) {
            ad::SparseMatrix norm = graphs::normalize_adjacency(adj.relations[r]);
            ad::SparseMatrix scaled = norm.map_weights([&](std::size_t row, std::size_t, double w) {
                const int ri = adj.relation_counts[row];
                return ri > 0 ? w / static_cast<double>(ri) : 0.0;
            });
            gi.rel_x.push_back(ad::ops::spmm(no_tape, scaled, x));
            gi.rel_norm.push_back(std::move(norm));
        }
        graphs::PowerCache cache;
        for (std::size_t a = 0; a < data::kAttributeCount; ++a) {
            Tensor norm = graphs::normalize_adjacency(dds.attribute(a));
            gi.dds_pow.push_back(cache.get(norm, power));
        }
        return gi;
    }
};

struct PairViews {
    Tensor initial; // similarity view
    Tensor embed;   // interaction view
    Tensor smiles;  // SMILES view
};

class Model {
public:
    Model(ModelDims dims, rng::Engine& init)
        : dims_(std::move(dims)),
          ragsel_self_(Tensor::zeros({dims_.d_in, dims_.d_prime}, true)),
          fnn1_(2 * dims_.d_in, dims_.d_fnn, dims_.dropout_rate, init),
          fnn2_(2 * ragsep_output_dim(), dims_.d_fnn, dims_.dropout_rate, init),
          cnn_(dims_.smiles_p, dims_.cnn_channels, dims_.cnn_kernels, dims_.d_fnn, init),
          discriminator_(Tensor::zeros({dims_.d_fnn, dims_.d_fnn}, true)),
          decoder_fc1_(fused_width(), dims_.decoder_hidden, init),
          decoder_bn_(dims_.decoder_hidden),
          decoder_fc2_(dims_.decoder_hidden, dims_.n_types, init) {
        // ragsel weights drawn after construction so every variant consumes
        // the init stream in the same order
        const double a = std::sqrt(6.0 / static_cast<double>(dims_.d_in + dims_.d_prime));
        for (double& w : ragsel_self_.values()) w = init.uniform(-a, a);
        for (std::size_t r = 0; r < dims_.n_types; ++r) {
            Tensor w = Tensor::zeros({dims_.d_in, dims_.d_prime}, true);
            for (double& v : w.values()) v = init.uniform(-a, a);
            ragsel_rel_.push_back(std::move(w));
        }
        const std::size_t prop_in = propagation_input_dim();
        const double b = std::sqrt(6.0 / static_cast<double>(prop_in + dims_.d_prime));
        for (std::size_t i = 0; i < data::kAttributeCount; ++i) {
            Tensor w = Tensor::zeros({prop_in, dims_.d_prime}, true);
            for (double& v : w.values()) v = init.uniform(-b, b);
            ragsep_w_.push_back(std::move(w));
        }
        const double c = std::sqrt(6.0 / static_cast<double>(2 * dims_.d_fnn));
        for (double& v : discriminator_.values()) v = init.uniform(-c, c);
    }

    const ModelDims& dims() const { return dims_; }

    std::size_t fused_width() const {
        switch (dims_.variant) {
            case Variant::drop_contrastive: return dims_.d_fnn;
            case Variant::drop_initial_view:
            case Variant::drop_smiles_view:
            case Variant::drop_embed_view: return 3 * dims_.d_fnn;
            default: return 4 * dims_.d_fnn;
        }
    }

    // h_i = ReLU( sum_r sum_j (Â_r[i,j]/R_i) x_j W_r + x_i W_o )
    Tensor ragsel_forward(Tape& tape, const GraphInputs& gi) const {
        Tensor acc = ad::ops::matmul(tape, gi.x, ragsel_self_);
        for (std::size_t r = 0; r < ragsel_rel_.size(); ++r)
            acc = ad::ops::add(tape, acc, ad::ops::matmul(tape, gi.rel_x[r], ragsel_rel_[r]));
        return ad::ops::relu(tape, acc);
    }

    // H_embed = ReLU(Âs^n H Ws) + ReLU(Âe^n H We) + ReLU(Ât^n H Wt)
    Tensor ragsep_forward(Tape& tape, const Tensor& h, const GraphInputs& gi) const {
        Tensor out;
        for (std::size_t a = 0; a < data::kAttributeCount; ++a) {
            Tensor prop = dims_.power == 0 ? h : ad::ops::matmul(tape, gi.dds_pow[a], h);
            Tensor term = ad::ops::relu(tape, ad::ops::matmul(tape, prop, ragsep_w_[a]));
            out = out.defined() ? ad::ops::add(tape, out, term) : term;
        }
        return out;
    }

    // Variant dispatch for the drug-embedding stage.
    Tensor drug_embeddings(Tape& tape, const GraphInputs& gi) const {
        if (dims_.variant == Variant::drop_ragsel) return ragsep_forward(tape, gi.x, gi);
        Tensor h = ragsel_forward(tape, gi);
        if (dims_.variant == Variant::drop_propagation) return h;
        return ragsep_forward(tape, h, gi);
    }

    bool needs_initial_view() const { return dims_.variant != Variant::drop_contrastive; }
    bool needs_smiles_view() const {
        return dims_.variant != Variant::drop_contrastive &&
               dims_.variant != Variant::drop_smiles_view;
    }

    PairViews encode_pair_views(Tape& tape, const GraphInputs& gi, const Tensor& h_embed,
                                std::span<const data::Ddi> pairs, Mode mode, rng::Engine& rng) {
        std::vector<std::size_t> left, right;
        left.reserve(pairs.size());
        right.reserve(pairs.size());
        for (const data::Ddi& p : pairs) {
            if (p.a == p.b)
                throw ContractError("encode_pair_views: pair with identical drugs " +
                                    std::to_string(p.a));
            left.push_back(p.a);
            right.push_back(p.b);
        }
        PairViews views;
        Tensor hi = ad::ops::gather_rows(tape, h_embed, left);
        Tensor hj = ad::ops::gather_rows(tape, h_embed, right);
        views.embed = fnn2_.forward(tape, ad::ops::concat_cols(tape, {hi, hj}), mode, rng);
        if (needs_initial_view()) {
            Tensor xi = ad::ops::gather_rows(tape, gi.x, left);
            Tensor xj = ad::ops::gather_rows(tape, gi.x, right);
            views.initial = fnn1_.forward(tape, ad::ops::concat_cols(tape, {xi, xj}), mode, rng);
        }
        if (needs_smiles_view()) {
            std::vector<Tensor> smiles_pairs;
            smiles_pairs.reserve(pairs.size());
            for (const data::Ddi& p : pairs)
                smiles_pairs.push_back(concat_smiles(gi.smiles[p.a], gi.smiles[p.b]));
            views.smiles = cnn_.forward_batch(tape, smiles_pairs);
        }
        return views;
    }

    // Eq. pair of mirrored binary cross-entropy losses over the bilinear
    // discriminator Psi(a, b) = sigmoid(a W b^T); the weight is shared
    // between both directions.
    std::pair<Tensor, Tensor> contrastive_losses(Tape& tape, const PairViews& views,
                                                 const PairSelection& sel) const {
        if (sel.empty()) return {Tensor::scalar(0.0), Tensor::scalar(0.0)};
        std::vector<std::size_t> ks, qs;
        ks.reserve(sel.total());
        qs.reserve(sel.total());
        for (const auto& [k, q] : sel.positives) {
            ks.push_back(k);
            qs.push_back(q);
        }
        for (const auto& [k, q] : sel.negatives) {
            ks.push_back(k);
            qs.push_back(q);
        }
        const Tensor loss1 =
            directed_loss(tape, views.embed, views.initial, ks, qs, sel.positives.size());
        const Tensor loss2 =
            directed_loss(tape, views.initial, views.embed, ks, qs, sel.positives.size());
        return {loss1, loss2};
    }

    // p_add = sum of views; p_k = views and their sum concatenated
    Tensor fuse_pair(Tape& tape, const PairViews& v) const {
        namespace ops = ad::ops;
        switch (dims_.variant) {
            case Variant::drop_contrastive: return v.embed;
            case Variant::drop_initial_view: {
                Tensor add = ops::add(tape, v.smiles, v.embed);
                return ops::concat_cols(tape, {v.smiles, v.embed, add});
            }
            case Variant::drop_smiles_view: {
                Tensor add = ops::add(tape, v.initial, v.embed);
                return ops::concat_cols(tape, {v.initial, v.embed, add});
            }
            case Variant::drop_embed_view: {
                Tensor add = ops::add(tape, v.initial, v.smiles);
                return ops::concat_cols(tape, {v.initial, v.smiles, add});
            }
            default: {
                Tensor add = ops::add(tape, ops::add(tape, v.initial, v.embed), v.smiles);
                return ops::concat_cols(tape, {v.initial, v.embed, v.smiles, add});
            }
        }
    }

    Tensor decode(Tape& tape, const Tensor& fused, Mode mode, rng::Engine& rng) {
        Tensor h = decoder_fc1_.forward(tape, fused);
        h = ad::ops::gelu(tape, h);
        h = decoder_bn_.forward(tape, h, mode);
        h = ad::ops::dropout(tape, h, dims_.dropout_rate, mode, rng);
        h = decoder_fc2_.forward(tape, h);
        return ad::ops::softmax_rows(tape, h);
    }

    // L_ce = -sum_k sum_r yhat_{k,r} log y_{k,r}, summed over the batch
    static Tensor classification_loss(Tape& tape, const Tensor& probs, const Tensor& labels) {
        if (probs.shape() != labels.shape())
            throw ShapeError("classification_loss: probs " + ad::shape_str(probs.shape()) +
                             " vs labels " + ad::shape_str(labels.shape()));
        Tensor ll = ad::ops::mul(tape, labels, ad::ops::log_clamped(tape, probs));
        return ad::ops::scale(tape, ad::ops::sum(tape, ll), -1.0);
    }

    // L = lambda * L_ce + l_ss1 + l_ss2
    static Tensor total_loss(Tape& tape, const Tensor& ce, const Tensor& l1, const Tensor& l2,
                             double lambda) {
        if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
        return ad::ops::add(tape, ad::ops::scale(tape, ce, lambda), ad::ops::add(tape, l1, l2));
    }

    std::vector<std::pair<std::string, Tensor>> named_parameters() {
        std::vector<std::pair<std::string, Tensor>> out;
        out.push_back({"ragsel.self.weight", ragsel_self_});
        for (std::size_t r = 0; r < ragsel_rel_.size(); ++r)
            out.push_back({"ragsel.rel." + pad3(r) + ".weight", ragsel_rel_[r]});
        const char* attr[] = {"sub", "enz", "tgt"};
        for (std::size_t a = 0; a < ragsep_w_.size(); ++a)
            out.push_back({std::string("ragsep.") + attr[a] + ".weight", ragsep_w_[a]});
        append_fnn(out, "fnn1", fnn1_);
        append_fnn(out, "fnn2", fnn2_);
        for (std::size_t l = 0; l < cnn_.layers.size(); ++l) {
            out.push_back({"cnn.conv." + pad3(l) + ".weight", cnn_.layers[l].weight});
            out.push_back({"cnn.conv." + pad3(l) + ".bias", cnn_.layers[l].bias});
        }
        out.push_back({"cnn.proj.weight", cnn_.proj.weight});
        out.push_back({"cnn.proj.bias", cnn_.proj.bias});
        out.push_back({"disc.weight", discriminator_});
        out.push_back({"decoder.fc1.weight", decoder_fc1_.weight});
        out.push_back({"decoder.fc1.bias", decoder_fc1_.bias});
        out.push_back({"decoder.bn.gamma", decoder_bn_.gamma});
        out.push_back({"decoder.bn.beta", decoder_bn_.beta});
        out.push_back({"decoder.fc2.weight", decoder_fc2_.weight});
        out.push_back({"decoder.fc2.bias", decoder_fc2_.bias});
        return out;
    }

    // Non-trainable state: batchnorm running statistics.
    std::vector<std::pair<std::string, std::vector<double>*>> named_buffers() {
        return {
            {"fnn1.bn.running_mean", &fnn1_.bn.running_mean},
            {"fnn1.bn.running_var", &fnn1_.bn.running_var},
            {"fnn2.bn.running_mean", &fnn2_.bn.running_mean},
            {"fnn2.bn.running_var", &fnn2_.bn.running_var},
            {"decoder.bn.running_mean", &decoder_bn_.running_mean},
            {"decoder.bn.running_var", &decoder_bn_.running_var},
        };
    }

    ad::ops::BatchNorm& decoder_batchnorm() { return decoder_bn_; }
    const Tensor& discriminator_weight() { return discriminator_; }

private:
    std::size_t propagation_input_dim() const {
        return dims_.variant == Variant::drop_ragsel ? dims_.d_in : dims_.d_prime;
    }
    std::size_t ragsep_output_dim() const {
        // every embedding path ends at d_prime
        return dims_.d_prime;
    }

    static std::string pad3(std::size_t v) {
        std::string s = std::to_string(v);
        while (s.size() < 3) s.insert(s.begin(), '0');
        return s;
    }

    static void append_fnn(std::vector<std::pair<std::string, Tensor>>& out,
                           const std::string& prefix, FnnBlock& f) {
        out.push_back({prefix + ".fc1.weight", f.fc1.weight});
        out.push_back({prefix + ".fc1.bias", f.fc1.bias});
        out.push_back({prefix + ".bn.gamma", f.bn.gamma});
        out.push_back({prefix + ".bn.beta", f.bn.beta});
        out.push_back({prefix + ".fc2.weight", f.fc2.weight});
        out.push_back({prefix + ".fc2.bias", f.fc2.bias});
    }

    static Tensor concat_smiles(const Tensor& a, const Tensor& b) {
        const std::size_t p = a.rows(), q = a.cols();
        Tensor out = Tensor::zeros({p, 2 * q});
        for (std::size_t r = 0; r < p; ++r) {
            std::copy(a.values().begin() + r * q, a.values().begin() + (r + 1) * q,
                      out.values().begin() + r * 2 * q);
            std::copy(b.values().begin() + r * q, b.values().begin() + (r + 1) * q,
                      out.values().begin() + r * 2 * q + q);
        }
        return out;
    }

    Tensor directed_loss(Tape& tape, const Tensor& lhs, const Tensor& rhs,
                         const std::vector<std::size_t>& ks, const std::vector<std::size_t>& qs,
                         std::size_t n_pos) const {
        namespace ops = ad::ops;
        const std::size_t total = ks.size();
        Tensor lw = ops::matmul(tape, lhs, discriminator_);
        Tensor scores = ops::sigmoid(
            tape, ops::row_sum(tape, ops::mul(tape, ops::gather_rows(tape, lw, ks),
                                              ops::gather_rows(tape, rhs, qs))));
        std::vector<std::size_t> pos_idx(n_pos), neg_idx(total - n_pos);
        for (std::size_t i = 0; i < n_pos; ++i) pos_idx[i] = i;
        for (std::size_t i = n_pos; i < total; ++i) neg_idx[i - n_pos] = i;
        Tensor pos_term = ops::sum(
            tape, ops::log_clamped(tape, ops::gather_rows(tape, scores, std::move(pos_idx))));
        Tensor neg_scores = ops::gather_rows(tape, scores, std::move(neg_idx));
        Tensor neg_term = ops::sum(
            tape, ops::log_clamped(
                      tape, ops::add_const(tape, ops::scale(tape, neg_scores, -1.0), 1.0)));
        Tensor both = ops::add(tape, pos_term, neg_term);
        return ops::scale(tape, both, -1.0 / static_cast<double>(total));
    }

    ModelDims dims_;
    Tensor ragsel_self_;
    std::vector<Tensor> ragsel_rel_;
    std::vector<Tensor> ragsep_w_;
    FnnBlock fnn1_;
    FnnBlock fnn2_;
    CnnEncoder cnn_;
    Tensor discriminator_;
    Affine decoder_fc1_;
    ad::ops::BatchNorm decoder_bn_;
    Affine decoder_fc2_;
};

} // namespace ragseco::model
