#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ragseco/checkpoint.hpp"
#include "ragseco/data.hpp"
#include "ragseco/graphs.hpp"
#include "ragseco/metrics.hpp"
#include "ragseco/model.hpp"
#include "ragseco/optimizer.hpp"
#include "ragseco/rng.hpp"
#include "ragseco/splits.hpp"
#include "ragseco/tensor.hpp"

namespace ragseco::train {

using ad::Tape;
using ad::Tensor;

struct TrainConfig {
    model::HyperParams hp;
    int task = 1;
    std::size_t fold = 0;
    model::Variant variant = model::Variant::full;
};

struct MixupResult {
    Tensor features;
    Tensor labels;
    double mu = 1.0;
};

// Convex combination of the batch with a permuted copy of itself, same mu for
// features and labels. Labels are plain constants; features stay on the tape.
inline MixupResult mixup_with(Tape& tape, const Tensor& features, const Tensor& onehot,
                              double mu, const std::vector<std::size_t>& perm) {
    namespace ops = ad::ops;
    MixupResult out;
    out.mu = mu;
    out.features = ops::add(tape, ops::scale(tape, features, mu),
                            ops::scale(tape, ops::gather_rows(tape, features, perm), 1.0 - mu));
    const std::size_t k = onehot.rows(), r = onehot.cols();
    Tensor mixed = Tensor::zeros({k, r});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < r; ++j)
            mixed.at(i, j) = mu * onehot.at(i, j) + (1.0 - mu) * onehot.at(perm[i], j);
    out.labels = mixed;
    return out;
}

inline MixupResult mixup(Tape& tape, const Tensor& features, const Tensor& onehot, double alpha,
                         rng::Engine& rng) {
    if (!(alpha > 0.0)) throw ConfigError("mixup alpha must be > 0");
    const double mu = rng.beta(alpha, alpha);
    const std::vector<std::size_t> perm = rng.permutation(features.rows());
    return mixup_with(tape, features, onehot, mu, perm);
}

// Dataset-level inputs that do not depend on the split.
struct DatasetFeatures {
    Tensor x;                          // N x 3N Jaccard feature matrix
    graphs::SimilarityAdjacency dds;
    std::vector<Tensor> smiles;        // per-drug [p x q]

    static DatasetFeatures build(const data::Dataset& ds, const data::SmilesCharset& charset,
                                 std::size_t q, std::size_t* skipped_chars = nullptr) {
        DatasetFeatures f{data::build_initial_features(ds), graphs::build_dds_adjacency(ds), {}};
        f.smiles.reserve(ds.drug_count());
        std::size_t skipped_total = 0;
        for (const data::DrugRecord& drug : ds.drugs) {
            std::size_t skipped = 0;
            f.smiles.push_back(data::encode_smiles(drug.smiles, charset, q, &skipped));
            skipped_total += skipped;
        }
        if (skipped_chars) *skipped_chars = skipped_total;
        return f;
    }
};

struct FoldContext {
    const data::Dataset* dataset = nullptr;
    model::GraphInputs gi;
    model::InteractionCharacteristics chars;
    std::vector<data::Ddi> train_pairs;
    std::vector<data::Ddi> test_pairs;

    static FoldContext prepare(const data::Dataset& ds, const DatasetFeatures& feats,
                               const data::SplitFold& fold, int power) {
        FoldContext ctx;
        ctx.dataset = &ds;
        for (std::size_t idx : fold.train_ddis) ctx.train_pairs.push_back(ds.ddis[idx]);
        for (std::size_t idx : fold.test_ddis) ctx.test_pairs.push_back(ds.ddis[idx]);
        ctx.gi = model::GraphInputs::prepare(ds, ctx.train_pairs, feats.x, feats.dds, feats.smiles,
                                             power);
        ctx.chars = model::InteractionCharacteristics::from_train(ctx.train_pairs, ds.drug_count(),
                                                                  ds.n_types);
        return ctx;
    }
};

struct BatchLossRow {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double total = 0.0;
    double ce = 0.0;
    double ss1 = 0.0;
    double ss2 = 0.0;
};

class Trainer {
public:
    Trainer(FoldContext& ctx, TrainConfig cfg)
        : ctx_(ctx),
          cfg_(std::move(cfg)),
          init_rng_(rng::Engine::stream(cfg_.hp.seed, 101)),
          model_(make_model(), init_rng_),
          optimizer_(model_.named_parameters(), cfg_.hp.lr) {
        model::validate(cfg_.hp);
        if (ctx_.train_pairs.empty()) throw ConfigError("training fold has no DDIs");
    }

    model::Model& model() { return model_; }
    const TrainConfig& config() const { return cfg_; }

    // One pass over Algorithm: per batch, recompute drug embeddings, encode
    // views, select contrastive pairs, assemble the total loss and take one
    // optimizer step.
    void run(std::ostream* loss_log) {
        if (loss_log) *loss_log << "# epoch batch loss ce ss1 ss2\n";
        for (std::size_t epoch = 1; epoch <= cfg_.hp.te; ++epoch) {
            const auto batches = epoch_batches(epoch);
            for (std::size_t b = 0; b < batches.size(); ++b) {
                const BatchLossRow row = train_batch(epoch, b, batches[b]);
                if (loss_log)
                    *loss_log << row.epoch << ' ' << row.batch << ' '
                              << metrics::format_double(row.total) << ' '
                              << metrics::format_double(row.ce) << ' '
                              << metrics::format_double(row.ss1) << ' '
                              << metrics::format_double(row.ss2) << '\n';
                history_.push_back(row);
            }
        }
    }

    const std::vector<BatchLossRow>& history() const { return history_; }

    // Probability rows for arbitrary pairs, each averaged over both drug
    // orders; eval mode (running batchnorm statistics, no dropout).
    std::vector<double> predict_probs(std::span<const data::Ddi> pairs) {
        const std::size_t r = ctx_.dataset->n_types;
        std::vector<double> out(pairs.size() * r, 0.0);
        const std::size_t chunk = std::max<std::size_t>(cfg_.hp.bs, 1);
        rng::Engine eval_rng(0); // dropout is the identity in eval mode
        for (std::size_t start = 0; start < pairs.size(); start += chunk) {
            const std::size_t count = std::min(chunk, pairs.size() - start);
            std::vector<data::Ddi> fwd, rev;
            fwd.reserve(count);
            rev.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                const data::Ddi& p = pairs[start + i];
                if (p.a >= ctx_.dataset->drug_count() || p.b >= ctx_.dataset->drug_count())
                    throw DataError("pair references unknown drug index");
                fwd.push_back(p);
                rev.push_back({p.b, p.a, p.type});
            }
            Tape tape;
            Tensor h = model_.drug_embeddings(tape, ctx_.gi);
            const Tensor y_fwd = decode_pairs(tape, h, fwd, eval_rng);
            const Tensor y_rev = decode_pairs(tape, h, rev, eval_rng);
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < r; ++j)
                    out[(start + i) * r + j] = 0.5 * (y_fwd.at(i, j) + y_rev.at(i, j));
        }
        return out;
    }

    metrics::MetricsReport evaluate(std::span<const data::Ddi> pairs) {
        const std::vector<double> probs = predict_probs(pairs);
        std::vector<std::uint32_t> labels;
        labels.reserve(pairs.size());
        for (const data::Ddi& p : pairs) labels.push_back(p.type);
        return metrics::compute_metrics(probs, ctx_.dataset->n_types, labels);
    }

    model::Checkpoint checkpoint(std::map<std::string, std::int64_t> extra_meta = {}) {
        auto meta = std::move(extra_meta);
        const model::ModelDims& d = model_.dims();
        meta["n_drugs"] = static_cast<std::int64_t>(d.n_drugs);
        meta["n_types"] = static_cast<std::int64_t>(d.n_types);
        meta["d_in"] = static_cast<std::int64_t>(d.d_in);
        meta["d_prime"] = static_cast<std::int64_t>(d.d_prime);
        meta["d_fnn"] = static_cast<std::int64_t>(d.d_fnn);
        meta["decoder_hidden"] = static_cast<std::int64_t>(d.decoder_hidden);
        meta["smiles_p"] = static_cast<std::int64_t>(d.smiles_p);
        meta["smiles_q"] = static_cast<std::int64_t>(d.smiles_q);
        meta["power"] = d.power;
        meta["variant"] = static_cast<std::int64_t>(d.variant);
        meta["task"] = cfg_.task;
        meta["fold"] = static_cast<std::int64_t>(cfg_.fold);
        return model::export_state(model_, std::move(meta));
    }

private:
    model::ModelDims make_model() const {
        model::validate(cfg_.hp);
        return model::ModelDims::from(*ctx_.dataset, cfg_.hp, cfg_.variant);
    }

    // Doubled pair rows (both orders in every epoch), shuffled, cut into
    // batches; a trailing single-row batch is merged into its predecessor so
    // train-mode batchnorm always sees at least two rows.
    std::vector<std::vector<data::Ddi>> epoch_batches(std::size_t epoch) const {
        std::vector<data::Ddi> rows;
        rows.reserve(ctx_.train_pairs.size() * 2);
        for (const data::Ddi& p : ctx_.train_pairs) {
            rows.push_back(p);
            rows.push_back({p.b, p.a, p.type});
        }
        rng::Engine shuffle_rng = rng::Engine::stream(cfg_.hp.seed, 201, epoch);
        const std::vector<std::size_t> perm = shuffle_rng.permutation(rows.size());
        std::vector<std::vector<data::Ddi>> batches;
        for (std::size_t start = 0; start < rows.size(); start += cfg_.hp.bs) {
            const std::size_t count = std::min(cfg_.hp.bs, rows.size() - start);
            std::vector<data::Ddi> batch;
            batch.reserve(count);
            for (std::size_t i = 0; i < count; ++i) batch.push_back(rows[perm[start + i]]);
            batches.push_back(std::move(batch));
        }
        if (batches.size() >= 2 && batches.back().size() == 1) {
            batches[batches.size() - 2].push_back(batches.back()[0]);
            batches.pop_back();
        }
        return batches;
    }

    Tensor decode_pairs(Tape& tape, const Tensor& h_embed, std::span<const data::Ddi> pairs,
                        rng::Engine& rng) {
        model::PairViews views =
            model_.encode_pair_views(tape, ctx_.gi, h_embed, pairs, Mode::eval, rng);
        Tensor fused = model_.fuse_pair(tape, views);
        return model_.decode(tape, fused, Mode::eval, rng);
    }

    BatchLossRow train_batch(std::size_t epoch, std::size_t batch_index,
                             const std::vector<data::Ddi>& batch) {
        namespace ops = ad::ops;
        const std::size_t k = batch.size();
        const std::size_t r = ctx_.dataset->n_types;
        Tape tape;
        rng::Engine batch_rng = rng::Engine::stream(cfg_.hp.seed, 301, epoch, batch_index);
        rng::Engine mix_rng = rng::Engine::stream(cfg_.hp.seed, 401, epoch, batch_index);

        Tensor h_embed = model_.drug_embeddings(tape, ctx_.gi);
        model::PairViews views =
            model_.encode_pair_views(tape, ctx_.gi, h_embed, batch, Mode::train, batch_rng);

        Tensor ss1 = Tensor::scalar(0.0), ss2 = Tensor::scalar(0.0);
        if (cfg_.variant != model::Variant::drop_contrastive) {
            std::vector<std::vector<int>> c;
            c.reserve(k);
            for (const data::Ddi& p : batch)
                c.push_back(ctx_.chars.pair_characteristics(p.a, p.b));
            const model::PairSelection sel =
                model::select_contrastive_pairs(c, cfg_.hp.t_pos, cfg_.hp.t_neg);
            auto [l1, l2] = model_.contrastive_losses(tape, views, sel);
            ss1 = l1;
            ss2 = l2;
        }

        Tensor fused = model_.fuse_pair(tape, views);
        Tensor onehot = Tensor::zeros({k, r});
        for (std::size_t i = 0; i < k; ++i) onehot.at(i, batch[i].type) = 1.0;

        Tensor dec_in = fused;
        Tensor dec_labels = onehot;
        if (cfg_.hp.mixup_alpha > 0.0) {
            MixupResult mixed = mixup(tape, fused, onehot, cfg_.hp.mixup_alpha, mix_rng);
            dec_in = mixed.features;
            dec_labels = mixed.labels;
        }

        Tensor probs = model_.decode(tape, dec_in, Mode::train, batch_rng);
        Tensor ce = model::Model::classification_loss(tape, probs, dec_labels);
        Tensor total = model::Model::total_loss(tape, ce, ss1, ss2, cfg_.hp.lambda);

        BatchLossRow row{epoch, batch_index, total.values()[0], ce.values()[0], ss1.values()[0],
                         ss2.values()[0]};
        if (!std::isfinite(row.total))
            throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch_index) + "; last good batch was " +
                                 last_good_batch());

        optimizer_.zero_grad();
        tape.backward(total);
        optimizer_.step();
        return row;
    }

    std::string last_good_batch() const {
        if (history_.empty()) return "(none)";
        const BatchLossRow& r = history_.back();
        return "epoch " + std::to_string(r.epoch) + " batch " + std::to_string(r.batch);
    }

    FoldContext& ctx_;
    TrainConfig cfg_;
    rng::Engine init_rng_;
    model::Model model_;
    optim::RAdam optimizer_;
    std::vector<BatchLossRow> history_;
};

} // namespace ragseco::train
