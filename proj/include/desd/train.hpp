#pragma once

// DE-SD training: mini-batches alternate round-robin between the talking and
// expression streams; surplus batches of the longer stream run at the end.
// Talk batches train E_T and the decoder with duplicated talk latents, expr
// batches train E_E and the decoder with duplicated expr latents. The
// zero-cat training mode concatenates a zero half instead of duplicating
// (the explicit latent-arrangement ablation).

#include <desd/model.hpp>
#include <desd/synthetic.hpp>
#include <desd/weights.hpp>

namespace desd {

struct TrainConfig {
    double lr = 1e-3;
    int batch = 32;
    int epochs = 200;
    uint64_t seed = 1;
    bool weighted_loss = true;
    bool zero_cat_training = false;
    int log_every = 0; // epochs between progress lines; 0 = quiet
};

struct EpochLoss {
    double talk = 0;
    double expr = 0;
};

namespace detail {

// flat frame views of a corpus stream
inline std::vector<const VertexField*> collect_frames(const std::vector<DisplacementSequence>& seqs) {
    std::vector<const VertexField*> out;
    for (const auto& s : seqs)
        for (const auto& f : s.frames) out.push_back(&f);
    return out;
}

inline nn::Var batch_tensor(const std::vector<const VertexField*>& frames,
                            const std::vector<int>& order, size_t begin, size_t end) {
    const int n = frames[order[begin]]->vertex_count;
    std::vector<double> data;
    data.reserve((end - begin) * size_t(n) * 3);
    for (size_t i = begin; i < end; ++i) {
        const auto& v = frames[order[i]]->values;
        data.insert(data.end(), v.begin(), v.end());
    }
    return nn::Var::leaf(int(end - begin) * n, 3, std::move(data));
}

inline void shuffle(std::vector<int>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(int(i))]);
}

}  // namespace detail

class DesdTrainer {
public:
    DesdTrainer(DesdModel& model, const VertexWeights& weights, TrainConfig cfg)
        : model_(model), cfg_(cfg) {
        weights_ = cfg.weighted_loss ? weights : VertexWeights::uniform(int(weights.w.size()));
        rng_ = std::make_unique<Rng>(cfg.seed);
    }

    // one alternating pass over both streams; returns epoch-mean losses
    EpochLoss train_epoch(const std::vector<const VertexField*>& talk,
                          const std::vector<const VertexField*>& expr) {
        if (talk.empty() || expr.empty())
            throw ContractError("train: both streams must be non-empty");
        std::vector<int> talk_order(talk.size()), expr_order(expr.size());
        for (size_t i = 0; i < talk.size(); ++i) talk_order[i] = int(i);
        for (size_t i = 0; i < expr.size(); ++i) expr_order[i] = int(i);
        detail::shuffle(talk_order, *rng_);
        detail::shuffle(expr_order, *rng_);

        const size_t nb_talk = (talk.size() + cfg_.batch - 1) / cfg_.batch;
        const size_t nb_expr = (expr.size() + cfg_.batch - 1) / cfg_.batch;

        EpochLoss sums;
        size_t bt = 0, be = 0;
        auto run_talk = [&] {
            size_t lo = bt * cfg_.batch, hi = std::min(talk.size(), lo + cfg_.batch);
            sums.talk += train_batch(Which::Talk, detail::batch_tensor(talk, talk_order, lo, hi));
            ++bt;
        };
        auto run_expr = [&] {
            size_t lo = be * cfg_.batch, hi = std::min(expr.size(), lo + cfg_.batch);
            sums.expr += train_batch(Which::Expr, detail::batch_tensor(expr, expr_order, lo, hi));
            ++be;
        };
        while (bt < nb_talk || be < nb_expr) {
            if (bt < nb_talk) run_talk();
            if (be < nb_expr) run_expr();
        }
        return {sums.talk / double(nb_talk), sums.expr / double(nb_expr)};
    }

    std::vector<EpochLoss> train(const std::vector<DisplacementSequence>& talk_set,
                                 const std::vector<DisplacementSequence>& expr_set) {
        auto talk = detail::collect_frames(talk_set);
        auto expr = detail::collect_frames(expr_set);
        std::vector<EpochLoss> history;
        for (int ep = 0; ep < cfg_.epochs; ++ep) {
            history.push_back(train_epoch(talk, expr));
            if (cfg_.log_every > 0 && (ep % cfg_.log_every == 0 || ep + 1 == cfg_.epochs))
                DESD_INFO("epoch %d/%d: talk %.5f expr %.5f", ep + 1, cfg_.epochs,
                          history.back().talk, history.back().expr);
        }
        return history;
    }

    // loss of one forward pass without updating anything
    double eval_loss(Which which, const std::vector<const VertexField*>& frames) {
        std::vector<int> order(frames.size());
        for (size_t i = 0; i < frames.size(); ++i) order[i] = int(i);
        nn::Var input = detail::batch_tensor(frames, order, 0, frames.size());
        return forward_loss(which, input).item();
    }

private:
    nn::Var forward_loss(Which which, const nn::Var& input) {
        nn::Var z = model_.encoder_forward(which, input);
        nn::Var mixed;
        if (!cfg_.zero_cat_training) {
            mixed = nn::concat_cols(z, z);
        } else {
            nn::Var zero = nn::Var::zeros(z.rows(), z.cols());
            mixed = which == Which::Talk ? nn::concat_cols(z, zero) : nn::concat_cols(zero, z);
        }
        nn::Var pred = model_.decoder_forward(mixed);
        return nn::weighted_l2_loss(pred, input, weights_);
    }

    double train_batch(Which which, const nn::Var& input) {
        model_.encoder_params(Which::Talk).zero_grads();
        model_.encoder_params(Which::Expr).zero_grads();
        model_.decoder_params().zero_grads();
        nn::Var loss = forward_loss(which, input);
        loss.backward();
        nn::adam_step(model_.encoder_params(which), cfg_.lr);
        nn::adam_step(model_.decoder_params(), cfg_.lr);
        return loss.item();
    }

    DesdModel& model_;
    TrainConfig cfg_;
    VertexWeights weights_;
    std::unique_ptr<Rng> rng_;
};

}  // namespace desd
