#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <stdexcept>
#include <vector>

#include "curio/rng.hpp"
#include "curio/spaces.hpp"

namespace curio {

struct ClassifierConfig {
    int hidden1 = 16;
    int hidden2 = 8;
    double learning_rate = 0.01;
    int updates_per_call = 50;
    int batch_size = 16;
    std::size_t buffer_capacity = 500;  // per class
};

// Binary predictor over object physical properties (position excluded)
// deciding whether an affordance applies to an object. Three fully
// connected layers trained by SGD on balanced replay batches.
class VisualClassifier {
public:
    VisualClassifier() = default;
    VisualClassifier(int input_dim, Rng init_rng, ClassifierConfig cfg = {})
        : cfg_(cfg), dim_in_(input_dim) {
        init_layer(w1_, b1_, dim_in_, cfg_.hidden1, init_rng);
        init_layer(w2_, b2_, cfg_.hidden1, cfg_.hidden2, init_rng);
        init_layer(w3_, b3_, cfg_.hidden2, 1, init_rng);
    }

    int input_dim() const { return dim_in_; }
    std::size_t positives() const { return pos_.size(); }
    std::size_t negatives() const { return neg_.size(); }
    long max_batch_imbalance() const { return max_imbalance_; }

    // Appends a labeled example and runs balanced replay updates.
    void train(const Vec& features, bool label, Rng& rng) {
        if (static_cast<int>(features.size()) != dim_in_)
            throw std::invalid_argument("classifier: feature dim mismatch");
        auto& buf = label ? pos_ : neg_;
        buf.push_back(features);
        if (buf.size() > cfg_.buffer_capacity) buf.pop_front();
        for (int u = 0; u < cfg_.updates_per_call; ++u) replay_update(rng);
    }

    double probability(const Vec& features) const {
        if (static_cast<int>(features.size()) != dim_in_)
            throw std::invalid_argument("classifier: feature dim mismatch");
        Vec h1, h2;
        return forward(features, h1, h2);
    }

    bool classify(const Vec& features) const { return probability(features) >= 0.5; }

private:
    static void init_layer(Vec& w, Vec& b, int fan_in, int fan_out, Rng& rng) {
        const double s = std::sqrt(6.0 / (fan_in + fan_out));
        w.resize(static_cast<std::size_t>(fan_in * fan_out));
        for (auto& x : w) x = rng.uniform(-s, s);
        b.assign(static_cast<std::size_t>(fan_out), 0.0);
    }

    double forward(const Vec& x, Vec& h1, Vec& h2) const {
        h1.assign(static_cast<std::size_t>(cfg_.hidden1), 0.0);
        for (int j = 0; j < cfg_.hidden1; ++j) {
            double a = b1_[static_cast<std::size_t>(j)];
            for (int i = 0; i < dim_in_; ++i)
                a += w1_[static_cast<std::size_t>(j * dim_in_ + i)] * x[static_cast<std::size_t>(i)];
            h1[static_cast<std::size_t>(j)] = std::tanh(a);
        }
        h2.assign(static_cast<std::size_t>(cfg_.hidden2), 0.0);
        for (int j = 0; j < cfg_.hidden2; ++j) {
            double a = b2_[static_cast<std::size_t>(j)];
            for (int i = 0; i < cfg_.hidden1; ++i)
                a += w2_[static_cast<std::size_t>(j * cfg_.hidden1 + i)] * h1[static_cast<std::size_t>(i)];
            h2[static_cast<std::size_t>(j)] = std::tanh(a);
        }
        double a = b3_[0];
        for (int i = 0; i < cfg_.hidden2; ++i)
            a += w3_[static_cast<std::size_t>(i)] * h2[static_cast<std::size_t>(i)];
        return 1.0 / (1.0 + std::exp(-a));
    }

    // One SGD step on a balanced batch drawn from the replay buffers. The
    // per-batch class difference never exceeds one example.
    void replay_update(Rng& rng) {
        if (pos_.empty() && neg_.empty()) return;
        std::vector<std::pair<const Vec*, double>> batch;
        const std::size_t per_class = static_cast<std::size_t>(cfg_.batch_size) / 2;
        const std::size_t n_pos = std::min(per_class, pos_.size());
        const std::size_t n_neg = std::min(per_class, neg_.size());
        std::size_t np = n_pos, nn = n_neg;
        if (np == 0) nn = std::min<std::size_t>(nn, 1);
        if (nn == 0) np = std::min<std::size_t>(np, 1);
        const std::size_t common = std::min(np, nn);
        if (common > 0) np = nn = common;  // strict balance when both exist
        for (std::size_t i = 0; i < np; ++i)
            batch.emplace_back(&pos_[static_cast<std::size_t>(rng.index(static_cast<int>(pos_.size())))], 1.0);
        for (std::size_t i = 0; i < nn; ++i)
            batch.emplace_back(&neg_[static_cast<std::size_t>(rng.index(static_cast<int>(neg_.size())))], 0.0);
        if (batch.empty()) return;
        max_imbalance_ = std::max<long>(max_imbalance_,
            std::labs(static_cast<long>(np) - static_cast<long>(nn)));

        const double lr = cfg_.learning_rate / static_cast<double>(batch.size());
        for (const auto& [xp, label] : batch) {
            const Vec& x = *xp;
            Vec h1, h2;
            const double p = forward(x, h1, h2);
            const double dout = p - label;  // d(BCE)/d(logit)
            // layer 3
            Vec dh2(static_cast<std::size_t>(cfg_.hidden2), 0.0);
            for (int i = 0; i < cfg_.hidden2; ++i) {
                dh2[static_cast<std::size_t>(i)] = dout * w3_[static_cast<std::size_t>(i)];
                w3_[static_cast<std::size_t>(i)] -= lr * dout * h2[static_cast<std::size_t>(i)];
            }
            b3_[0] -= lr * dout;
            // layer 2
            Vec dh1(static_cast<std::size_t>(cfg_.hidden1), 0.0);
            for (int j = 0; j < cfg_.hidden2; ++j) {
                const double hj = h2[static_cast<std::size_t>(j)];
                const double g = dh2[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
                for (int i = 0; i < cfg_.hidden1; ++i) {
                    dh1[static_cast<std::size_t>(i)] += g * w2_[static_cast<std::size_t>(j * cfg_.hidden1 + i)];
                    w2_[static_cast<std::size_t>(j * cfg_.hidden1 + i)] -= lr * g * h1[static_cast<std::size_t>(i)];
                }
                b2_[static_cast<std::size_t>(j)] -= lr * g;
            }
            // layer 1
            for (int j = 0; j < cfg_.hidden1; ++j) {
                const double hj = h1[static_cast<std::size_t>(j)];
                const double g = dh1[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
                for (int i = 0; i < dim_in_; ++i)
                    w1_[static_cast<std::size_t>(j * dim_in_ + i)] -= lr * g * x[static_cast<std::size_t>(i)];
                b1_[static_cast<std::size_t>(j)] -= lr * g;
            }
        }
    }

    ClassifierConfig cfg_;
    int dim_in_ = 0;
    Vec w1_, b1_, w2_, b2_, w3_, b3_;
    std::deque<Vec> pos_, neg_;
    long max_imbalance_ = 0;
};

}  // namespace curio
