#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "curio/dataset.hpp"
#include "curio/rng.hpp"
#include "curio/spaces.hpp"

namespace curio {

struct ModelConfig {
    int k_forward = 8;
    int k_inverse = 8;
    int refine_iterations = 20;
    double refine_scale = 0.5;        // initial perturbation, in normalized units
    double confidence_scale = 0.25;   // mean neighbor distance mapping
    double informative_eps = 0.03;    // fraction of the step normalizer
    double input_weight = 2.0;        // input block weight vs each context block
    std::size_t loo_threshold = 25;   // leave-one-out below, 20% slice above
    std::size_t max_samples = 2500;   // scan window (most recent kept)
};

// How a context feature is bound when a sample is extracted from a record.
// Owner-relative bindings let one model pool data across objects. Circular
// roles (range scans) are compared under their best cyclic shift and the
// estimated rotation is transferred onto 2-d outcomes.
struct ContextRole {
    enum class Binding { OutputOwner, InputOwner, Fixed, PairDifference };
    Binding binding = Binding::OutputOwner;
    std::string property;       // resolved per owner (or both, for differences)
    SpaceId fixed_space = kNoSpace;
    bool circular = false;
    int dim = 0;

    bool operator==(const ContextRole& o) const {
        return binding == o.binding && property == o.property &&
               fixed_space == o.fixed_space;
    }
};

struct SampleRef {
    long record = -1;
    int out_owner = -1;
    int in_owner = -1;
};

struct ForwardPrediction {
    Vec outcome;
    double confidence = 0.0;
};

struct InversePrediction {
    Vec input;
    Vec predicted;
    double confidence = 0.0;
    // Context of the best supporting sample; planners use it to decide
    // whether the current situation needs repair before the input can work.
    Vec support_context;
    bool found = false;
};

// Locally weighted k-nearest-neighbor forward/inverse model over one input
// space, one outcome space and a set of context roles. Samples are extracted
// from dataset records through owner bindings and cached as flat rows.
class LocalModel {
public:
    LocalModel() = default;
    LocalModel(const SpaceRegistry& reg, SpaceId input_space, SpaceId output_space,
               std::vector<ContextRole> context, ModelConfig cfg = {})
        : cfg_(cfg), input_space_(input_space), output_space_(output_space),
          context_(std::move(context)) {
        const SpaceRef& in = reg.at(input_space);
        const SpaceRef& out = reg.at(output_space);
        dim_in_ = in.dim;
        dim_out_ = out.dim;
        in_sigma_ = half_range(in, !in.is_primitive());
        in_lo_ = in.is_primitive() ? in.lo : in.step_lo;
        in_hi_ = in.is_primitive() ? in.hi : in.step_hi;
        out_sigma_ = half_range(out, true);
        out_normalizer_ = 0.0;
        for (double s : out_sigma_) out_normalizer_ += (2.0 * s) * (2.0 * s);
        out_normalizer_ = std::sqrt(out_normalizer_);
        dim_ctx_ = 0;
        for (auto& role : context_) {
            const SpaceRef* s = role.binding == ContextRole::Binding::Fixed
                ? &reg.at(role.fixed_space)
                : reg.find_role(role.property, out.owner >= 0 ? out.owner : 0);
            if (!s) throw std::invalid_argument("context role has no space: " + role.property);
            role.dim = s->dim;
            if (role.property == "lidar" && dim_out_ == 2) role.circular = true;
            for (int d = 0; d < s->dim; ++d) ctx_sigma_.push_back(s->context_sigma);
            dim_ctx_ += s->dim;
        }
    }

    SpaceId input_space() const { return input_space_; }
    SpaceId output_space() const { return output_space_; }
    const std::vector<ContextRole>& context_roles() const { return context_; }
    std::size_t sample_count() const { return refs_.size(); }
    const std::vector<SampleRef>& refs() const { return refs_; }
    int input_dim() const { return dim_in_; }
    int output_dim() const { return dim_out_; }
    double outcome_normalizer() const { return out_normalizer_; }

    bool has_context(const ContextRole& role) const {
        return std::find(context_.begin(), context_.end(), role) != context_.end();
    }

    // Extracts and caches one training row per ref. Refs whose spaces cannot
    // be resolved for the given owners are skipped.
    void add_samples(const Dataset& data, const SpaceRegistry& reg,
                     const std::vector<SampleRef>& refs) {
        for (const auto& ref : refs) {
            Vec x, c, y;
            if (!extract(data, reg, ref, x, c, y)) continue;
            refs_.push_back(ref);
            xs_.insert(xs_.end(), x.begin(), x.end());
            cs_.insert(cs_.end(), c.begin(), c.end());
            ys_.insert(ys_.end(), y.begin(), y.end());
        }
        if (refs_.size() > cfg_.max_samples) {
            const std::size_t drop = refs_.size() - cfg_.max_samples;
            refs_.erase(refs_.begin(), refs_.begin() + static_cast<long>(drop));
            xs_.erase(xs_.begin(), xs_.begin() + static_cast<long>(drop * static_cast<std::size_t>(dim_in_)));
            cs_.erase(cs_.begin(), cs_.begin() + static_cast<long>(drop * static_cast<std::size_t>(dim_ctx_)));
            ys_.erase(ys_.begin(), ys_.begin() + static_cast<long>(drop * static_cast<std::size_t>(dim_out_)));
        }
        dirty_ = true;
    }

    // Builds the flat (input, context, outcome) row for a record under this
    // model's bindings. Returns false when a required space is absent.
    bool extract(const Dataset& data, const SpaceRegistry& reg, const SampleRef& ref,
                 Vec& x, Vec& c, Vec& y) const {
        const EpisodeRecord& rec = data[static_cast<std::size_t>(ref.record)];
        const SpaceRef& in = reg.at(input_space_);
        if (in.is_primitive()) {
            if (rec.action_space != input_space_) return false;
            x = rec.action;
        } else {
            const SpaceRef* s = reg.find_role(in.property, ref.in_owner);
            if (!s) return false;
            x = rec.outcomes[static_cast<std::size_t>(s->id)];
        }
        const SpaceRef& out = reg.at(output_space_);
        const SpaceRef* os = reg.find_role(out.property, ref.out_owner);
        if (!os) return false;
        y = rec.outcomes[static_cast<std::size_t>(os->id)];
        c.clear();
        c.reserve(static_cast<std::size_t>(dim_ctx_));
        for (const auto& role : context_) {
            if (!append_context(reg, rec.context, role, ref, c)) return false;
        }
        return true;
    }

    // Builds the flat context vector for a live observation under owners
    // (out_owner, in_owner); used at query time.
    bool live_context(const SpaceRegistry& reg, const Observation& obs,
                      int out_owner, int in_owner, Vec& c) const {
        c.clear();
        c.reserve(static_cast<std::size_t>(dim_ctx_));
        SampleRef ref;
        ref.out_owner = out_owner;
        ref.in_owner = in_owner;
        for (const auto& role : context_) {
            if (!append_context(reg, obs, role, ref, c)) return false;
        }
        return true;
    }

    // Per-sample context distances and rotation estimates for one query
    // context; the expensive blocks (circular scan matching) are computed
    // once and shared by every forward evaluation against that context.
    struct ContextView {
        std::vector<double> ctx_d;     // summed context blocks per sample
        std::vector<double> rotation;  // circular rotation estimate per sample
    };

    ContextView make_context_view(const Vec& context) const {
        ContextView v;
        v.ctx_d.assign(refs_.size(), 0.0);
        v.rotation.assign(refs_.size(), 0.0);
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            const std::size_t coff = i * static_cast<std::size_t>(dim_ctx_);
            std::size_t pos = 0;
            double total = 0.0;
            for (const auto& role : context_) {
                const auto dim = static_cast<std::size_t>(role.dim);
                double block = 0.0;
                if (role.circular) {
                    double rot = 0.0;
                    circular_match(context.data() + pos, cs_.data() + coff + pos,
                                   role.dim, ctx_sigma_[pos], block, rot);
                    v.rotation[i] = rot;
                } else {
                    for (std::size_t k = 0; k < dim; ++k) {
                        const double e =
                            (context[pos + k] - cs_[coff + pos + k]) / ctx_sigma_[pos + k];
                        block += e * e;
                    }
                }
                total += block / std::max<std::size_t>(1, dim);
                pos += dim;
            }
            v.ctx_d[i] = total;
        }
        return v;
    }

    ForwardPrediction forward(const Vec& input, const Vec& context) const {
        ContextView view = make_context_view(context);
        const std::function<bool(std::size_t)>* none = nullptr;
        return predict(input, view, none);
    }

    ForwardPrediction forward(const Vec& input, const ContextView& view) const {
        const std::function<bool(std::size_t)>* none = nullptr;
        return predict(input, view, none);
    }

    // Nearest-neighbor seeded perturbation descent of the forward model
    // toward the goal. rng drives the perturbations only.
    InversePrediction inverse(const Vec& goal, const Vec& context, Rng& rng) const {
        InversePrediction res;
        if (refs_.empty()) return res;
        ContextView view = make_context_view(context);
        std::vector<std::pair<double, std::size_t>> near =
            nearest_by_outcome(goal, view, static_cast<std::size_t>(cfg_.k_inverse));
        if (near.empty()) return res;
        Vec best_x;
        double best_err = std::numeric_limits<double>::infinity();
        std::size_t best_sample = near.front().second;
        for (const auto& [score, i] : near) {
            Vec x(xs_.begin() + static_cast<long>(i * static_cast<std::size_t>(dim_in_)),
                  xs_.begin() + static_cast<long>((i + 1) * static_cast<std::size_t>(dim_in_)));
            const double err = vec_dist(forward(x, view).outcome, goal);
            if (err < best_err) {
                best_err = err;
                best_x = x;
                best_sample = i;
            }
        }
        double scale = cfg_.refine_scale;
        for (int it = 0; it < cfg_.refine_iterations; ++it) {
            Vec x = best_x;
            for (int d = 0; d < dim_in_; ++d) {
                const auto di = static_cast<std::size_t>(d);
                x[di] += rng.uniform(-1.0, 1.0) * scale * in_sigma_[di];
                x[di] = std::clamp(x[di], in_lo_[di], in_hi_[di]);
            }
            const double err = vec_dist(forward(x, view).outcome, goal);
            if (err < best_err) {
                best_err = err;
                best_x = x;
            } else {
                scale *= 0.5;
            }
        }
        res.found = true;
        res.input = best_x;
        ForwardPrediction fp = forward(best_x, view);
        res.predicted = fp.outcome;
        res.confidence = fp.confidence;
        res.support_context =
            Vec(cs_.begin() + static_cast<long>(best_sample * static_cast<std::size_t>(dim_ctx_)),
                cs_.begin() + static_cast<long>((best_sample + 1) * static_cast<std::size_t>(dim_ctx_)));
        return res;
    }

    // Scalar goal competence, shared with the interest machinery:
    // 1 - clipped normalized error.
    double competence(const Vec& predicted, const Vec& actual, double normalizer) const {
        return 1.0 - std::min(1.0, vec_dist(predicted, actual) / normalizer);
    }

    // Held-out competence over informative samples (non-null outcome or
    // non-null prediction). Leave-one-out on small models, 20% slice above.
    double validation_competence() const {
        if (refs_.empty()) return 1.0;  // vacuous: nothing to contradict
        if (!dirty_ && cached_val_ >= 0.0) return cached_val_;
        double err_sum = 0.0;
        std::size_t n = 0;
        const bool loo = refs_.size() < cfg_.loo_threshold;
        // Bounded evaluation cost: at most the most recent held-out rows.
        std::size_t first = 0;
        if (!loo && refs_.size() > 300) first = refs_.size() - 300;
        const double normalizer = adaptive_normalizer();
        for (std::size_t i = first; i < refs_.size(); ++i) {
            if (!loo && i % 5 != 4) continue;
            const Vec y = row(ys_, i, dim_out_);
            const Vec x = row(xs_, i, dim_in_);
            const Vec c = row(cs_, i, dim_ctx_);
            const std::size_t self = i;
            auto skip = [self, loo](std::size_t j) { return loo ? j == self : j % 5 == 4; };
            ContextView view = make_context_view(c);
            ForwardPrediction fp = predict(x, view, &skip);
            if (!informative(y) && !informative(fp.outcome)) continue;
            err_sum += std::min(1.0, vec_dist(fp.outcome, y) / normalizer);
            ++n;
        }
        cached_val_ = n == 0 ? 1.0 : 1.0 - err_sum / static_cast<double>(n);
        dirty_ = false;
        return cached_val_;
    }

    // Competence of the current model at predicting foreign rows, without
    // absorbing them. Rows with null outcome and null prediction are skipped.
    double competence_on(const std::vector<Vec>& xs, const std::vector<Vec>& cs,
                         const std::vector<Vec>& ys) const {
        double err_sum = 0.0;
        std::size_t n = 0;
        const double normalizer = adaptive_normalizer();
        for (std::size_t i = 0; i < ys.size(); ++i) {
            ForwardPrediction fp = forward(xs[i], cs[i]);
            if (!informative(ys[i]) && !informative(fp.outcome)) continue;
            err_sum += std::min(1.0, vec_dist(fp.outcome, ys[i]) / normalizer);
            ++n;
        }
        return n == 0 ? 1.0 : 1.0 - err_sum / static_cast<double>(n);
    }

    // Chunk size for waypoint planning: the 60th percentile of training
    // outcome magnitudes, i.e. a goal distance the data actually covers.
    double trusted_radius() const {
        if (refs_.empty()) return 0.0;
        std::vector<double> mags;
        mags.reserve(refs_.size());
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            const Vec y = row(ys_, i, dim_out_);
            if (informative(y)) mags.push_back(vec_norm(y));
        }
        if (mags.empty()) return 0.0;
        std::sort(mags.begin(), mags.end());
        return std::max(mags[mags.size() * 6 / 10], 1e-3);
    }

    bool informative(const Vec& y) const {
        return vec_norm(y) > cfg_.informative_eps * out_normalizer_;
    }

    // Error scale for competence: sqrt(2) times the RMS magnitude of the
    // informative training outcomes. A model predicting at chance scores
    // around 0.3, real structure scores near 1.
    double adaptive_normalizer() const {
        double sq = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            double m = 0.0;
            for (int k = 0; k < dim_out_; ++k) {
                const double v = ys_[i * static_cast<std::size_t>(dim_out_) + static_cast<std::size_t>(k)];
                m += v * v;
            }
            if (std::sqrt(m) > cfg_.informative_eps * out_normalizer_) {
                sq += m;
                ++n;
            }
        }
        if (n == 0) return 0.05 * out_normalizer_;
        return std::max(0.05 * out_normalizer_,
                        std::sqrt(2.0) * std::sqrt(sq / static_cast<double>(n)));
    }

    const ModelConfig& model_config() const { return cfg_; }

private:
    static Vec row(const Vec& flat, std::size_t i, int dim) {
        return Vec(flat.begin() + static_cast<long>(i * static_cast<std::size_t>(dim)),
                   flat.begin() + static_cast<long>((i + 1) * static_cast<std::size_t>(dim)));
    }

    static double vec_norm(const Vec& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }
    static double vec_dist(const Vec& a, const Vec& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            s += d * d;
        }
        return std::sqrt(s);
    }

    static Vec half_range(const SpaceRef& s, bool step_scale) {
        Vec out(static_cast<std::size_t>(s.dim));
        for (int d = 0; d < s.dim; ++d) {
            const auto i = static_cast<std::size_t>(d);
            const double lo = step_scale ? s.step_lo[i] : s.lo[i];
            const double hi = step_scale ? s.step_hi[i] : s.hi[i];
            out[i] = std::max(1e-9, 0.5 * (hi - lo));
        }
        return out;
    }

    bool append_context(const SpaceRegistry& reg, const Observation& obs,
                        const ContextRole& role, const SampleRef& ref, Vec& c) const {
        auto fetch = [&](int owner, const std::string& prop) -> const Vec* {
            const SpaceRef* s = reg.find_role(prop, owner);
            if (!s) return nullptr;
            const auto si = static_cast<std::size_t>(s->id);
            if (si >= obs.size() || obs[si].empty()) return nullptr;
            return &obs[si];
        };
        switch (role.binding) {
            case ContextRole::Binding::Fixed: {
                const auto si = static_cast<std::size_t>(role.fixed_space);
                if (si >= obs.size() || obs[si].empty()) return false;
                c.insert(c.end(), obs[si].begin(), obs[si].end());
                return true;
            }
            case ContextRole::Binding::OutputOwner: {
                const Vec* v = fetch(ref.out_owner, role.property);
                if (!v) return false;
                c.insert(c.end(), v->begin(), v->end());
                return true;
            }
            case ContextRole::Binding::InputOwner: {
                const Vec* v = fetch(ref.in_owner, role.property);
                if (!v) return false;
                c.insert(c.end(), v->begin(), v->end());
                return true;
            }
            case ContextRole::Binding::PairDifference: {
                const Vec* a = fetch(ref.out_owner, role.property);
                const Vec* b = fetch(ref.in_owner, role.property);
                if (!a || !b || a->size() != b->size()) return false;
                for (std::size_t k = 0; k < a->size(); ++k)
                    c.push_back((*a)[k] - (*b)[k]);
                return true;
            }
        }
        return false;
    }

    // Best cyclic alignment of a circular block: squared error at the best
    // shift, the sub-ray refined rotation, and an ambiguity penalty. A match
    // whose best minimum is not clearly sharper than the runner-up local
    // minimum is unreliable (room symmetry), so it is pushed away in the
    // neighbor ranking.
    void circular_match(const double* q, const double* n, int dim, double sigma,
                        double& block, double& rotation) const {
        double best = std::numeric_limits<double>::infinity();
        int best_s = 0;
        Vec scores(static_cast<std::size_t>(dim));
        for (int s = 0; s < dim; ++s) {
            double acc = 0.0;
            for (int k = 0; k < dim; ++k) {
                int j = k + s;
                if (j >= dim) j -= dim;
                const double e = (q[k] - n[j]) / sigma;
                acc += e * e;
            }
            scores[static_cast<std::size_t>(s)] = acc;
            if (acc < best) {
                best = acc;
                best_s = s;
            }
        }
        double second = std::numeric_limits<double>::infinity();
        for (int s = 0; s < dim; ++s) {
            if (s == best_s) continue;
            const double l = scores[static_cast<std::size_t>((s + dim - 1) % dim)];
            const double r = scores[static_cast<std::size_t>((s + 1) % dim)];
            if (scores[static_cast<std::size_t>(s)] <= l && scores[static_cast<std::size_t>(s)] <= r)
                second = std::min(second, scores[static_cast<std::size_t>(s)]);
        }
        const double sharp = std::isfinite(second) && second > 1e-12 ? best / second : 0.0;
        block = best + 1.0 * std::max(0.0, sharp - 0.4) * dim;
        const double dm = scores[static_cast<std::size_t>((best_s + dim - 1) % dim)];
        const double dp = scores[static_cast<std::size_t>((best_s + 1) % dim)];
        double frac = 0.0;
        const double denom = dm - 2.0 * best + dp;
        if (denom > 1e-12) frac = 0.5 * (dm - dp) / denom;
        frac = std::clamp(frac, -0.5, 0.5);
        // q[k] = n[k + s]  =>  theta_q = theta_n + s * (2 pi / dim)
        rotation = (static_cast<double>(best_s) + frac) * 2.0 * M_PI / dim;
    }

    struct Neighbor {
        double d = 0.0;
        std::size_t i = 0;
        double rotation = 0.0;
        bool operator<(const Neighbor& o) const { return d < o.d; }
    };

    // Joint normalized distance: weighted input block plus the precomputed
    // context blocks from the view.
    double distance(const Vec& input, const ContextView& view, std::size_t i) const {
        double block = 0.0;
        const std::size_t xoff = i * static_cast<std::size_t>(dim_in_);
        for (int k = 0; k < dim_in_; ++k) {
            const auto ki = static_cast<std::size_t>(k);
            const double e = (input[ki] - xs_[xoff + ki]) / in_sigma_[ki];
            block += e * e;
        }
        return std::sqrt(cfg_.input_weight * block / std::max(1, dim_in_) + view.ctx_d[i]);
    }

    template <typename Skip>
    std::vector<Neighbor> nearest(const Vec& input, const ContextView& view, std::size_t k,
                                  const Skip* skip) const {
        std::vector<Neighbor> heap;
        heap.reserve(k + 1);
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            if (skip && (*skip)(i)) continue;
            const double d = distance(input, view, i);
            if (heap.size() < k) {
                heap.push_back({d, i, view.rotation[i]});
                std::push_heap(heap.begin(), heap.end());
            } else if (d < heap.front().d) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = {d, i, view.rotation[i]};
                std::push_heap(heap.begin(), heap.end());
            }
        }
        std::sort_heap(heap.begin(), heap.end());
        return heap;
    }

    Vec transferred_outcome(std::size_t i, double rotation) const {
        Vec y = row(ys_, i, dim_out_);
        if (rotation != 0.0 && dim_out_ == 2) {
            const double c = std::cos(rotation), s = std::sin(rotation);
            const double x0 = y[0], y0 = y[1];
            y[0] = c * x0 - s * y0;
            y[1] = s * x0 + c * y0;
        }
        return y;
    }

    // Locally weighted linear fit over the neighbor set: captures the local
    // scaling of the outcome with the input, which plain averaging misses
    // when neighbor inputs straddle the query. Falls back to the weighted
    // mean when the neighborhood is too small.
    template <typename Skip>
    ForwardPrediction predict(const Vec& input, const ContextView& view, const Skip* skip) const {
        ForwardPrediction out;
        out.outcome.assign(static_cast<std::size_t>(dim_out_), 0.0);
        if (refs_.empty()) return out;
        std::vector<Neighbor> near =
            nearest(input, view, static_cast<std::size_t>(cfg_.k_forward), skip);
        if (near.empty()) return out;
        if (near.front().d < 1e-9) {  // exact training node
            out.outcome = transferred_outcome(near.front().i, near.front().rotation);
            out.confidence = 1.0;
            return out;
        }
        const double h = std::max(0.5 * near.back().d, 1e-6);
        double dsum = 0.0;
        std::vector<double> w(near.size());
        std::vector<Vec> ys(near.size());
        for (std::size_t i = 0; i < near.size(); ++i) {
            w[i] = std::exp(-(near[i].d * near[i].d) / (h * h));
            ys[i] = transferred_outcome(near[i].i, near[i].rotation);
            dsum += near[i].d;
        }
        out.confidence = std::exp(-(dsum / static_cast<double>(near.size())) / cfg_.confidence_scale);

        const std::size_t p = static_cast<std::size_t>(dim_in_) + 1;  // bias + offsets
        if (near.size() >= p + 1) {
            // Normal equations (Phi^T W Phi + lambda I) beta = Phi^T W Y with
            // features [1, x - x_q]; the bias row is the prediction at x_q.
            std::vector<double> G(p * p, 0.0);
            std::vector<double> B(p * static_cast<std::size_t>(dim_out_), 0.0);
            Vec phi(p);
            for (std::size_t i = 0; i < near.size(); ++i) {
                phi[0] = 1.0;
                const std::size_t xoff = near[i].i * static_cast<std::size_t>(dim_in_);
                for (int k = 0; k < dim_in_; ++k)
                    phi[1 + static_cast<std::size_t>(k)] =
                        (xs_[xoff + static_cast<std::size_t>(k)] - input[static_cast<std::size_t>(k)]) /
                        in_sigma_[static_cast<std::size_t>(k)];
                for (std::size_t a = 0; a < p; ++a) {
                    for (std::size_t b = 0; b < p; ++b) G[a * p + b] += w[i] * phi[a] * phi[b];
                    for (int k = 0; k < dim_out_; ++k)
                        B[a * static_cast<std::size_t>(dim_out_) + static_cast<std::size_t>(k)] +=
                            w[i] * phi[a] * ys[i][static_cast<std::size_t>(k)];
                }
            }
            for (std::size_t a = 0; a < p; ++a) G[a * p + a] += 1e-3;
            std::vector<double> G0 = G, B0 = B;
            if (solve_inplace(G0, B0, p, static_cast<std::size_t>(dim_out_))) {
                // One bisquare reweighting pass: neighbors whose transferred
                // outcomes disagree with the first fit (bad rotation
                // estimates, contact anomalies) lose influence.
                Vec res(near.size(), 0.0);
                double med = 0.0;
                {
                    Vec phi2(p);
                    for (std::size_t i = 0; i < near.size(); ++i) {
                        phi2[0] = 1.0;
                        const std::size_t xoff = near[i].i * static_cast<std::size_t>(dim_in_);
                        for (int k = 0; k < dim_in_; ++k)
                            phi2[1 + static_cast<std::size_t>(k)] =
                                (xs_[xoff + static_cast<std::size_t>(k)] -
                                 input[static_cast<std::size_t>(k)]) /
                                in_sigma_[static_cast<std::size_t>(k)];
                        double r2 = 0.0;
                        for (int k = 0; k < dim_out_; ++k) {
                            double fit = 0.0;
                            for (std::size_t a = 0; a < p; ++a)
                                fit += phi2[a] * B0[a * static_cast<std::size_t>(dim_out_) +
                                                     static_cast<std::size_t>(k)];
                            const double e = ys[i][static_cast<std::size_t>(k)] - fit;
                            r2 += e * e;
                        }
                        res[i] = std::sqrt(r2);
                    }
                    Vec sorted = res;
                    std::sort(sorted.begin(), sorted.end());
                    med = sorted[sorted.size() / 2];
                }
                if (med > 1e-12) {
                    std::fill(G.begin(), G.end(), 0.0);
                    std::fill(B.begin(), B.end(), 0.0);
                    Vec phi2(p);
                    for (std::size_t i = 0; i < near.size(); ++i) {
                        const double u = res[i] / (4.0 * med);
                        const double rw = u >= 1.0 ? 0.0 : (1.0 - u * u) * (1.0 - u * u);
                        const double wi = w[i] * rw;
                        if (wi <= 0.0) continue;
                        phi2[0] = 1.0;
                        const std::size_t xoff = near[i].i * static_cast<std::size_t>(dim_in_);
                        for (int k = 0; k < dim_in_; ++k)
                            phi2[1 + static_cast<std::size_t>(k)] =
                                (xs_[xoff + static_cast<std::size_t>(k)] -
                                 input[static_cast<std::size_t>(k)]) /
                                in_sigma_[static_cast<std::size_t>(k)];
                        for (std::size_t a = 0; a < p; ++a) {
                            for (std::size_t b = 0; b < p; ++b)
                                G[a * p + b] += wi * phi2[a] * phi2[b];
                            for (int k = 0; k < dim_out_; ++k)
                                B[a * static_cast<std::size_t>(dim_out_) +
                                  static_cast<std::size_t>(k)] +=
                                    wi * phi2[a] * ys[i][static_cast<std::size_t>(k)];
                        }
                    }
                    for (std::size_t a = 0; a < p; ++a) G[a * p + a] += 1e-3;
                    if (solve_inplace(G, B, p, static_cast<std::size_t>(dim_out_))) B0 = B;
                }
                for (int k = 0; k < dim_out_; ++k)
                    out.outcome[static_cast<std::size_t>(k)] = B0[static_cast<std::size_t>(k)];
                return out;
            }
        }
        double wsum = 0.0;
        for (std::size_t i = 0; i < near.size(); ++i) {
            wsum += w[i];
            for (int k = 0; k < dim_out_; ++k)
                out.outcome[static_cast<std::size_t>(k)] += w[i] * ys[i][static_cast<std::size_t>(k)];
        }
        for (auto& v : out.outcome) v /= wsum;
        return out;
    }

    // Gaussian elimination with partial pivoting; B holds `cols` RHS columns.
    static bool solve_inplace(std::vector<double>& A, std::vector<double>& B,
                              std::size_t n, std::size_t cols) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t piv = i;
            for (std::size_t r = i + 1; r < n; ++r)
                if (std::fabs(A[r * n + i]) > std::fabs(A[piv * n + i])) piv = r;
            if (std::fabs(A[piv * n + i]) < 1e-12) return false;
            if (piv != i) {
                for (std::size_t c = 0; c < n; ++c) std::swap(A[i * n + c], A[piv * n + c]);
                for (std::size_t c = 0; c < cols; ++c) std::swap(B[i * cols + c], B[piv * cols + c]);
            }
            const double inv = 1.0 / A[i * n + i];
            for (std::size_t r = 0; r < n; ++r) {
                if (r == i) continue;
                const double f = A[r * n + i] * inv;
                if (f == 0.0) continue;
                for (std::size_t c = i; c < n; ++c) A[r * n + c] -= f * A[i * n + c];
                for (std::size_t c = 0; c < cols; ++c) B[r * cols + c] -= f * B[i * cols + c];
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double inv = 1.0 / A[i * n + i];
            for (std::size_t c = 0; c < cols; ++c) B[i * cols + c] *= inv;
        }
        return true;
    }

    // Ranks samples by (outcome close to goal, context close to now), with
    // circular rotation transfer applied to the sample outcome first.
    std::vector<std::pair<double, std::size_t>> nearest_by_outcome(
        const Vec& goal, const ContextView& view, std::size_t k) const {
        std::vector<std::pair<double, std::size_t>> heap;
        heap.reserve(k + 1);
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            const double ctx_d = view.ctx_d[i];
            const Vec y = transferred_outcome(i, view.rotation[i]);
            double yblock = 0.0;
            for (int kd = 0; kd < dim_out_; ++kd) {
                const auto ki = static_cast<std::size_t>(kd);
                const double e = (goal[ki] - y[ki]) / out_sigma_[ki];
                yblock += e * e;
            }
            const double d = std::sqrt(yblock / std::max(1, dim_out_) + ctx_d);
            if (heap.size() < k) {
                heap.emplace_back(d, i);
                std::push_heap(heap.begin(), heap.end());
            } else if (d < heap.front().first) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = {d, i};
                std::push_heap(heap.begin(), heap.end());
            }
        }
        std::sort_heap(heap.begin(), heap.end());
        return heap;
    }

    ModelConfig cfg_;
    SpaceId input_space_ = kNoSpace;
    SpaceId output_space_ = kNoSpace;
    std::vector<ContextRole> context_;
    int dim_in_ = 0, dim_out_ = 0, dim_ctx_ = 0;
    Vec in_sigma_, out_sigma_, ctx_sigma_, in_lo_, in_hi_;
    double out_normalizer_ = 1.0;

    std::vector<SampleRef> refs_;
    Vec xs_, cs_, ys_;  // flat row-major caches

    mutable bool dirty_ = true;
    mutable double cached_val_ = -1.0;
};

}  // namespace curio
