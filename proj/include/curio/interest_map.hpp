#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "curio/rng.hpp"
#include "curio/spaces.hpp"

namespace curio {

struct InterestConfig {
    int competence_window = 10;   // k: entries feeding the progress derivative
    int progress_window = 5;      // n: progress values averaged into interest
    int split_threshold = 30;     // leaf history size that triggers a split
    double epsilon = 0.2;         // uniform mixing for sampling choices
    int max_depth = 12;
};

// Recursive axis-aligned partition of an affordance's outcome space. Each
// leaf carries a bounded history of (time, goal, competence) attempts; the
// absolute recent slope of competence defines the region's interest.
class InterestMap {
public:
    struct Entry {
        long time = 0;
        Vec goal;
        double competence = 0.0;
    };

    struct Region {
        Vec lo, hi;
        std::vector<Entry> history;
        std::unique_ptr<Region> left, right;
        int split_dim = -1;
        double split_value = 0.0;
        int depth = 0;

        bool leaf() const { return !left; }
        bool contains(const Vec& g) const {
            for (std::size_t d = 0; d < lo.size(); ++d)
                if (g[d] < lo[d] || g[d] > hi[d]) return false;
            return true;
        }
        double volume() const {
            double v = 1.0;
            for (std::size_t d = 0; d < lo.size(); ++d) v *= hi[d] - lo[d];
            return v;
        }
    };

    InterestMap() = default;
    InterestMap(Vec lo, Vec hi, InterestConfig cfg = {}) : cfg_(cfg) {
        root_ = std::make_unique<Region>();
        root_->lo = std::move(lo);
        root_->hi = std::move(hi);
        normalizer_ = 0.0;
        for (std::size_t d = 0; d < root_->lo.size(); ++d) {
            const double w = root_->hi[d] - root_->lo[d];
            normalizer_ += w * w;
        }
        normalizer_ = std::max(1e-12, std::sqrt(normalizer_));
    }

    const InterestConfig& config() const { return cfg_; }
    const Region& root() const { return *root_; }
    double normalizer() const { return normalizer_; }
    long attempts() const { return attempts_; }
    long clip_warnings() const { return clip_warnings_; }

    // Records one goal attempt. Goals outside the root box are clipped.
    void log_attempt(Vec goal, const Vec& reached, long time) {
        double err = 0.0;
        for (std::size_t d = 0; d < goal.size(); ++d) {
            const double e = goal[d] - reached[d];
            err += e * e;
        }
        const double competence = 1.0 - std::min(1.0, std::sqrt(err) / normalizer_);
        bool clipped = false;
        for (std::size_t d = 0; d < goal.size(); ++d) {
            const double c = std::clamp(goal[d], root_->lo[d], root_->hi[d]);
            if (c != goal[d]) clipped = true;
            goal[d] = c;
        }
        if (clipped) ++clip_warnings_;
        Region* leaf = descend(root_.get(), goal);
        leaf->history.push_back(Entry{time, std::move(goal), competence});
        ++attempts_;
        if (static_cast<int>(leaf->history.size()) > cfg_.split_threshold) {
            if (!split(*leaf)) {
                leaf->history.erase(leaf->history.begin());  // bounded FIFO
            }
        }
    }

    // Mean absolute recent learning progress of a leaf; 0 below 2 entries.
    double interest(const Region& region) const {
        const auto& h = region.history;
        if (h.size() < 2) return 0.0;
        const std::size_t k = std::min<std::size_t>(h.size(),
            static_cast<std::size_t>(cfg_.competence_window));
        std::vector<double> progress;
        progress.reserve(k - 1);
        for (std::size_t i = h.size() - k + 1; i < h.size(); ++i)
            progress.push_back(h[i].competence - h[i - 1].competence);
        const std::size_t n = std::min<std::size_t>(progress.size(),
            static_cast<std::size_t>(cfg_.progress_window));
        double sum = 0.0;
        for (std::size_t i = progress.size() - n; i < progress.size(); ++i)
            sum += std::fabs(progress[i]);
        return sum / static_cast<double>(n);
    }

    std::vector<const Region*> leaves() const {
        std::vector<const Region*> out;
        collect(root_.get(), out);
        return out;
    }

    double max_leaf_interest() const {
        double best = 0.0;
        for (const Region* r : leaves()) best = std::max(best, interest(*r));
        return best;
    }

    // Leaf chosen with probability proportional to interest, mixed with an
    // epsilon of uniform choice; the goal is uniform within the leaf box.
    Vec sample_goal(Rng& rng) const {
        const auto ls = leaves();
        std::vector<double> w(ls.size());
        double total = 0.0;
        for (std::size_t i = 0; i < ls.size(); ++i) {
            w[i] = interest(*ls[i]);
            total += w[i];
        }
        const double u = rng.unit();
        std::size_t pick = ls.size() - 1;
        if (total <= 0.0) {
            pick = static_cast<std::size_t>(rng.index(static_cast<int>(ls.size())));
        } else {
            double acc = 0.0;
            const double eps = cfg_.epsilon;
            for (std::size_t i = 0; i < ls.size(); ++i) {
                acc += (1.0 - eps) * w[i] / total + eps / static_cast<double>(ls.size());
                if (u <= acc) {
                    pick = i;
                    break;
                }
            }
        }
        const Region* r = ls[pick];
        Vec g(r->lo.size());
        for (std::size_t d = 0; d < g.size(); ++d)
            g[d] = rng.uniform(r->lo[d], r->hi[d]);
        return g;
    }

private:
    Region* descend(Region* r, const Vec& g) {
        while (!r->leaf())
            r = g[static_cast<std::size_t>(r->split_dim)] <= r->split_value
                ? r->left.get() : r->right.get();
        return r;
    }

    static void collect(const Region* r, std::vector<const Region*>& out) {
        if (r->leaf()) {
            out.push_back(r);
            return;
        }
        collect(r->left.get(), out);
        collect(r->right.get(), out);
    }

    // Median cut along the dimension of maximal goal variance. Children tile
    // the parent exactly and inherit its entries. Returns false when the cut
    // would be degenerate or the depth budget is spent.
    bool split(Region& r) {
        if (r.depth >= cfg_.max_depth) return false;
        const std::size_t dims = r.lo.size();
        int dim = -1;
        double best_var = -1.0;
        for (std::size_t d = 0; d < dims; ++d) {
            double mean = 0.0;
            for (const auto& e : r.history) mean += e.goal[d];
            mean /= static_cast<double>(r.history.size());
            double var = 0.0;
            for (const auto& e : r.history) {
                const double x = e.goal[d] - mean;
                var += x * x;
            }
            if (var > best_var) {
                best_var = var;
                dim = static_cast<int>(d);
            }
        }
        if (dim < 0) return false;
        std::vector<double> vals;
        vals.reserve(r.history.size());
        for (const auto& e : r.history) vals.push_back(e.goal[static_cast<std::size_t>(dim)]);
        std::nth_element(vals.begin(), vals.begin() + static_cast<long>(vals.size() / 2), vals.end());
        double m = vals[vals.size() / 2];
        const double lo = r.lo[static_cast<std::size_t>(dim)];
        const double hi = r.hi[static_cast<std::size_t>(dim)];
        if (!(m > lo && m < hi)) m = 0.5 * (lo + hi);
        if (!(m > lo && m < hi)) return false;
        r.split_dim = dim;
        r.split_value = m;
        r.left = std::make_unique<Region>();
        r.right = std::make_unique<Region>();
        for (Region* c : {r.left.get(), r.right.get()}) {
            c->lo = r.lo;
            c->hi = r.hi;
            c->depth = r.depth + 1;
        }
        r.left->hi[static_cast<std::size_t>(dim)] = m;
        r.right->lo[static_cast<std::size_t>(dim)] = m;
        for (auto& e : r.history) {
            Region* dst = e.goal[static_cast<std::size_t>(dim)] <= m ? r.left.get() : r.right.get();
            dst->history.push_back(std::move(e));
        }
        r.history.clear();
        return true;
    }

    InterestConfig cfg_;
    std::unique_ptr<Region> root_;
    double normalizer_ = 1.0;
    long attempts_ = 0;
    long clip_warnings_ = 0;
};

}  // namespace curio
