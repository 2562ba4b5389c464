#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "curio/spaces.hpp"
#include "curio/world.hpp"

namespace curio {

// One executed primitive action: the command, the per-space relative outcome
// (after minus before) and the absolute context (before).
struct EpisodeRecord {
    SpaceId action_space = kNoSpace;
    Vec action;
    Observation outcomes;  // indexed by SpaceId, deltas
    Observation context;   // indexed by SpaceId, absolutes
    long episode_id = 0;
    long iteration_index = 0;
};

// Append-only store of every record the robot has lived through. Models keep
// index lists into it; queries scan those lists, so results are independent
// of insertion batching.
class Dataset {
public:
    explicit Dataset(const SpaceRegistry& reg) : reg_(&reg) {}

    std::size_t size() const { return records_.size(); }
    const EpisodeRecord& operator[](std::size_t i) const { return records_[i]; }

    void append(EpisodeRecord rec) {
        validate(rec);
        records_.push_back(std::move(rec));
    }

    // Nearest record by joint (action, context) distance; -1 when empty.
    // Context distance sums over all observable spaces.
    long nearest(const Vec& action, const Observation& context) const {
        long best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const auto& r = records_[i];
            double d = 0.0;
            for (std::size_t k = 0; k < action.size() && k < r.action.size(); ++k) {
                const double e = action[k] - r.action[k];
                d += e * e;
            }
            for (const auto& s : reg_->all()) {
                if (s.is_primitive()) continue;
                const auto si = static_cast<std::size_t>(s.id);
                if (si >= context.size() || context[si].empty()) continue;
                for (std::size_t k = 0; k < context[si].size(); ++k) {
                    const double e = context[si][k] - r.context[si][k];
                    d += e * e;
                }
            }
            if (d < best_d) {
                best_d = d;
                best = static_cast<long>(i);
            }
        }
        return best;
    }

private:
    void validate(const EpisodeRecord& rec) const {
        if (rec.action_space == kNoSpace ||
            !reg_->at(rec.action_space).is_primitive())
            throw std::invalid_argument("record: action space must be primitive");
        if (rec.action.size() !=
            static_cast<std::size_t>(reg_->at(rec.action_space).dim))
            throw std::invalid_argument("record: action dim mismatch");
        if (rec.outcomes.size() != reg_->size() || rec.context.size() != reg_->size())
            throw std::invalid_argument("record: observation tables must cover registry");
        for (const auto& s : reg_->all()) {
            if (s.is_primitive()) continue;
            const auto si = static_cast<std::size_t>(s.id);
            const auto dim = static_cast<std::size_t>(s.dim);
            if (rec.outcomes[si].size() != dim || rec.context[si].size() != dim)
                throw std::invalid_argument("record: missing space " + s.name);
            for (double v : rec.outcomes[si])
                if (!std::isfinite(v))
                    throw std::invalid_argument("record: non-finite outcome");
        }
    }

    const SpaceRegistry* reg_;
    std::vector<EpisodeRecord> records_;
};

}  // namespace curio
