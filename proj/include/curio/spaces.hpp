#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "curio/rng.hpp"

namespace curio {

using Vec = std::vector<double>;
using SpaceId = int;

inline constexpr SpaceId kNoSpace = -1;
inline constexpr int kRobotEntity = 0;

enum class SpaceKind { PrimitiveAction, Observable };

// A named, typed subspace of the action or observation vector. Observable
// spaces carry the property role they report for one entity of the scene
// (entity 0 is the robot). `relative` marks spaces whose per-step deltas are
// meaningful outcome targets (positions); static property spaces report
// absolute values only.
struct SpaceRef {
    SpaceId id = kNoSpace;
    std::string name;
    int dim = 0;
    SpaceKind kind = SpaceKind::Observable;
    std::string property;   // "position", "radius", ... ; empty for actions
    int owner = -1;         // entity index; -1 for actions / global spaces
    bool relative = false;
    bool context_only = false;  // usable as model context, never as a goal
    Vec lo, hi;             // absolute bounds per dimension
    Vec step_lo, step_hi;   // per-step delta bounds (outcome normalization)
    Vec goal_lo, goal_hi;   // plan-level goal box (interest maps, random goals)
    double context_sigma = 0.0;  // metric scale when used as model context

    bool is_primitive() const { return kind == SpaceKind::PrimitiveAction; }
};

// Two observable spaces are role mates when they report the same property
// with the same shape; a model trained on one generalizes to the other by
// rebinding the owning entity.
inline bool same_role(const SpaceRef& a, const SpaceRef& b) {
    return a.kind == b.kind && a.dim == b.dim && a.property == b.property &&
           a.relative == b.relative;
}

class SpaceRegistry {
public:
    SpaceId register_space(SpaceRef ref) {
        if (ref.dim < 1) throw std::invalid_argument("space dim must be >= 1");
        if (by_name_.count(ref.name))
            throw std::invalid_argument("duplicate space name: " + ref.name);
        if (ref.kind == SpaceKind::PrimitiveAction) {
            ref.property.clear();
            ref.owner = -1;
            ref.relative = false;
        }
        ref.id = static_cast<SpaceId>(spaces_.size());
        if (ref.lo.size() != static_cast<std::size_t>(ref.dim) ||
            ref.hi.size() != static_cast<std::size_t>(ref.dim))
            throw std::invalid_argument("space bounds must match dim");
        if (ref.step_lo.empty()) ref.step_lo = ref.lo;
        if (ref.step_hi.empty()) ref.step_hi = ref.hi;
        if (ref.goal_lo.empty()) ref.goal_lo = ref.step_lo;
        if (ref.goal_hi.empty()) ref.goal_hi = ref.step_hi;
        if (ref.context_sigma <= 0.0) {
            double widest = 0.0;
            for (int d = 0; d < ref.dim; ++d)
                widest = std::max(widest,
                                  ref.hi[static_cast<std::size_t>(d)] -
                                      ref.lo[static_cast<std::size_t>(d)]);
            ref.context_sigma = std::max(1e-9, 0.5 * widest);
        }
        by_name_[ref.name] = ref.id;
        spaces_.push_back(std::move(ref));
        return spaces_.back().id;
    }

    const SpaceRef& at(SpaceId id) const {
        if (id < 0 || id >= static_cast<SpaceId>(spaces_.size()))
            throw std::out_of_range("unknown space id");
        return spaces_[static_cast<std::size_t>(id)];
    }

    const SpaceRef* find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : &spaces_[static_cast<std::size_t>(it->second)];
    }

    const SpaceRef& by_name(const std::string& name) const {
        const SpaceRef* ref = find(name);
        if (!ref) throw std::out_of_range("unknown space name: " + name);
        return *ref;
    }

    // The space reporting `property` for `owner`, or null.
    const SpaceRef* find_role(const std::string& property, int owner) const {
        for (const auto& s : spaces_)
            if (s.owner == owner && s.property == property) return &s;
        return nullptr;
    }

    std::size_t size() const { return spaces_.size(); }
    const std::vector<SpaceRef>& all() const { return spaces_; }

private:
    std::vector<SpaceRef> spaces_;
    std::map<std::string, SpaceId> by_name_;
};

// C = primitive-action spaces plus observable spaces proven controllable by
// some affordance. Primitive spaces are implicit permanent members.
class ControllableSet {
public:
    explicit ControllableSet(const SpaceRegistry& reg) {
        for (const auto& s : reg.all())
            if (s.is_primitive()) members_.push_back(s.id);
        n_primitive_ = members_.size();
    }

    void promote(const SpaceRegistry& reg, SpaceId id) {
        const SpaceRef& s = reg.at(id);
        if (s.is_primitive())
            throw std::invalid_argument("primitive spaces are implicit members");
        if (!contains(id)) members_.push_back(id);
    }

    void demote(SpaceId id) {
        for (std::size_t i = n_primitive_; i < members_.size(); ++i) {
            if (members_[i] == id) {
                members_.erase(members_.begin() + static_cast<long>(i));
                return;
            }
        }
    }

    bool contains(SpaceId id) const {
        for (SpaceId m : members_)
            if (m == id) return true;
        return false;
    }

    const std::vector<SpaceId>& members() const { return members_; }

private:
    std::vector<SpaceId> members_;  // primitives first, then promotions in order
    std::size_t n_primitive_ = 0;
};

struct SpaceVector {
    SpaceId space = kNoSpace;
    Vec values;
};

// Uniform draw within the space's absolute bounds.
inline SpaceVector sample_uniform(const SpaceRef& space, Rng& rng) {
    for (int d = 0; d < space.dim; ++d) {
        const auto i = static_cast<std::size_t>(d);
        if (!std::isfinite(space.lo[i]) || !std::isfinite(space.hi[i]))
            throw std::invalid_argument("space has no finite bounds: " + space.name);
    }
    SpaceVector v{space.id, Vec(static_cast<std::size_t>(space.dim))};
    for (int d = 0; d < space.dim; ++d) {
        const auto i = static_cast<std::size_t>(d);
        v.values[i] = rng.uniform(space.lo[i], space.hi[i]);
    }
    return v;
}

}  // namespace curio
