#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "curio/affordance.hpp"
#include "curio/geometry.hpp"
#include "curio/rng.hpp"
#include "curio/spaces.hpp"

namespace curio {

struct PlannerConfig {
    double goal_tolerance = 0.15;   // "goal satisfied" radius in space units
    double repair_distance = 0.35;  // context gap that triggers repair
    int max_depth = 6;
    int max_plan_steps = 400;
    double calibration_gain = 0.5;  // EMA on observed/predicted angle offsets
    double calibration_floor = 0.02;
};

enum class PlanStatus { Ok, EmptyGoal, UnreachableGoal, PlanTooLong, NoData };

struct Controllable {
    SpaceId space = kNoSpace;
    Vec value;  // command for primitive spaces, target delta otherwise
};

struct Plan {
    PlanStatus status = PlanStatus::Ok;
    std::vector<Controllable> steps;
};

// Per-episode rotational alignment between a model's predicted deltas and
// the observed ones, per space. Differential-drive headings are not
// observable, so the executor tracks the offset from innovations instead.
class FrameCalibration {
public:
    void reset() { phi_.clear(); }

    double offset(SpaceId s) const {
        auto it = phi_.find(s);
        return it == phi_.end() ? 0.0 : it->second;
    }

    void update(SpaceId s, const Vec& predicted, const Vec& observed,
                double gain, double floor) {
        if (predicted.size() != 2 || observed.size() != 2) return;
        const double pn = std::hypot(predicted[0], predicted[1]);
        const double on = std::hypot(observed[0], observed[1]);
        if (pn < floor || on < floor) return;
        const double innovation = wrap_angle(
            std::atan2(observed[1], observed[0]) - std::atan2(predicted[1], predicted[0]));
        auto [it, fresh] = phi_.try_emplace(s, innovation);
        if (!fresh) it->second = wrap_angle(it->second + gain * wrap_angle(innovation - it->second));
    }

private:
    std::map<SpaceId, double> phi_;
};

struct ResolveTrace {
    SpaceId space = kNoSpace;
    Vec predicted;  // model-frame prediction for the chosen input
};

struct NextAction {
    bool ok = false;
    PlanStatus status = PlanStatus::UnreachableGoal;
    Vec wheel;
    std::vector<ResolveTrace> trace;
};

// Turns goals over controllable spaces into wheel commands by recursive
// inverse-model resolution: waypoint chunking within each model's trusted
// radius, context repair when the situation is outside the model's support,
// and rebinding of object slots at every level.
class Planner {
public:
    Planner(const SpaceRegistry& reg, AffordanceEngine& engine, PlannerConfig cfg = {})
        : reg_(&reg), engine_(&engine), cfg_(cfg) {}

    const PlannerConfig& config() const { return cfg_; }

    // Spec-level plan: one controllable when a single inverse call suffices
    // (predicted), else evenly spaced waypoints within the trusted radius.
    Plan plan(SpaceId space, const Vec& goal_delta, const Observation& obs, Rng& rng) const {
        Plan p;
        const SpaceRef& s = reg_->at(space);
        if (s.is_primitive()) {
            p.steps.push_back({space, goal_delta});
            return p;
        }
        const double d = vec_norm(goal_delta);
        if (d <= cfg_.goal_tolerance) {
            p.status = PlanStatus::EmptyGoal;
            return p;
        }
        Affordance* a = choose_provider(space, obs);
        if (!a) {
            p.status = PlanStatus::UnreachableGoal;
            return p;
        }
        const double radius = std::max(a->model.trusted_radius(), 1e-3);
        const int n = std::max(1, static_cast<int>(std::ceil(d / radius)));
        if (n > cfg_.max_plan_steps) {
            p.status = PlanStatus::PlanTooLong;
            return p;
        }
        for (int i = 0; i < n; ++i) {
            Controllable c;
            c.space = space;
            c.value.resize(goal_delta.size());
            for (std::size_t k = 0; k < goal_delta.size(); ++k)
                c.value[k] = goal_delta[k] / static_cast<double>(n);
            p.steps.push_back(std::move(c));
        }
        (void)rng;
        return p;
    }

    // Recursive expansion of a controllable sequence into primitive wheel
    // commands, resolved against the current observation. Used for random
    // exploration bursts and as the type-level contract; goal execution
    // re-resolves every step via next_action instead.
    std::vector<SpaceVector> transform_to_primitive(const std::vector<Controllable>& seq,
                                                    const Observation& obs, Rng& rng,
                                                    std::size_t cap = 0) const {
        std::vector<SpaceVector> out;
        FrameCalibration calib;
        for (const auto& c : seq) {
            const SpaceRef& s = reg_->at(c.space);
            if (s.is_primitive()) {
                out.push_back({c.space, c.value});
            } else {
                Plan p = plan(c.space, c.value, obs, rng);
                if (p.status == PlanStatus::EmptyGoal) continue;
                if (p.status != PlanStatus::Ok) continue;
                for (const auto& step : p.steps) {
                    NextAction na = resolve(step.space, step.value, obs, calib, rng, 0, {});
                    if (!na.ok) break;
                    out.push_back({wheel_space(), na.wheel});
                    if (cap && out.size() >= cap) return out;
                }
            }
            if (cap && out.size() >= cap) break;
        }
        return out;
    }

    // One closed-loop step toward a goal delta on `space`: the next wheel
    // command plus the per-level predictions needed to update calibration.
    NextAction next_action(SpaceId space, const Vec& remaining_delta, const Observation& obs,
                           FrameCalibration& calib, Rng& rng) const {
        return resolve(space, remaining_delta, obs, calib, rng, 0, {});
    }

    SpaceId wheel_space() const {
        for (const auto& s : reg_->all())
            if (s.is_primitive()) return s.id;
        return kNoSpace;
    }

    // The provider whose classifier accepts the space's owner; ties broken
    // by shallower hierarchy depth, then by sample count.
    Affordance* choose_provider(SpaceId space, const Observation& obs) const {
        const SpaceRef& s = reg_->at(space);
        Affordance* best = nullptr;
        for (Affordance* a : engine_->providers(space)) {
            if (!a->classifier.classify(entity_features(*reg_, obs, s.owner)) &&
                a->model.sample_count() > 0)
                continue;
            if (!best || a->depth < best->depth ||
                (a->depth == best->depth &&
                 a->model.sample_count() > best->model.sample_count()))
                best = a;
        }
        return best;
    }

private:
    static double vec_norm(const Vec& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }

    static Vec rotated_vec(const Vec& v, double angle) {
        if (v.size() != 2) return v;
        const Vec2 r = rotated(Vec2{v[0], v[1]}, angle);
        return {r.x, r.y};
    }

    // Choose the entity that fills an observable input slot: accepted by a
    // provider of the input role and closest to the robot.
    std::optional<int> choose_binding(const SpaceRef& input, int exclude_owner,
                                      const Observation& obs) const {
        if (input.owner == kRobotEntity) return kRobotEntity;
        std::optional<int> best;
        double best_d = std::numeric_limits<double>::infinity();
        for (int e = 0; e < engine_->count_entities(); ++e) {
            if (e == exclude_owner) continue;
            const SpaceRef* s = reg_->find_role(input.property, e);
            if (!s || !engine_->plannable(s->id)) continue;
            Affordance* p = choose_provider(s->id, obs);
            if (!p) continue;
            const SpaceRef* rel = reg_->find_role("relative-position", e);
            double d = 0.0;
            if (rel)
                for (double x : obs[static_cast<std::size_t>(rel->id)]) d += x * x;
            if (d < best_d) {
                best_d = d;
                best = e;
            }
        }
        return best;
    }

    NextAction resolve(SpaceId space, const Vec& delta, const Observation& obs,
                       FrameCalibration& calib, Rng& rng, int depth,
                       std::vector<int> stack) const {
        NextAction out;
        const SpaceRef& s = reg_->at(space);
        if (s.is_primitive()) {
            out.ok = true;
            out.status = PlanStatus::Ok;
            out.wheel = delta;
            for (auto& v : out.wheel)
                v = std::clamp(v, -1.0, 1.0);
            return out;
        }
        if (depth >= cfg_.max_depth) {
            out.status = PlanStatus::PlanTooLong;
            return out;
        }
        Affordance* a = choose_provider(space, obs);
        if (!a || std::count(stack.begin(), stack.end(), a->id)) {
            out.status = PlanStatus::UnreachableGoal;
            return out;
        }
        if (a->model.sample_count() == 0) {
            out.status = PlanStatus::NoData;
            return out;
        }
        stack.push_back(a->id);

        const SpaceRef& in = reg_->at(a->model.input_space());
        int in_owner = -1;
        if (!in.is_primitive()) {
            auto bound = choose_binding(in, s.owner, obs);
            if (!bound) {
                out.status = PlanStatus::UnreachableGoal;
                return out;
            }
            in_owner = *bound;
        }

        // Chunk the goal to the model's trusted radius and undo any observed
        // frame offset before querying the inverse model.
        Vec chunk = delta;
        const double d = vec_norm(delta);
        const double radius = std::max(a->model.trusted_radius(), 1e-3);
        if (d > radius)
            for (auto& v : chunk) v *= radius / d;
        chunk = rotated_vec(chunk, -calib.offset(space));

        Vec live;
        if (!a->model.live_context(*reg_, obs, s.owner, in_owner, live)) {
            out.status = PlanStatus::NoData;
            return out;
        }
        InversePrediction inv = a->model.inverse(chunk, live, rng);
        if (!inv.found) {
            out.status = PlanStatus::NoData;
            return out;
        }

        // Context repair: when the supporting sample was recorded in a
        // situation far from the current one along a drivable context role,
        // close that gap first.
        if (auto repair = repair_goal(*a, s.owner, in_owner, live, inv.support_context, obs)) {
            NextAction fixed = resolve(repair->space, repair->value, obs, calib, rng,
                                       depth + 1, stack);
            if (fixed.ok) {
                fixed.trace.push_back({space, Vec{0.0, 0.0}});
                return fixed;
            }
        }

        NextAction inner;
        if (in.is_primitive()) {
            inner.ok = true;
            inner.status = PlanStatus::Ok;
            inner.wheel = inv.input;
            for (auto& v : inner.wheel) v = std::clamp(v, -1.0, 1.0);
        } else {
            const SpaceRef* bound_in = reg_->find_role(in.property, in_owner);
            if (!bound_in) {
                out.status = PlanStatus::UnreachableGoal;
                return out;
            }
            inner = resolve(bound_in->id, inv.input, obs, calib, rng, depth + 1, stack);
            if (!inner.ok) return inner;
        }
        inner.trace.push_back({space, rotated_vec(inv.predicted, calib.offset(space))});
        return inner;
    }

    // A sub-goal that drives the most violated drivable context role toward
    // the support context, or nothing when the situation is close enough.
    std::optional<Controllable> repair_goal(const Affordance& a, int out_owner, int in_owner,
                                            const Vec& live, const Vec& support,
                                            const Observation& obs) const {
        (void)obs;
        std::size_t off = 0;
        for (const auto& role : a.model.context_roles()) {
            const auto dim = static_cast<std::size_t>(role.dim);
            if (role.property == "relative-position" || role.property == "position") {
                Vec gap(dim);
                double n = 0.0;
                for (std::size_t k = 0; k < dim; ++k) {
                    gap[k] = support[off + k] - live[off + k];
                    n += gap[k] * gap[k];
                }
                n = std::sqrt(n);
                if (n > cfg_.repair_distance) {
                    if (role.binding == ContextRole::Binding::OutputOwner) {
                        const SpaceRef* s = reg_->find_role(role.property, out_owner);
                        if (s && engine_->plannable(s->id)) return Controllable{s->id, gap};
                    } else if (role.binding == ContextRole::Binding::InputOwner && in_owner >= 0) {
                        const SpaceRef* s = reg_->find_role(role.property, in_owner);
                        if (s && engine_->plannable(s->id)) return Controllable{s->id, gap};
                    } else if (role.binding == ContextRole::Binding::PairDifference && in_owner >= 0) {
                        // diff = value(out) - value(in); drive the input
                        // entity's position opposite to the gap.
                        const SpaceRef* s = reg_->find_role("position", in_owner);
                        if (s && engine_->plannable(s->id)) {
                            Vec neg(dim);
                            for (std::size_t k = 0; k < dim; ++k) neg[k] = -gap[k];
                            return Controllable{s->id, neg};
                        }
                    }
                }
            }
            off += dim;
        }
        return std::nullopt;
    }

    const SpaceRegistry* reg_;
    AffordanceEngine* engine_;
    PlannerConfig cfg_;
};

}  // namespace curio
