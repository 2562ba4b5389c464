#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "curio/classifier.hpp"
#include "curio/dataset.hpp"
#include "curio/interest_map.hpp"
#include "curio/local_model.hpp"
#include "curio/rng.hpp"
#include "curio/spaces.hpp"

namespace curio {

struct AffordanceConfig {
    double tau_creation = 0.4;
    double delta_match = 0.05;
    int spaces_per_episode = 0;      // 0 = process every active space
    int context_candidates = 3;      // k' per Algorithm-2 repeat loop
    bool ranked_context_candidates = true;
    bool derived_pair_contexts = true;
    int false_positive_grace = 20;   // goal attempts below tau before deletion
    double novelty_bonus = 0.3;      // optimistic interest for young maps
    long novelty_min_attempts = 8;
    double selection_epsilon = 0.2;
    double nonzero_eps = 1e-6;
    std::size_t max_context_refit = 600;  // refs refit during context trials
    ModelConfig model;
    InterestConfig interest;
    ClassifierConfig classifier;
};

// A learned relation between an input controllable space and an outcome
// space, with its forward/inverse model, applicability classifier and
// interest map. Owner-relative sample bindings let one affordance generalize
// across the objects its classifier accepts.
struct Affordance {
    int id = 0;
    long created_at = 0;
    int depth = 1;
    LocalModel model;
    VisualClassifier classifier;
    InterestMap interest;
    long goal_attempts = 0;
    long attempts_below_tau = 0;
    bool doomed = false;
};

// Feature layout consumed by every visual classifier:
// [radius, height, color rgb, shape, is-robot].
inline Vec entity_features(const SpaceRegistry& reg, const Observation& obs, int entity) {
    Vec f;
    for (const char* prop : {"radius", "height", "color", "shape"}) {
        const SpaceRef* s = reg.find_role(prop, entity);
        if (!s) throw std::invalid_argument("entity lacks property " + std::string(prop));
        const auto& v = obs[static_cast<std::size_t>(s->id)];
        f.insert(f.end(), v.begin(), v.end());
    }
    f.push_back(entity == kRobotEntity ? 1.0 : 0.0);
    return f;
}

inline constexpr int kEntityFeatureDim = 7;

// Hierarchy plus the Algorithm-2 lifecycle: matching, context adaptation,
// creation, false-positive deletion and classifier upkeep.
class AffordanceEngine {
public:
    AffordanceEngine(const SpaceRegistry& reg, AffordanceConfig cfg = {})
        : reg_(&reg), cfg_(cfg), controllables_(reg) {}

    const std::vector<std::unique_ptr<Affordance>>& hierarchy() const { return h_; }
    ControllableSet& controllables() { return controllables_; }
    const ControllableSet& controllables() const { return controllables_; }
    const AffordanceConfig& config() const { return cfg_; }

    Affordance* by_id(int id) {
        for (auto& a : h_)
            if (a->id == id) return a.get();
        return nullptr;
    }

    bool empty() const { return h_.empty(); }

    // True when goals in `space` can be driven: it is the output space of
    // some affordance, directly or through an owner rebinding.
    bool plannable(SpaceId space) const { return !providers(space).empty(); }

    std::vector<Affordance*> providers(SpaceId space) const {
        std::vector<Affordance*> out;
        const SpaceRef& s = reg_->at(space);
        for (const auto& a : h_)
            if (same_role(reg_->at(a->model.output_space()), s)) out.push_back(a.get());
        return out;
    }

    // Epsilon-greedy over the per-map maximum leaf interest; young maps get
    // an optimistic floor so fresh affordances attract goals. Null when H
    // is empty (caller falls back to the random strategy).
    Affordance* select_affordance(Rng& rng) {
        if (h_.empty()) return nullptr;
        if (rng.unit() < cfg_.selection_epsilon)
            return h_[static_cast<std::size_t>(rng.index(static_cast<int>(h_.size())))].get();
        Affordance* best = nullptr;
        double best_score = -1.0;
        for (auto& a : h_) {
            double score = a->interest.max_leaf_interest();
            if (a->interest.attempts() < cfg_.novelty_min_attempts)
                score = std::max(score, cfg_.novelty_bonus);
            if (score > best_score) {
                best_score = score;
                best = a.get();
            }
        }
        return best;
    }

    // Among entities the classifier accepts, the one closest to the robot.
    std::optional<int> select_object(const Affordance& a, const Observation& obs) const {
        std::optional<int> best;
        double best_d = std::numeric_limits<double>::infinity();
        const int entities = count_entities();
        for (int e = 0; e < entities; ++e) {
            if (!reg_->find_role(reg_->at(a.model.output_space()).property, e)) continue;
            if (!a.classifier.classify(entity_features(*reg_, obs, e))) continue;
            const SpaceRef* rel = reg_->find_role("relative-position", e);
            double d = 0.0;
            if (rel) {
                const auto& v = obs[static_cast<std::size_t>(rel->id)];
                for (double x : v) d += x * x;
            }
            if (d < best_d) {
                best_d = d;
                best = e;
            }
        }
        return best;
    }

    // One Algorithm-2 pass over the episode block [base, base+count) of the
    // dataset. `rng` drives space picking, context candidates and classifier
    // replay. `episode_obs` is the context observation at episode start,
    // used for classifier features.
    void update_affordances(const Dataset& data, std::size_t base, std::size_t count,
                            const Observation& episode_obs, long now, Rng& rng) {
        if (count == 0) return;
        std::vector<SpaceId> active = active_spaces(data, base, count);
        rng.shuffle(active);
        const int k = cfg_.spaces_per_episode > 0
            ? std::min<int>(cfg_.spaces_per_episode, static_cast<int>(active.size()))
            : static_cast<int>(active.size());
        for (int i = 0; i < k; ++i)
            process_space(data, base, count, active[static_cast<std::size_t>(i)],
                          episode_obs, now, rng);
        prune(now);
    }

    // Holding out the new block, does A's current model predict it without
    // losing more than delta_match of competence? Vacuously true while A
    // has nothing to contradict.
    bool matches(const Affordance& a, const Dataset& data, std::size_t base,
                 std::size_t count, SpaceId space, int* best_in_owner = nullptr) const {
        if (!same_role(reg_->at(a.model.output_space()), reg_->at(space))) return false;
        if (a.model.sample_count() == 0) return true;
        double best = -1.0;
        int owner = -1;
        for_each_binding(a.model, data, base, count, space, [&](int in_owner,
                                                                const std::vector<Vec>& xs,
                                                                const std::vector<Vec>& cs,
                                                                const std::vector<Vec>& ys) {
            const double c = a.model.competence_on(xs, cs, ys);
            if (c > best) {
                best = c;
                owner = in_owner;
            }
        });
        if (best < 0.0) return false;  // no extractable evidence
        if (best_in_owner) *best_in_owner = owner;
        return best >= a.model.validation_competence() - cfg_.delta_match;
    }

    // Clone A's model with one more context role and re-fit on its refs;
    // keep the clone iff validation competence clears the modification gate.
    bool try_add_context(Affordance& a, const Dataset& data, const ContextRole& role) {
        if (a.model.has_context(role)) return false;
        std::vector<ContextRole> roles = a.model.context_roles();
        roles.push_back(role);
        LocalModel trial(*reg_, a.model.input_space(), a.model.output_space(), roles, cfg_.model);
        std::vector<SampleRef> refs = a.model.refs();
        if (refs.size() > cfg_.max_context_refit)
            refs.erase(refs.begin(),
                       refs.end() - static_cast<long>(cfg_.max_context_refit));
        trial.add_samples(data, *reg_, refs);
        const double gate = std::max(a.model.validation_competence(), cfg_.tau_creation);
        if (trial.validation_competence() < gate) return false;
        a.model = std::move(trial);
        return true;
    }

    // Fits candidate (input space, context) models on the episode block and
    // registers the best one if it clears tau_creation. Returns the new
    // affordance or null.
    Affordance* create_affordance(const Dataset& data, std::size_t base, std::size_t count,
                                  SpaceId space, const Observation& episode_obs,
                                  long now, Rng& rng) {
        const SpaceRef& out = reg_->at(space);
        double best_c = -1.0;
        std::optional<LocalModel> best_model;
        std::vector<SampleRef> best_refs;
        for (SpaceId input : candidate_inputs(space, data, base, count)) {
            // Algorithm 2 births the affordance with an empty context; when
            // that alone cannot explain the data, the modification loop runs
            // on the newborn before the acceptance test.
            std::vector<std::vector<ContextRole>> context_sets;
            context_sets.push_back({});
            for (const auto& role : context_menu(space, input))
                context_sets.push_back({role});
            for (const auto& roles : context_sets) {
                LocalModel trial(*reg_, input, space, roles, cfg_.model);
                std::vector<SampleRef> refs = block_refs(trial, data, base, count, space);
                if (refs.empty()) continue;
                trial.add_samples(data, *reg_, refs);
                bool any_informative = false;
                Vec x, c, y;
                for (const auto& ref : refs)
                    if (trial.extract(data, *reg_, ref, x, c, y) && trial.informative(y)) {
                        any_informative = true;
                        break;
                    }
                if (!any_informative) continue;
                const double comp = trial.validation_competence();
                if (comp > best_c) {
                    best_c = comp;
                    best_model = std::move(trial);
                    best_refs = std::move(refs);
                }
            }
        }
        if (!best_model || best_c < cfg_.tau_creation) return nullptr;
        auto a = std::make_unique<Affordance>();
        a->id = next_id_++;
        a->created_at = now;
        a->model = std::move(*best_model);
        a->classifier = VisualClassifier(kEntityFeatureDim, rng.fork(), cfg_.classifier);
        a->classifier.train(entity_features(*reg_, episode_obs, out.owner), true, rng);
        a->interest = InterestMap(out.goal_lo, out.goal_hi, cfg_.interest);
        a->depth = affordance_depth(a->model.input_space());
        controllables_.promote(*reg_, space);
        h_.push_back(std::move(a));
        return h_.back().get();
    }

    // Removes affordances whose validation competence stayed below
    // tau_creation through the goal-attempt grace budget; demotes output
    // spaces that lose their last provider.
    void prune(long now) {
        (void)now;
        for (auto it = h_.begin(); it != h_.end();) {
            Affordance& a = **it;
            const bool doomed =
                a.doomed || (a.attempts_below_tau >= cfg_.false_positive_grace &&
                             a.model.validation_competence() < cfg_.tau_creation);
            if (!doomed) {
                ++it;
                continue;
            }
            const SpaceId out = a.model.output_space();
            it = h_.erase(it);
            bool still_provided = false;
            for (const auto& b : h_)
                if (b->model.output_space() == out) still_provided = true;
            if (!still_provided) controllables_.demote(out);
        }
    }

    // Interest-map and false-positive bookkeeping after one goal episode.
    // `contacted`/`moved` feed the classifier: an accepted object that was
    // reached but would not respond is a negative example.
    void record_goal_attempt(Affordance& a, int entity, const Vec& goal, const Vec& reached,
                             bool contacted, bool moved, long now,
                             const Observation& episode_obs, Rng& rng) {
        a.interest.log_attempt(goal, reached, now);
        ++a.goal_attempts;
        if (a.model.validation_competence() < cfg_.tau_creation)
            ++a.attempts_below_tau;
        else
            a.attempts_below_tau = 0;
        if (contacted && !moved && entity != kRobotEntity)
            a.classifier.train(entity_features(*reg_, episode_obs, entity), false, rng);
    }

    int count_entities() const {
        int n = 0;
        while (reg_->find_role("radius", n)) ++n;
        return n;
    }

    // Goal-capable spaces with non-null relative outcomes in the block.
    std::vector<SpaceId> active_spaces(const Dataset& data, std::size_t base,
                                       std::size_t count) const {
        std::vector<SpaceId> out;
        for (const auto& s : reg_->all()) {
            if (s.is_primitive() || !s.relative || s.context_only) continue;
            bool nonzero = false;
            for (std::size_t i = base; i < base + count && !nonzero; ++i) {
                for (double v : data[i].outcomes[static_cast<std::size_t>(s.id)])
                    if (std::fabs(v) > cfg_.nonzero_eps) {
                        nonzero = true;
                        break;
                    }
            }
            if (nonzero) out.push_back(s.id);
        }
        return out;
    }

private:
    // Candidate context roles for an affordance with this (output, input)
    // pair: own physical properties, global sensors, and (for two-entity
    // relations) the paired difference of positions.
    std::vector<ContextRole> context_menu(SpaceId output, SpaceId input) const {
        std::vector<ContextRole> menu;
        auto add_owner_role = [&](const char* prop) {
            ContextRole r;
            r.binding = ContextRole::Binding::OutputOwner;
            r.property = prop;
            menu.push_back(r);
        };
        add_owner_role("relative-position");
        add_owner_role("radius");
        add_owner_role("height");
        add_owner_role("color");
        add_owner_role("position");
        const SpaceRef* lidar = reg_->find("lidar");
        if (lidar) {
            ContextRole r;
            r.binding = ContextRole::Binding::Fixed;
            r.fixed_space = lidar->id;
            r.property = "lidar";
            menu.push_back(r);
        }
        const SpaceRef& in = reg_->at(input);
        if (!in.is_primitive() && in.owner != reg_->at(output).owner && cfg_.derived_pair_contexts) {
            ContextRole d;
            d.binding = ContextRole::Binding::PairDifference;
            d.property = "relative-position";
            menu.push_back(d);
            ContextRole ir;
            ir.binding = ContextRole::Binding::InputOwner;
            ir.property = "relative-position";
            menu.push_back(ir);
        }
        return menu;
    }

    // Input spaces worth trying for a new affordance on `space`: primitives
    // plus observables already drivable through the hierarchy, excluding the
    // output entity itself (kinematically coupled spaces explain nothing).
    std::vector<SpaceId> candidate_inputs(SpaceId space, const Dataset& data,
                                          std::size_t base, std::size_t count) const {
        std::vector<SpaceId> out;
        for (const auto& s : reg_->all())
            if (s.is_primitive()) out.push_back(s.id);
        const SpaceRef& target = reg_->at(space);
        for (const auto& s : reg_->all()) {
            if (s.is_primitive() || s.context_only || !s.relative) continue;
            if (s.id == space || s.owner == target.owner) continue;
            if (!plannable(s.id)) continue;
            bool nonzero = false;
            for (std::size_t i = base; i < base + count && !nonzero; ++i)
                for (double v : data[i].outcomes[static_cast<std::size_t>(s.id)])
                    if (std::fabs(v) > cfg_.nonzero_eps) {
                        nonzero = true;
                        break;
                    }
            if (nonzero) out.push_back(s.id);
        }
        return out;
    }

    int affordance_depth(SpaceId input) const {
        const SpaceRef& in = reg_->at(input);
        if (in.is_primitive()) return 1;
        int best = 0;
        for (const Affordance* p : providers(input))
            best = best == 0 ? p->depth : std::min(best, p->depth);
        return best + 1;
    }

    // Extractable sample refs for a block, one per (record, binding).
    std::vector<SampleRef> block_refs(const LocalModel& model, const Dataset& data,
                                      std::size_t base, std::size_t count,
                                      SpaceId space) const {
        std::vector<SampleRef> refs;
        const SpaceRef& out = reg_->at(space);
        const SpaceRef& in = reg_->at(model.input_space());
        std::vector<int> in_owners;
        if (in.is_primitive()) {
            in_owners.push_back(-1);
        } else {
            for (int e = 0; e < count_entities(); ++e) {
                if (e == out.owner) continue;
                const SpaceRef* s = reg_->find_role(in.property, e);
                if (!s) continue;
                bool nonzero = false;
                for (std::size_t i = base; i < base + count && !nonzero; ++i)
                    for (double v : data[i].outcomes[static_cast<std::size_t>(s->id)])
                        if (std::fabs(v) > cfg_.nonzero_eps) {
                            nonzero = true;
                            break;
                        }
                if (nonzero) in_owners.push_back(e);
            }
        }
        for (int owner : in_owners)
            for (std::size_t i = base; i < base + count; ++i)
                refs.push_back(SampleRef{static_cast<long>(i), out.owner, owner});
        return refs;
    }

    // Calls fn once per candidate input-owner binding with the extracted
    // rows of the block.
    template <typename Fn>
    void for_each_binding(const LocalModel& model, const Dataset& data, std::size_t base,
                          std::size_t count, SpaceId space, Fn&& fn) const {
        const SpaceRef& out = reg_->at(space);
        const SpaceRef& in = reg_->at(model.input_space());
        std::vector<int> in_owners;
        if (in.is_primitive()) {
            in_owners.push_back(-1);
        } else {
            for (int e = 0; e < count_entities(); ++e) {
                if (e == out.owner) continue;
                if (reg_->find_role(in.property, e)) in_owners.push_back(e);
            }
        }
        for (int owner : in_owners) {
            std::vector<Vec> xs, cs, ys;
            Vec x, c, y;
            bool any_informative = false;
            for (std::size_t i = base; i < base + count; ++i) {
                SampleRef ref{static_cast<long>(i), out.owner, owner};
                if (!model.extract(data, *reg_, ref, x, c, y)) continue;
                if (model.informative(y)) any_informative = true;
                xs.push_back(x);
                cs.push_back(c);
                ys.push_back(y);
            }
            if (xs.empty() || !any_informative) continue;
            fn(owner, xs, cs, ys);
        }
    }

    // Candidate ordering for context repair of a mismatching affordance:
    // rank by correlation between context distance and model residual, as a
    // cheap proxy pick the menu order but try the ranked subset first.
    void process_space(const Dataset& data, std::size_t base, std::size_t count,
                       SpaceId space, const Observation& episode_obs, long now, Rng& rng) {
        const SpaceRef& out = reg_->at(space);
        bool matched_any = false;
        for (auto& ap : h_) {
            Affordance& a = *ap;
            if (!same_role(reg_->at(a.model.output_space()), out)) continue;
            int in_owner = -1;
            if (matches(a, data, base, count, space, &in_owner)) {
                absorb(a, data, base, count, space, in_owner);
                // Algorithm 2 trains the classifier in the match branch and
                // again after the loop; the duplication is kept as written.
                a.classifier.train(entity_features(*reg_, episode_obs, out.owner), true, rng);
                a.classifier.train(entity_features(*reg_, episode_obs, out.owner), true, rng);
                matched_any = true;
                continue;
            }
            bool fixed = false;
            std::vector<ContextRole> menu = context_menu(space, a.model.input_space());
            if (!cfg_.ranked_context_candidates) rng.shuffle(menu);
            int tried = 0;
            for (const auto& role : menu) {
                if (tried >= cfg_.context_candidates) break;
                if (a.model.has_context(role)) continue;
                ++tried;
                if (try_add_context(a, data, role)) {
                    fixed = true;
                    break;
                }
            }
            if (fixed && matches(a, data, base, count, space, &in_owner)) {
                absorb(a, data, base, count, space, in_owner);
                a.classifier.train(entity_features(*reg_, episode_obs, out.owner), true, rng);
                matched_any = true;
            } else {
                // The after-loop classifier call of Algorithm 2: a tested
                // affordance that rejected this data learns the entity as a
                // negative example.
                a.classifier.train(entity_features(*reg_, episode_obs, out.owner), false, rng);
            }
        }
        if (!matched_any)
            create_affordance(data, base, count, space, episode_obs, now, rng);
    }

    void absorb(Affordance& a, const Dataset& data, std::size_t base, std::size_t count,
                SpaceId space, int in_owner) {
        std::vector<SampleRef> refs;
        refs.reserve(count);
        for (std::size_t i = base; i < base + count; ++i)
            refs.push_back(SampleRef{static_cast<long>(i), reg_->at(space).owner, in_owner});
        a.model.add_samples(data, *reg_, refs);
    }

    const SpaceRegistry* reg_;
    AffordanceConfig cfg_;
    ControllableSet controllables_;
    std::vector<std::unique_ptr<Affordance>> h_;
    int next_id_ = 0;
};

}  // namespace curio
