#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "curio/local_model.hpp"
#include "curio/world.hpp"

using namespace curio;

namespace {

// Minimal registry with a 2-d primitive input and a 2-d relative outcome.
struct Fixture {
    SpaceRegistry reg;
    SpaceId in, out;
    Dataset data;

    Fixture() : data((build(), reg)) {}

    void build() {
        SpaceRef a;
        a.name = "cmd";
        a.dim = 2;
        a.kind = SpaceKind::PrimitiveAction;
        a.lo = {-1.0, -1.0};
        a.hi = {1.0, 1.0};
        in = reg.register_space(a);
        SpaceRef o;
        o.name = "effect";
        o.dim = 2;
        o.property = "effect";
        o.owner = 1;
        o.relative = true;
        o.lo = {-5.0, -5.0};
        o.hi = {5.0, 5.0};
        o.step_lo = {-1.0, -1.0};
        o.step_hi = {1.0, 1.0};
        o.context_sigma = 1.0;
        out = reg.register_space(o);
    }

    // y = [0.8 x0 - 0.2 x1, 0.5 x1]
    static Vec truth(const Vec& x) {
        return {0.8 * x[0] - 0.2 * x[1], 0.5 * x[1]};
    }

    EpisodeRecord record(const Vec& x) const {
        EpisodeRecord r;
        r.action_space = in;
        r.action = x;
        r.outcomes.resize(reg.size());
        r.context.resize(reg.size());
        r.outcomes[static_cast<std::size_t>(out)] = truth(x);
        r.context[static_cast<std::size_t>(out)] = {0.0, 0.0};
        return r;
    }

    LocalModel trained(int n, Rng& rng) {
        LocalModel m(reg, in, out, {});
        std::vector<SampleRef> refs;
        for (int i = 0; i < n; ++i) {
            Vec x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
            data.append(record(x));
            refs.push_back({static_cast<long>(data.size() - 1), 1, -1});
        }
        m.add_samples(data, reg, refs);
        return m;
    }
};

}  // namespace

TEST_CASE("empty model degrades to zero estimate and zero confidence") {
    Fixture f;
    LocalModel m(f.reg, f.in, f.out, {});
    ForwardPrediction p = m.forward(Vec{0.3, 0.3}, Vec{});
    REQUIRE(p.outcome == Vec{0.0, 0.0});
    REQUIRE(p.confidence == 0.0);

    Rng rng(1);
    InversePrediction inv = m.inverse({0.1, 0.1}, {}, rng);
    REQUIRE_FALSE(inv.found);
}

TEST_CASE("forward interpolates exactly at a training node") {
    Fixture f;
    Rng rng(2);
    LocalModel m = f.trained(80, rng);
    const Vec x{0.4, -0.3};
    f.data.append(f.record(x));
    m.add_samples(f.data, f.reg, {{static_cast<long>(f.data.size() - 1), 1, -1}});
    ForwardPrediction p = m.forward(x, Vec{});
    const Vec want = Fixture::truth(x);
    REQUIRE(p.outcome[0] == Catch::Approx(want[0]).margin(0.02));
    REQUIRE(p.outcome[1] == Catch::Approx(want[1]).margin(0.02));
    REQUIRE(p.confidence > 0.8);
}

TEST_CASE("inverse recovers goals available in the data") {
    Fixture f;
    Rng rng(3);
    LocalModel m = f.trained(300, rng);

    SECTION("goal equal to an existing outcome") {
        const Vec goal = Fixture::truth({0.5, 0.5});
        InversePrediction inv = m.inverse(goal, {}, rng);
        REQUIRE(inv.found);
        const Vec achieved = Fixture::truth(inv.input);
        const double err = std::hypot(achieved[0] - goal[0], achieved[1] - goal[1]);
        REQUIRE(err < 0.08);
    }

    SECTION("zero goal yields a near-zero action effect") {
        InversePrediction inv = m.inverse({0.0, 0.0}, {}, rng);
        REQUIRE(inv.found);
        const Vec achieved = Fixture::truth(inv.input);
        REQUIRE(std::hypot(achieved[0], achieved[1]) < 0.08);
    }
}

TEST_CASE("inverse beats the median random action") {
    Fixture f;
    Rng rng(4);
    LocalModel m = f.trained(250, rng);
    int wins = 0;
    const int trials = 500;
    for (int t = 0; t < trials; ++t) {
        const Vec goal{rng.uniform(-0.8, 0.8), rng.uniform(-0.45, 0.45)};
        InversePrediction inv = m.inverse(goal, {}, rng);
        REQUIRE(inv.found);
        const Vec got = Fixture::truth(inv.input);
        const double e_model = std::hypot(got[0] - goal[0], got[1] - goal[1]);
        const Vec xr{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec yr = Fixture::truth(xr);
        const double e_rand = std::hypot(yr[0] - goal[0], yr[1] - goal[1]);
        if (e_model < e_rand) ++wins;
    }
    REQUIRE(wins > trials / 2);
}

TEST_CASE("validation competence separates structure from noise") {
    Fixture f;
    Rng rng(5);
    LocalModel structured = f.trained(120, rng);
    REQUIRE(structured.validation_competence() > 0.75);

    // Shuffled action/outcome pairs: same marginals, no relation.
    LocalModel shuffled(f.reg, f.in, f.out, {});
    std::vector<Vec> xs, ys;
    for (int i = 0; i < 120; ++i)
        xs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    for (const auto& x : xs) ys.push_back(Fixture::truth(x));
    rng.shuffle(ys);
    std::vector<SampleRef> refs;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        EpisodeRecord r;
        r.action_space = f.in;
        r.action = xs[i];
        r.outcomes.resize(f.reg.size());
        r.context.resize(f.reg.size());
        r.outcomes[static_cast<std::size_t>(f.out)] = ys[i];
        r.context[static_cast<std::size_t>(f.out)] = {0.0, 0.0};
        f.data.append(r);
        refs.push_back({static_cast<long>(f.data.size() - 1), 1, -1});
    }
    shuffled.add_samples(f.data, f.reg, refs);
    REQUIRE(shuffled.validation_competence() < 0.4);
}

TEST_CASE("trusted radius tracks achievable outcome magnitudes") {
    Fixture f;
    Rng rng(6);
    LocalModel m = f.trained(200, rng);
    const double r = m.trusted_radius();
    REQUIRE(r > 0.1);
    REQUIRE(r < 1.0);
}

TEST_CASE("forward prediction matches a simulator rollout oracle") {
    // Train a wheel -> robot displacement model with LIDAR context from a
    // random walk, then compare its prediction for a straight command with
    // the simulator's ground truth from the same context.
    WorldConfig cfg;
    World w(cfg);
    Dataset data(w.registry());
    std::vector<ContextRole> roles(1);
    roles[0].binding = ContextRole::Binding::Fixed;
    roles[0].fixed_space = w.lidar_space();
    roles[0].property = "lidar";
    LocalModel m(w.registry(), w.wheel_space(), w.position_space(0), roles);

    // Episodic collection, as the explorer produces it: short walks from
    // repeated resets keep pose coverage dense around the start region.
    Rng rng(9);
    WorldState query_state = w.reset(42);
    std::vector<SampleRef> refs;
    long idx = 0;
    for (int episode = 0; episode < 10; ++episode) {
        WorldState s = w.reset(42);
        for (int i = 0; i < 20; ++i) {
            Vec cmd{rng.uniform(-1, 1), rng.uniform(-1, 1)};
            WorldState t = w.step(s, cmd);
            EpisodeRecord rec;
            rec.action_space = w.wheel_space();
            rec.action = cmd;
            rec.context = w.observe(s);
            Observation oa = w.observe(t);
            rec.outcomes.resize(rec.context.size());
            for (std::size_t sp = 0; sp < rec.context.size(); ++sp) {
                rec.outcomes[sp].resize(rec.context[sp].size());
                for (std::size_t k = 0; k < rec.context[sp].size(); ++k)
                    rec.outcomes[sp][k] = oa[sp][k] - rec.context[sp][k];
            }
            data.append(rec);
            refs.push_back({idx++, 0, -1});
            if (episode == 5 && i == 2) query_state = t;
            s = t;
        }
    }
    m.add_samples(data, w.registry(), refs);

    // Median relative error across a fresh rollout of query states.
    const Vec cmd{0.5, 0.5};
    Rng qr(77);
    WorldState s = query_state;
    std::vector<double> rel;
    for (int i = 0; i < 40; ++i) {
        Observation ctx_obs = w.observe(s);
        Vec ctx;
        REQUIRE(m.live_context(w.registry(), ctx_obs, 0, -1, ctx));
        ForwardPrediction p = m.forward(cmd, ctx);
        WorldState after = w.step(s, cmd);
        const Vec truth{after.robot.xy.x - s.robot.xy.x,
                        after.robot.xy.y - s.robot.xy.y};
        const double err = std::hypot(p.outcome[0] - truth[0], p.outcome[1] - truth[1]);
        rel.push_back(err / std::hypot(truth[0], truth[1]));
        s = w.step(s, {qr.uniform(-1, 1), qr.uniform(-1, 1)});
    }
    std::sort(rel.begin(), rel.end());
    REQUIRE(rel[rel.size() / 2] <= 0.2);
}
