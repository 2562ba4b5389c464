#include <catch2/catch_amalgamated.hpp>

#include "curio/dataset.hpp"
#include "curio/world.hpp"

using namespace curio;

namespace {

EpisodeRecord make_record(const World& w, const WorldState& before,
                          const WorldState& after, const Vec& cmd,
                          long episode, long iter) {
    EpisodeRecord rec;
    rec.action_space = w.wheel_space();
    rec.action = cmd;
    Observation ob = w.observe(before);
    Observation oa = w.observe(after);
    rec.context = ob;
    rec.outcomes.resize(ob.size());
    for (std::size_t s = 0; s < ob.size(); ++s) {
        rec.outcomes[s].resize(ob[s].size());
        for (std::size_t k = 0; k < ob[s].size(); ++k)
            rec.outcomes[s][k] = oa[s][k] - ob[s][k];
    }
    rec.episode_id = episode;
    rec.iteration_index = iter;
    return rec;
}

}  // namespace

TEST_CASE("append stores retrievable records") {
    World w;
    Dataset d(w.registry());
    WorldState s = w.reset(1);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        Vec cmd{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        WorldState t = w.step(s, cmd);
        d.append(make_record(w, s, t, cmd, 0, i));
        s = t;
    }
    REQUIRE(d.size() == 100);
}

TEST_CASE("self nearest neighbor has distance zero") {
    World w;
    Dataset d(w.registry());
    WorldState s = w.reset(2);
    Rng rng(4);
    EpisodeRecord probe;
    for (int i = 0; i < 20; ++i) {
        Vec cmd{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        WorldState t = w.step(s, cmd);
        EpisodeRecord rec = make_record(w, s, t, cmd, 0, i);
        if (i == 13) probe = rec;
        d.append(rec);
        s = t;
    }
    const long hit = d.nearest(probe.action, probe.context);
    REQUIRE(hit == 13);
}

TEST_CASE("malformed records are rejected") {
    World w;
    Dataset d(w.registry());
    WorldState s = w.reset(1);
    WorldState t = w.step(s, {0.5, 0.5});
    EpisodeRecord rec = make_record(w, s, t, {0.5, 0.5}, 0, 0);

    SECTION("missing outcome space") {
        rec.outcomes[static_cast<std::size_t>(w.position_space(0))].clear();
        REQUIRE_THROWS(d.append(rec));
    }
    SECTION("wrong action dimension") {
        rec.action = {0.5};
        REQUIRE_THROWS(d.append(rec));
    }
    SECTION("non-finite outcome") {
        rec.outcomes[static_cast<std::size_t>(w.position_space(0))][0] =
            std::numeric_limits<double>::quiet_NaN();
        REQUIRE_THROWS(d.append(rec));
    }
}

TEST_CASE("context chaining holds across consecutive records") {
    World w;
    Dataset d(w.registry());
    WorldState s = w.reset(7);
    Rng rng(8);
    Observation prev_ctx, prev_out;
    for (int i = 0; i < 60; ++i) {
        Vec cmd{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        WorldState t = w.step(s, cmd);
        EpisodeRecord rec = make_record(w, s, t, cmd, 0, i);
        if (i > 0) {
            for (const auto& sp : w.registry().all()) {
                if (sp.is_primitive()) continue;
                const auto si = static_cast<std::size_t>(sp.id);
                for (std::size_t k = 0; k < rec.context[si].size(); ++k)
                    REQUIRE(rec.context[si][k] ==
                            Catch::Approx(prev_ctx[si][k] + prev_out[si][k]).margin(1e-9));
            }
        }
        prev_ctx = rec.context;
        prev_out = rec.outcomes;
        d.append(rec);
        s = t;
    }
}
