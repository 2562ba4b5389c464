#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "curio/world.hpp"

using namespace curio;

namespace {

bool states_equal(const WorldState& a, const WorldState& b) {
    if (a.robot.xy.x != b.robot.xy.x || a.robot.xy.y != b.robot.xy.y ||
        a.robot.theta != b.robot.theta)
        return false;
    if (a.object_xy.size() != b.object_xy.size()) return false;
    for (std::size_t i = 0; i < a.object_xy.size(); ++i)
        if (a.object_xy[i].x != b.object_xy[i].x || a.object_xy[i].y != b.object_xy[i].y)
            return false;
    return true;
}

// Independent LIDAR oracle: quadratic-formula circle hits plus per-wall
// plane intersections, written against the geometric definitions rather
// than the simulator's helpers.
double lidar_oracle(const World& w, const WorldState& s, int ray) {
    const auto& cfg = w.config();
    const double ang = s.robot.theta + 2.0 * M_PI * ray / cfg.lidar_rays;
    const double dx = std::cos(ang), dy = std::sin(ang);
    double best = cfg.lidar_max_range;
    const double W = cfg.room_width / 2.0, H = cfg.room_height / 2.0;
    const double ox = s.robot.xy.x, oy = s.robot.xy.y;
    for (double wall : {W, -W}) {
        if (dx != 0.0) {
            const double t = (wall - ox) / dx;
            const double y = oy + t * dy;
            if (t > 0 && y >= -H - 1e-12 && y <= H + 1e-12) best = std::min(best, t);
        }
    }
    for (double wall : {H, -H}) {
        if (dy != 0.0) {
            const double t = (wall - oy) / dy;
            const double x = ox + t * dx;
            if (t > 0 && x >= -W - 1e-12 && x <= W + 1e-12) best = std::min(best, t);
        }
    }
    for (std::size_t i = 0; i < w.objects().size(); ++i) {
        const double cx = s.object_xy[i].x, cy = s.object_xy[i].y;
        const double r = w.objects()[i].radius;
        const double fx = ox - cx, fy = oy - cy;
        const double b = 2.0 * (fx * dx + fy * dy);
        const double c = fx * fx + fy * fy - r * r;
        const double disc = b * b - 4.0 * c;
        if (disc < 0) continue;
        const double t = (-b - std::sqrt(disc)) / 2.0;
        if (t > 1e-12) best = std::min(best, t);
    }
    return best;
}

}  // namespace

TEST_CASE("reset is deterministic and matches the setup contract") {
    World w;
    WorldState a = w.reset(7);
    auto objs_a = w.objects();
    WorldState b = w.reset(7);
    REQUIRE(states_equal(a, b));
    for (std::size_t i = 0; i < objs_a.size(); ++i) {
        REQUIRE(objs_a[i].radius == w.objects()[i].radius);
        REQUIRE(objs_a[i].color == w.objects()[i].color);
    }

    for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
        WorldState s = w.reset(seed);
        REQUIRE(s.robot.xy.x == 0.0);
        REQUIRE(s.robot.xy.y == 0.0);
        REQUIRE(s.robot.theta == 0.0);
        REQUIRE(s.object_xy.size() == 9);
        int mobile = 0;
        for (const auto& o : w.objects()) mobile += o.mobile ? 1 : 0;
        REQUIRE(mobile == 6);
    }
}

TEST_CASE("mobility classes follow the color convention") {
    World w;
    w.reset(3);
    for (const auto& o : w.objects()) {
        if (o.mobile) {
            REQUIRE(o.color[1] > o.color[0]);  // green dominant
            REQUIRE(std::isfinite(o.push_threshold));
        } else {
            REQUIRE(o.color[0] > o.color[1]);  // red dominant
            REQUIRE(std::isinf(o.push_threshold));
        }
    }
}

TEST_CASE("push threshold grows with radius and height") {
    WorldConfig cfg;
    const double t_small = cfg.push_threshold_coeff * 0.1 * 0.1;
    const double t_big = cfg.push_threshold_coeff * 0.5 * 0.6;
    REQUIRE(t_big > t_small);
}

TEST_CASE("differential drive kinematics") {
    WorldConfig cfg;
    cfg.num_objects = 0;
    cfg.num_mobile = 0;
    World w(cfg);
    WorldState s = w.reset(1);

    SECTION("zero command leaves the pose unchanged") {
        WorldState t = w.step(s, {0.0, 0.0});
        REQUIRE(t.robot.xy.x == s.robot.xy.x);
        REQUIRE(t.robot.xy.y == s.robot.xy.y);
        REQUIRE(t.robot.theta == s.robot.theta);
    }

    SECTION("symmetric command is a straight line along theta") {
        WorldState t = w.step(s, {0.6, 0.6});
        REQUIRE(t.robot.theta == Catch::Approx(0.0));
        REQUIRE(t.robot.xy.x == Catch::Approx(0.6 * cfg.max_wheel_speed * cfg.step_duration));
        REQUIRE(t.robot.xy.y == Catch::Approx(0.0).margin(1e-12));
    }

    SECTION("antisymmetric command rotates in place") {
        WorldState t = w.step(s, {0.5, -0.5});
        REQUIRE(t.robot.xy.x == Catch::Approx(0.0).margin(1e-9));
        REQUIRE(t.robot.xy.y == Catch::Approx(0.0).margin(1e-9));
        REQUIRE(std::fabs(t.robot.theta) > 0.1);
    }

    SECTION("out-of-range command clamps with a warning") {
        const long before = w.clamp_warnings();
        w.step(s, {4.0, 4.0});
        REQUIRE(w.clamp_warnings() == before + 1);
    }
}

TEST_CASE("determinism of full trajectories") {
    World w1, w2;
    WorldState a = w1.reset(11), b = w2.reset(11);
    Rng r1(5), r2(5);
    for (int i = 0; i < 50; ++i) {
        Vec cmd{r1.uniform(-1, 1), r1.uniform(-1, 1)};
        Vec cmd2{r2.uniform(-1, 1), r2.uniform(-1, 1)};
        a = w1.step(a, cmd);
        b = w2.step(b, cmd2);
        REQUIRE(states_equal(a, b));
    }
}

TEST_CASE("red objects never move") {
    World w;
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        WorldState s = w.reset(100 + static_cast<std::uint64_t>(trial));
        std::vector<Vec2> red_at;
        for (std::size_t i = 0; i < w.objects().size(); ++i)
            if (!w.objects()[i].mobile) red_at.push_back(s.object_xy[i]);
        for (int step = 0; step < 120; ++step)
            s = w.step(s, {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        std::size_t k = 0;
        for (std::size_t i = 0; i < w.objects().size(); ++i) {
            if (w.objects()[i].mobile) continue;
            REQUIRE(s.object_xy[i].x == red_at[k].x);
            REQUIRE(s.object_xy[i].y == red_at[k].y);
            ++k;
        }
    }
}

TEST_CASE("driving into a fixed object leaves it in place and blocks the robot") {
    WorldConfig cfg;
    cfg.num_objects = 1;
    cfg.num_mobile = 0;
    World w(cfg);
    WorldState s = w.reset(2);
    // Aim straight at the object.
    const Vec2 obj = s.object_xy[0];
    s.robot.theta = std::atan2(obj.y, obj.x);
    for (int i = 0; i < 30; ++i) s = w.step(s, {1.0, 1.0});
    REQUIRE(s.object_xy[0].x == obj.x);
    REQUIRE(s.object_xy[0].y == obj.y);
    const double gap = dist(s.robot.xy, s.object_xy[0]);
    REQUIRE(gap >= w.objects()[0].radius + cfg.robot_radius - 1e-9);
}

TEST_CASE("room contains every pose after arbitrary commands") {
    World w;
    Rng rng(23);
    WorldState s = w.reset(5);
    const Rect room = w.config().room();
    for (int i = 0; i < 300; ++i) {
        s = w.step(s, {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        REQUIRE(room.contains(s.robot.xy));
        for (const auto& p : s.object_xy) REQUIRE(room.contains(p));
    }
}

TEST_CASE("mobile object displacement is monotone in push threshold") {
    // Same geometry, sweep the threshold coefficient: displacement of the
    // pushed object must not increase as pushing gets harder.
    double prev = std::numeric_limits<double>::infinity();
    for (double coeff : {0.5, 2.0, 8.0, 30.0}) {
        WorldConfig cfg;
        cfg.num_objects = 1;
        cfg.num_mobile = 1;
        cfg.push_threshold_coeff = coeff;
        World w(cfg);
        WorldState s = w.reset(4);
        const Vec2 start = s.object_xy[0];
        s.robot.theta = std::atan2(start.y, start.x);
        for (int i = 0; i < 20; ++i) s = w.step(s, {0.6, 0.6});
        const double moved = dist(s.object_xy[0], start);
        REQUIRE(moved <= prev + 1e-9);
        prev = moved;
    }
}

TEST_CASE("observe is pure and reports the documented spaces") {
    World w;
    WorldState s = w.reset(9);
    Observation a = w.observe(s);
    Observation b = w.observe(s);
    REQUIRE(a == b);

    const auto& reg = w.registry();
    const Vec& robot_pos = a[static_cast<std::size_t>(w.position_space(0))];
    REQUIRE(robot_pos == Vec{0.0, 0.0});

    // Relative position of each object equals object minus robot position
    // (world frame default).
    for (int e = 1; e < w.num_entities(); ++e) {
        const Vec& op = a[static_cast<std::size_t>(w.position_space(e))];
        const Vec& rel = a[static_cast<std::size_t>(w.relpos_space(e))];
        REQUIRE(rel[0] == Catch::Approx(op[0] - 0.0));
        REQUIRE(rel[1] == Catch::Approx(op[1] - 0.0));
    }
    REQUIRE(reg.at(w.lidar_space()).context_only);
}

TEST_CASE("robot frame relative positions rotate with theta") {
    WorldConfig cfg;
    cfg.relative_in_robot_frame = true;
    World w(cfg);
    WorldState s = w.reset(9);
    s.robot.theta = M_PI / 2.0;
    Observation o = w.observe(s);
    for (int e = 1; e < w.num_entities(); ++e) {
        const Vec& op = o[static_cast<std::size_t>(w.position_space(e))];
        const Vec& rel = o[static_cast<std::size_t>(w.relpos_space(e))];
        const Vec2 expect = rotated(Vec2{op[0], op[1]} - s.robot.xy, -s.robot.theta);
        REQUIRE(rel[0] == Catch::Approx(expect.x).margin(1e-12));
        REQUIRE(rel[1] == Catch::Approx(expect.y).margin(1e-12));
    }
}

TEST_CASE("lidar matches the analytic oracle") {
    SECTION("empty room from the center") {
        WorldConfig cfg;
        cfg.num_objects = 0;
        cfg.num_mobile = 0;
        World w(cfg);
        WorldState s = w.reset(0);
        LidarScan scan = w.lidar(s);
        for (int k = 0; k < cfg.lidar_rays; ++k)
            REQUIRE(scan.ranges[static_cast<std::size_t>(k)] ==
                    Catch::Approx(lidar_oracle(w, s, k)).margin(1e-9));
    }

    SECTION("object directly ahead") {
        WorldConfig cfg;
        cfg.num_objects = 1;
        cfg.num_mobile = 1;
        World w(cfg);
        WorldState s = w.reset(12);
        const Vec2 obj = s.object_xy[0];
        s.robot.theta = std::atan2(obj.y, obj.x);
        LidarScan scan = w.lidar(s);
        const double expect = dist(s.robot.xy, obj) - w.objects()[0].radius;
        REQUIRE(scan.ranges[0] == Catch::Approx(expect).margin(1e-9));
    }

    SECTION("100 randomized scenes within 1e-6") {
        Rng rng(31);
        World w;
        for (int trial = 0; trial < 100; ++trial) {
            WorldState s = w.reset(500 + static_cast<std::uint64_t>(trial));
            // keep the sampled pose outside every object footprint
            for (int tries = 0; tries < 100; ++tries) {
                const Vec2 p{rng.uniform(-3.5, 3.5), rng.uniform(-2.5, 2.5)};
                bool free = true;
                for (std::size_t i = 0; i < s.object_xy.size(); ++i)
                    if (dist(p, s.object_xy[i]) <= w.objects()[i].radius + 1e-3) free = false;
                if (free) {
                    s.robot.xy = p;
                    break;
                }
            }
            s.robot.theta = rng.uniform(-M_PI, M_PI);
            LidarScan scan = w.lidar(s);
            for (int k = 0; k < w.config().lidar_rays; ++k)
                REQUIRE(scan.ranges[static_cast<std::size_t>(k)] ==
                        Catch::Approx(lidar_oracle(w, s, k)).margin(1e-6));
        }
    }

    SECTION("ranges clip to max range") {
        WorldConfig cfg;
        cfg.num_objects = 0;
        cfg.num_mobile = 0;
        cfg.lidar_max_range = 2.0;
        World w(cfg);
        WorldState s = w.reset(0);
        LidarScan scan = w.lidar(s);
        for (double r : scan.ranges) REQUIRE(r <= 2.0 + 1e-12);
    }
}
