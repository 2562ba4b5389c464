#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "curio/geometry.hpp"
#include "curio/rng.hpp"
#include "curio/spaces.hpp"

namespace curio {

struct WorldConfig {
    double room_width = 8.0;        // meters, room spans [-w/2, w/2]
    double room_height = 6.0;
    double robot_radius = 0.25;
    double robot_height = 0.30;
    double max_wheel_speed = 0.5;   // m/s at |command| = 1
    double step_duration = 1.0;     // seconds per primitive action
    int integration_substeps = 10;

    int lidar_rays = 16;
    double lidar_max_range = 10.0;

    int num_objects = 9;
    int num_mobile = 6;             // first num_mobile objects are green/mobile
    double object_radius_min = 0.1;
    double object_radius_max = 0.5;
    double object_height_min = 0.1;
    double object_height_max = 0.6;
    double object_gap = 0.05;       // min clearance when placing objects

    // Quasi-static push model. The robot's drive force is
    // push_force_coeff * mean(|wheel command|); a mobile object follows the
    // contact when that force exceeds its threshold
    // push_threshold_coeff * radius * height. Object-object pushes compare
    // the pusher's displacement this substep (momentum proxy) scaled by
    // object_push_coeff against the target's threshold; the default scale
    // puts the proxy on per-step displacement units.
    double push_force_coeff = 1.0;
    double push_threshold_coeff = 2.0;
    double object_push_coeff = 10.0;

    // Relative positions reported in the world frame by default; the robot
    // frame variant rotates them by -theta.
    bool relative_in_robot_frame = false;

    // When true LIDAR may only serve as model context, never as a goal space.
    bool lidar_context_only = true;

    // Goal boxes for plan-level displacement goals, per property role.
    double goal_box_position = 2.5;
    double goal_box_relative = 2.5;

    Rect room() const {
        return {-room_width / 2.0, room_width / 2.0,
                -room_height / 2.0, room_height / 2.0};
    }
};

struct ObjectSpec {
    int id = 0;               // entity index (objects start at 1; 0 is the robot)
    double radius = 0.0;
    double height = 0.0;
    std::array<double, 3> color{};  // RGB in [0,1]
    bool mobile = false;
    double push_threshold = 0.0;    // infinite for fixed objects
};

struct Pose {
    Vec2 xy;
    double theta = 0.0;
};

struct WorldState {
    Pose robot;
    std::vector<Vec2> object_xy;
    long step_index = 0;
    std::uint64_t rng_state = 0;  // opaque reset tag, kept for log replay
};

struct LidarScan {
    std::vector<double> ranges;
};

// Dense per-space observation, indexed by SpaceId.
using Observation = std::vector<Vec>;

// Deterministic 2D simulation: differential-drive robot, cylinder objects of
// varying mobility, four walls, LIDAR. reset() regenerates the scene from a
// seed; step() is a pure function of (scene, state, command).
class World {
public:
    explicit World(WorldConfig cfg = {}) : cfg_(cfg) {
        validate_config();
        build_registry();
        // Construct a default scene; callers normally reset(seed) first.
        WorldState s = reset(0);
        (void)s;
    }

    const WorldConfig& config() const { return cfg_; }
    const SpaceRegistry& registry() const { return reg_; }
    const std::vector<ObjectSpec>& objects() const { return objects_; }
    int num_entities() const { return cfg_.num_objects + 1; }

    SpaceId wheel_space() const { return wheel_space_; }
    SpaceId lidar_space() const { return lidar_space_; }
    SpaceId position_space(int entity) const { return pos_spaces_[idx(entity)]; }
    SpaceId relpos_space(int entity) const { return rel_spaces_[idx(entity)]; }

    long clamp_warnings() const { return clamp_warnings_; }

    // Robot at room center facing +x; object placement and physical
    // properties drawn from the configured ranges, resampling overlaps.
    WorldState reset(std::uint64_t seed) {
        Rng rng(seed ^ 0xC001D00Dull);
        objects_.clear();
        WorldState s;
        s.robot = Pose{{0.0, 0.0}, 0.0};
        s.step_index = 0;
        s.rng_state = seed;
        const Rect room = cfg_.room();
        for (int i = 0; i < cfg_.num_objects; ++i) {
            ObjectSpec spec;
            spec.id = i + 1;
            spec.radius = rng.uniform(cfg_.object_radius_min, cfg_.object_radius_max);
            spec.height = rng.uniform(cfg_.object_height_min, cfg_.object_height_max);
            spec.mobile = i < cfg_.num_mobile;
            spec.color = spec.mobile ? sample_green(rng) : sample_red(rng);
            spec.push_threshold = spec.mobile
                ? cfg_.push_threshold_coeff * spec.radius * spec.height
                : std::numeric_limits<double>::infinity();

            Vec2 p;
            bool placed = false;
            for (int tries = 0; tries < 200 && !placed; ++tries) {
                p = {rng.uniform(room.xmin + spec.radius, room.xmax - spec.radius),
                     rng.uniform(room.ymin + spec.radius, room.ymax - spec.radius)};
                placed = fits(p, spec.radius, s);
            }
            if (!placed)
                throw std::runtime_error("world: objects cannot fit in the room");
            objects_.push_back(spec);
            s.object_xy.push_back(p);
        }
        return s;
    }

    // One primitive action: integrate the drive over the step duration and
    // resolve contacts. Out-of-range commands are clamped and counted.
    WorldState step(const WorldState& state, const Vec& wheel_command) const {
        if (wheel_command.size() != 2)
            throw std::invalid_argument("wheel command must have 2 components");
        double l = wheel_command[0], r = wheel_command[1];
        if (l < -1.0 || l > 1.0 || r < -1.0 || r > 1.0) {
            ++clamp_warnings_;
            l = std::clamp(l, -1.0, 1.0);
            r = std::clamp(r, -1.0, 1.0);
        }
        WorldState s = state;
        const double vl = l * cfg_.max_wheel_speed;
        const double vr = r * cfg_.max_wheel_speed;
        const double v = 0.5 * (vl + vr);
        const double omega = (vr - vl) / (2.0 * cfg_.robot_radius);
        const double drive_force = cfg_.push_force_coeff * 0.5 * (std::fabs(l) + std::fabs(r));
        const double dt = cfg_.step_duration / cfg_.integration_substeps;
        for (int k = 0; k < cfg_.integration_substeps; ++k) {
            const Vec2 heading{std::cos(s.robot.theta), std::sin(s.robot.theta)};
            Vec2 want = s.robot.xy + heading * (v * dt);
            s.robot.theta = wrap_angle(s.robot.theta + omega * dt);
            resolve_robot_motion(s, want, drive_force);
        }
        s.step_index = state.step_index + 1;
        return s;
    }

    // Absolute values for every registered observable space.
    Observation observe(const WorldState& state) const {
        Observation obs(reg_.size());
        obs[static_cast<std::size_t>(wheel_space_)] = Vec{0.0, 0.0};
        set_entity(obs, kRobotEntity, state.robot.xy, cfg_.robot_radius,
                   cfg_.robot_height, robot_color(), state);
        for (int i = 0; i < cfg_.num_objects; ++i) {
            const auto& spec = objects_[static_cast<std::size_t>(i)];
            set_entity(obs, spec.id, state.object_xy[static_cast<std::size_t>(i)],
                       spec.radius, spec.height, spec.color, state);
        }
        obs[static_cast<std::size_t>(lidar_space_)] = lidar(state).ranges;
        return obs;
    }

    LidarScan lidar(const WorldState& state) const {
        LidarScan scan;
        scan.ranges.resize(static_cast<std::size_t>(cfg_.lidar_rays));
        const Rect room = cfg_.room();
        for (int k = 0; k < cfg_.lidar_rays; ++k) {
            const double ang = state.robot.theta +
                2.0 * M_PI * static_cast<double>(k) / cfg_.lidar_rays;
            const Vec2 dir{std::cos(ang), std::sin(ang)};
            double best = ray_rect_inside(state.robot.xy, dir, room);
            for (int i = 0; i < cfg_.num_objects; ++i) {
                auto hit = ray_circle(state.robot.xy, dir,
                                      state.object_xy[static_cast<std::size_t>(i)],
                                      objects_[static_cast<std::size_t>(i)].radius);
                if (hit && *hit < best) best = *hit;
            }
            scan.ranges[static_cast<std::size_t>(k)] =
                std::min(best, cfg_.lidar_max_range);
        }
        return scan;
    }

private:
    std::size_t idx(int entity) const { return static_cast<std::size_t>(entity); }

    static std::array<double, 3> robot_color() { return {0.3, 0.3, 0.8}; }

    static std::array<double, 3> sample_green(Rng& rng) {
        return {rng.uniform(0.05, 0.25), rng.uniform(0.6, 0.95), rng.uniform(0.05, 0.25)};
    }
    static std::array<double, 3> sample_red(Rng& rng) {
        return {rng.uniform(0.7, 0.95), rng.uniform(0.05, 0.25), rng.uniform(0.05, 0.25)};
    }

    void validate_config() const {
        const Rect room = cfg_.room();
        if (cfg_.num_objects < 0 || cfg_.num_mobile > cfg_.num_objects)
            throw std::invalid_argument("world: inconsistent object counts");
        if (cfg_.object_radius_max * 2.0 >= std::min(room.width(), room.height()) / 2.0)
            throw std::invalid_argument("world: objects too large for the room");
        if (cfg_.lidar_rays < 1) throw std::invalid_argument("world: lidar needs rays");
        // Rough capacity check: total footprint area must fit with headroom.
        const double area = room.width() * room.height();
        const double worst = cfg_.num_objects * M_PI * cfg_.object_radius_max *
                             cfg_.object_radius_max * 4.0;
        if (worst > area)
            throw std::invalid_argument("world: configuration cannot fit objects");
    }

    bool fits(const Vec2& p, double radius, const WorldState& s) const {
        if (dist(p, s.robot.xy) < radius + cfg_.robot_radius + cfg_.object_gap)
            return false;
        for (std::size_t i = 0; i < objects_.size(); ++i) {
            if (dist(p, s.object_xy[i]) <
                radius + objects_[i].radius + cfg_.object_gap)
                return false;
        }
        return true;
    }

    // Moves the robot toward `want`, transferring motion to contacted
    // objects when the drive force beats their thresholds. Walls clamp.
    void resolve_robot_motion(WorldState& s, Vec2 want, double drive_force) const {
        const Rect room = cfg_.room();
        want = room.clamped(want, cfg_.robot_radius);
        // Push or be blocked by each overlapping object, nearest first.
        for (int pass = 0; pass < 4; ++pass) {
            int hit = -1;
            double worst = 0.0;
            for (int i = 0; i < cfg_.num_objects; ++i) {
                const auto& spec = objects_[static_cast<std::size_t>(i)];
                const double pen = spec.radius + cfg_.robot_radius -
                                   dist(want, s.object_xy[static_cast<std::size_t>(i)]);
                if (pen > 1e-12 && pen > worst) {
                    worst = pen;
                    hit = i;
                }
            }
            if (hit < 0) break;
            const auto& spec = objects_[static_cast<std::size_t>(hit)];
            Vec2& obj = s.object_xy[static_cast<std::size_t>(hit)];
            const Vec2 n = normalized(obj - want);
            if (spec.mobile && drive_force > spec.push_threshold) {
                const Vec2 push = n * worst;
                move_object(s, hit, push, drive_force);
                // Leftover overlap (object blocked) pushes the robot back.
                const double pen = spec.radius + cfg_.robot_radius - dist(want, obj);
                if (pen > 1e-12) want -= n * pen;
            } else {
                want -= n * worst;  // object acts as a wall
            }
            want = room.clamped(want, cfg_.robot_radius);
        }
        s.robot.xy = want;
    }

    // Displace object `i`, cascading pushes to objects it contacts. The
    // pusher's displacement is the momentum proxy for downstream thresholds.
    void move_object(WorldState& s, int i, Vec2 delta, double force, int depth = 0) const {
        if (depth > cfg_.num_objects) return;
        const Rect room = cfg_.room();
        const auto& spec = objects_[static_cast<std::size_t>(i)];
        Vec2& pos = s.object_xy[static_cast<std::size_t>(i)];
        Vec2 want = room.clamped(pos + delta, spec.radius);
        for (int j = 0; j < cfg_.num_objects; ++j) {
            if (j == i) continue;
            const auto& other = objects_[static_cast<std::size_t>(j)];
            Vec2& op = s.object_xy[static_cast<std::size_t>(j)];
            const double pen = spec.radius + other.radius - dist(want, op);
            if (pen <= 1e-12) continue;
            const Vec2 n = normalized(op - want);
            const double momentum = norm(want - pos) * cfg_.object_push_coeff;
            if (other.mobile && momentum > other.push_threshold) {
                move_object(s, j, n * pen, force, depth + 1);
                const double left = spec.radius + other.radius - dist(want, op);
                if (left > 1e-12) want -= n * left;
            } else {
                want -= n * pen;
            }
            want = room.clamped(want, spec.radius);
        }
        // Keep clear of the robot footprint.
        const double pen = spec.radius + cfg_.robot_radius - dist(want, s.robot.xy);
        if (pen > 1e-12) want -= normalized(s.robot.xy - want) * pen;
        pos = room.clamped(want, spec.radius);
    }

    void set_entity(Observation& obs, int entity, const Vec2& pos, double radius,
                    double height, const std::array<double, 3>& color,
                    const WorldState& state) const {
        obs[static_cast<std::size_t>(pos_spaces_[idx(entity)])] = Vec{pos.x, pos.y};
        Vec2 rel = pos - state.robot.xy;
        if (cfg_.relative_in_robot_frame) rel = rotated(rel, -state.robot.theta);
        obs[static_cast<std::size_t>(rel_spaces_[idx(entity)])] = Vec{rel.x, rel.y};
        obs[static_cast<std::size_t>(radius_spaces_[idx(entity)])] = Vec{radius};
        obs[static_cast<std::size_t>(height_spaces_[idx(entity)])] = Vec{height};
        obs[static_cast<std::size_t>(color_spaces_[idx(entity)])] =
            Vec{color[0], color[1], color[2]};
        obs[static_cast<std::size_t>(shape_spaces_[idx(entity)])] = Vec{1.0};
    }

    void build_registry() {
        const Rect room = cfg_.room();
        const double step_move = cfg_.max_wheel_speed * cfg_.step_duration;
        SpaceRef wheels;
        wheels.name = "wheel-command";
        wheels.dim = 2;
        wheels.kind = SpaceKind::PrimitiveAction;
        wheels.lo = {-1.0, -1.0};
        wheels.hi = {1.0, 1.0};
        wheel_space_ = reg_.register_space(wheels);

        const int n = num_entities();
        pos_spaces_.resize(static_cast<std::size_t>(n));
        rel_spaces_.resize(static_cast<std::size_t>(n));
        radius_spaces_.resize(static_cast<std::size_t>(n));
        height_spaces_.resize(static_cast<std::size_t>(n));
        color_spaces_.resize(static_cast<std::size_t>(n));
        shape_spaces_.resize(static_cast<std::size_t>(n));
        for (int e = 0; e < n; ++e) {
            const std::string base = e == kRobotEntity ? "robot" : "obj" + std::to_string(e);
            SpaceRef pos;
            pos.name = base + "-position";
            pos.dim = 2;
            pos.property = "position";
            pos.owner = e;
            pos.relative = true;
            pos.lo = {room.xmin, room.ymin};
            pos.hi = {room.xmax, room.ymax};
            pos.step_lo = {-1.2 * step_move, -1.2 * step_move};
            pos.step_hi = {1.2 * step_move, 1.2 * step_move};
            pos.goal_lo = {-cfg_.goal_box_position, -cfg_.goal_box_position};
            pos.goal_hi = {cfg_.goal_box_position, cfg_.goal_box_position};
            pos.context_sigma = 2.0;
            pos_spaces_[idx(e)] = reg_.register_space(pos);

            SpaceRef rel;
            rel.name = base + "-relative-position";
            rel.dim = 2;
            rel.property = "relative-position";
            rel.owner = e;
            rel.relative = true;
            rel.lo = {-room.width(), -room.height()};
            rel.hi = {room.width(), room.height()};
            rel.step_lo = {-2.4 * step_move, -2.4 * step_move};
            rel.step_hi = {2.4 * step_move, 2.4 * step_move};
            rel.goal_lo = {-cfg_.goal_box_relative, -cfg_.goal_box_relative};
            rel.goal_hi = {cfg_.goal_box_relative, cfg_.goal_box_relative};
            rel.context_sigma = 1.0;
            rel_spaces_[idx(e)] = reg_.register_space(rel);

            SpaceRef rad;
            rad.name = base + "-radius";
            rad.dim = 1;
            rad.property = "radius";
            rad.owner = e;
            rad.lo = {0.0};
            rad.hi = {std::max(cfg_.object_radius_max, cfg_.robot_radius)};
            rad.context_sigma = 0.2;
            radius_spaces_[idx(e)] = reg_.register_space(rad);

            SpaceRef hgt;
            hgt.name = base + "-height";
            hgt.dim = 1;
            hgt.property = "height";
            hgt.owner = e;
            hgt.lo = {0.0};
            hgt.hi = {std::max(cfg_.object_height_max, cfg_.robot_height)};
            hgt.context_sigma = 0.25;
            height_spaces_[idx(e)] = reg_.register_space(hgt);

            SpaceRef col;
            col.name = base + "-color";
            col.dim = 3;
            col.property = "color";
            col.owner = e;
            col.lo = {0.0, 0.0, 0.0};
            col.hi = {1.0, 1.0, 1.0};
            col.context_sigma = 0.5;
            color_spaces_[idx(e)] = reg_.register_space(col);

            SpaceRef shp;
            shp.name = base + "-shape";
            shp.dim = 1;
            shp.property = "shape";
            shp.owner = e;
            shp.lo = {0.0};
            shp.hi = {1.0};
            shape_spaces_[idx(e)] = reg_.register_space(shp);
        }

        SpaceRef lid;
        lid.name = "lidar";
        lid.dim = cfg_.lidar_rays;
        lid.property = "lidar";
        lid.owner = kRobotEntity;
        lid.context_only = cfg_.lidar_context_only;
        lid.lo.assign(static_cast<std::size_t>(cfg_.lidar_rays), 0.0);
        lid.hi.assign(static_cast<std::size_t>(cfg_.lidar_rays), cfg_.lidar_max_range);
        lid.context_sigma = 1.5;
        lidar_space_ = reg_.register_space(lid);
    }

    WorldConfig cfg_;
    SpaceRegistry reg_;
    std::vector<ObjectSpec> objects_;
    SpaceId wheel_space_ = kNoSpace;
    SpaceId lidar_space_ = kNoSpace;
    std::vector<SpaceId> pos_spaces_, rel_spaces_, radius_spaces_, height_spaces_,
        color_spaces_, shape_spaces_;
    mutable long clamp_warnings_ = 0;
};

}  // namespace curio
