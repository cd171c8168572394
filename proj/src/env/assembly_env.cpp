#include "skillforge/env/assembly_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "skillforge/common/error.hpp"

namespace skillforge::env {
namespace {

// Poses whose deepest sample is within this distance of the boundary count as
// touching, not penetrating.
constexpr double kContactSlack = 1e-9;
constexpr int kResetTries = 100;

Pose operator+(const Pose& a, const Pose& b) { return {a.x + b.x, a.y + b.y, a.theta + b.theta}; }
Pose operator-(const Pose& a, const Pose& b) { return {a.x - b.x, a.y - b.y, a.theta - b.theta}; }
Pose scaled(const Pose& p, double s) { return {p.x * s, p.y * s, p.theta * s}; }

double& axis(Pose& p, int i) { return i == 0 ? p.x : (i == 1 ? p.y : p.theta); }
double axis(const Pose& p, int i) { return i == 0 ? p.x : (i == 1 ? p.y : p.theta); }

Vec2 to_local(const Pose& pose, Vec2 world) {
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  const double dx = world.x - pose.x, dy = world.y - pose.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

}  // namespace

void CurriculumState::validate() const {
  if (max_level < 0 || level < 0 || level > max_level) {
    throw InvalidArgument("curriculum level out of range");
  }
  if (!(promote_threshold >= 0.0 && promote_threshold <= 1.0 && demote_threshold >= 0.0 &&
        demote_threshold <= 1.0 && promote_threshold > demote_threshold)) {
    throw InvalidArgument("curriculum thresholds must satisfy 0 <= demote < promote <= 1");
  }
  if (window_size == 0) throw InvalidArgument("curriculum window must be non-empty");
}

CurriculumState curriculum_update(CurriculumState curr, bool episode_success) {
  curr.window.push_back(episode_success);
  while (curr.window.size() > curr.window_size) curr.window.pop_front();
  if (curr.window.size() < curr.window_size) return curr;
  const double mean =
      static_cast<double>(std::count(curr.window.begin(), curr.window.end(), true)) /
      static_cast<double>(curr.window.size());
  int next = curr.level;
  if (mean >= curr.promote_threshold) {
    next = std::min(curr.level + 1, curr.max_level);
  } else if (mean <= curr.demote_threshold) {
    next = std::max(curr.level - 1, 0);
  }
  if (next != curr.level) {
    curr.level = next;
    curr.window.clear();
  }
  return curr;
}

double pose_distance(const Pose& a, const Pose& b, double angle_scale) {
  const double dt = angle_scale * (a.theta - b.theta);
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + dt * dt);
}

double distance_to_path(const Pose& pose, const std::vector<Pose>& path, double angle_scale) {
  if (path.empty()) return 0.0;
  const double p[3] = {pose.x, pose.y, angle_scale * pose.theta};
  double best = pose_distance(pose, path.front(), angle_scale);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double a[3] = {path[i].x, path[i].y, angle_scale * path[i].theta};
    const double b[3] = {path[i + 1].x, path[i + 1].y, angle_scale * path[i + 1].theta};
    double ab2 = 0.0, apab = 0.0;
    for (int k = 0; k < 3; ++k) {
      ab2 += (b[k] - a[k]) * (b[k] - a[k]);
      apab += (p[k] - a[k]) * (b[k] - a[k]);
    }
    const double t = ab2 > 0.0 ? std::clamp(apab / ab2, 0.0, 1.0) : 0.0;
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double q = a[k] + t * (b[k] - a[k]) - p[k];
      d2 += q * q;
    }
    best = std::min(best, std::sqrt(d2));
  }
  return best;
}

AssemblyEnv::AssemblyEnv(TaskSpec task, EnvConfig config)
    : task_(std::move(task)), config_(config) {
  task_.validate();
  if (config_.horizon < 1 || config_.substeps < 1 || config_.curriculum_levels < 1) {
    throw InvalidArgument("invalid environment config");
  }
  socket_ = socket_polygon(task_);
  plug_samples_ = perimeter_samples(task_.plug_profile, config_.perimeter_points);
  // Outer block corners (first three and last vertex) can never reach the plug.
  socket_corners_.assign(socket_.begin() + 3, socket_.end() - 1);
  const std::size_t wall_len = (socket_.size() - 4) / 2;
  right_wall_.assign(socket_.begin() + 3, socket_.begin() + 3 + static_cast<std::ptrdiff_t>(wall_len));
  std::reverse(right_wall_.begin(), right_wall_.end());
  for (const auto& v : task_.plug_profile) plug_radius_sq_ = std::max(plug_radius_sq_, v.x * v.x + v.y * v.y);
}

bool AssemblyEnv::in_socket_solid(Vec2 p) const {
  const double floor_y = right_wall_.front().y;
  if (p.y >= 0.0 || p.y <= socket_.front().y || std::abs(p.x) >= task_.socket_width) return false;
  if (p.y < floor_y) return true;
  // Cavity half-width at this height; on a ledge take the wider side.
  double half = right_wall_.back().x;
  for (std::size_t i = 0; i + 1 < right_wall_.size(); ++i) {
    const Vec2 a = right_wall_[i], b = right_wall_[i + 1];
    if (p.y >= a.y && p.y <= b.y) {
      half = b.y > a.y ? a.x + (b.x - a.x) * (p.y - a.y) / (b.y - a.y) : std::max(a.x, b.x);
      if (p.y < b.y) break;
    }
  }
  return std::abs(p.x) > half;
}

double AssemblyEnv::action_bound() const { return config_.action_bound_frac * task_.socket_width; }

double AssemblyEnv::lift_height() const { return task_.init_radius + 0.1 * task_.socket_width; }

Pose AssemblyEnv::workspace_lo() const {
  return {-task_.socket_width, -task_.socket_depth, -0.6};
}

Pose AssemblyEnv::workspace_hi() const {
  return {task_.socket_width, lift_height() + 0.5 * task_.socket_width, 0.6};
}

Pose AssemblyEnv::clamp_to_workspace(Pose p) const {
  const Pose lo = workspace_lo(), hi = workspace_hi();
  return {std::clamp(p.x, lo.x, hi.x), std::clamp(p.y, lo.y, hi.y),
          std::clamp(p.theta, lo.theta, hi.theta)};
}

Pose AssemblyEnv::start_waypoint(int level) const {
  const int top = max_level();
  level = std::clamp(level, 0, top);
  const double bottom = task_.goal_pose.y + 2.0 * position_tolerance();
  const double frac = top == 0 ? 1.0 : static_cast<double>(level) / top;
  return {task_.goal_pose.x, bottom + frac * (lift_height() - bottom), task_.goal_pose.theta};
}

void AssemblyEnv::set_imitation_paths(std::vector<std::vector<Pose>> reversed_paths) {
  imitation_paths_ = std::move(reversed_paths);
}

bool AssemblyEnv::is_free(const Pose& pose) const {
  const double c = std::cos(pose.theta), sn = std::sin(pose.theta);
  for (const auto& l : plug_samples_) {
    const Vec2 w{pose.x + c * l.x - sn * l.y, pose.y + sn * l.x + c * l.y};
    if (in_socket_solid(w) && distance_to_boundary(w, socket_) > kContactSlack) return false;
  }
  for (const auto& corner : socket_corners_) {
    const double dx = corner.x - pose.x, dy = corner.y - pose.y;
    if (dx * dx + dy * dy > plug_radius_sq_) continue;
    const Vec2 l{c * dx + sn * dy, -sn * dx + c * dy};
    if (contains(task_.plug_profile, l) &&
        distance_to_boundary(l, task_.plug_profile) > kContactSlack) {
      return false;
    }
  }
  return true;
}

double AssemblyEnv::penetration_depth(const Pose& pose) const {
  double depth = 0.0;
  for (const auto& local : plug_samples_) depth = std::max(depth, penetration(socket_, apply(pose, local)));
  for (const auto& corner : socket_corners_) {
    depth = std::max(depth, penetration(task_.plug_profile, to_local(pose, corner)));
  }
  return depth;
}

double AssemblyEnv::free_fraction(const Pose& from, const Pose& delta) const {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < config_.bisection_iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (is_free(from + scaled(delta, mid))) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

bool AssemblyEnv::move(Pose& pose, const Pose& delta) const {
  if (is_free(pose + delta)) {
    pose = pose + delta;
    return false;
  }
  const double t = free_fraction(pose, delta);
  pose = pose + scaled(delta, t);
  const Pose rest = scaled(delta, 1.0 - t);

  // Axes that cannot advance alone are pressed against a surface; the others
  // slide, slowed by friction.
  Pose slide = rest;
  for (int a = 0; a < 3; ++a) {
    Pose probe_delta{};
    axis(probe_delta, a) = axis(rest, a);
    if (axis(probe_delta, a) != 0.0 && !is_free(pose + probe_delta)) axis(slide, a) = 0.0;
  }
  slide = scaled(slide, 1.0 / (1.0 + task_.friction));
  if (slide.x == 0.0 && slide.y == 0.0 && slide.theta == 0.0) return true;
  if (is_free(pose + slide)) {
    pose = pose + slide;
  } else {
    pose = pose + scaled(slide, free_fraction(pose, slide));
  }
  return true;
}

EnvState AssemblyEnv::reset(Rng& rng, const CurriculumState* curriculum) const {
  const int level = curriculum ? std::clamp(curriculum->level, 0, max_level()) : max_level();
  const Pose start = start_waypoint(level);
  const double frac = max_level() == 0 ? 1.0 : static_cast<double>(level) / max_level();
  double radius = task_.init_radius * frac;
  double angle = task_.init_angle_range * frac;
  if (start.y < task_.init_radius) {
    // Starting inside or at the mouth: keep the perturbation within the gap.
    const double reach = task_.plug_max_width() / 2.0 + task_.plug_height();
    radius = std::min(radius, task_.clearance / 4.0);
    angle = std::min(angle, task_.clearance / (4.0 * reach));
  }
  for (int attempt = 0; attempt < kResetTries; ++attempt) {
    const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double th = angle > 0.0 ? uniform(rng, -angle, angle) : 0.0;
    const Pose pose = clamp_to_workspace({start.x + r * std::cos(phi), start.y + r * std::sin(phi),
                                          start.theta + th});
    if (!is_free(pose)) continue;
    EnvState s;
    s.pose = pose;
    s.goal = task_.goal_pose;
    s.curriculum_level = level;
    s.start_pose = pose;
    if (!imitation_paths_.empty()) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < imitation_paths_.size(); ++i) {
        const double d = pose_distance(pose, imitation_paths_[i].front(), angle_scale());
        if (d < best) {
          best = d;
          s.imitation_path = static_cast<int>(i);
        }
      }
    }
    return s;
  }
  throw TaskInfeasible(task_.id + ": no penetration-free start pose in 100 tries");
}

StepResult AssemblyEnv::step(const EnvState& state, std::span<const double> action) const {
  if (action.size() != kActionDim) throw InvalidArgument("step: action must have 3 components");
  for (double a : action) {
    if (std::isnan(a)) throw InvalidArgument("step: NaN in action");
  }
  const double bound = action_bound();
  const Pose command{std::clamp(action[0], -bound, bound), std::clamp(action[1], -bound, bound),
                     std::clamp(action[2], -bound, bound)};
  const Pose delta = clamp_to_workspace(state.pose + command) - state.pose;
  const Pose sub = scaled(delta, 1.0 / config_.substeps);

  StepResult out;
  out.next = state;
  Pose pose = state.pose;
  bool contact = false;
  for (int k = 0; k < config_.substeps; ++k) contact = move(pose, sub) || contact;
  out.next.pose = pose;
  out.next.velocity = pose - state.pose;
  out.next.contact = contact;
  out.next.step_index = state.step_index + 1;

  const bool success = is_success(pose);
  auto& tr = out.transition;
  tr.state = dynamics_state(state);
  tr.action = {command.x, command.y, command.theta};
  tr.reward = reward(out.next);
  tr.next_state = dynamics_state(out.next);
  tr.success = success;
  tr.done = success || out.next.step_index >= config_.horizon;
  return out;
}

bool AssemblyEnv::is_success(const Pose& pose) const {
  const double eps = position_tolerance();
  return std::abs(pose.x - task_.goal_pose.x) <= eps &&
         std::abs(pose.y - task_.goal_pose.y) <= eps &&
         std::abs(pose.theta - task_.goal_pose.theta) <= config_.angle_tolerance;
}

double AssemblyEnv::dense_reward(const EnvState& next) const {
  const auto& w = config_.weights;
  double r = -w.distance * pose_distance(next.pose, task_.goal_pose, angle_scale());
  r -= w.penetration * penetration_depth(next.pose);
  if (next.imitation_path >= 0 &&
      static_cast<std::size_t>(next.imitation_path) < imitation_paths_.size()) {
    r -= w.imitation * distance_to_path(next.pose, imitation_paths_[next.imitation_path],
                                        angle_scale());
  }
  // The difficulty bonus is paid only on success; paid every step it turns
  // hovering next to the goal into a better deal than finishing.
  if (is_success(next.pose)) r += w.success + w.curriculum * next.curriculum_level;
  return r;
}

double AssemblyEnv::sparse_reward(const EnvState& next) const {
  return is_success(next.pose) ? 1.0 : 0.0;
}

double AssemblyEnv::reward(const EnvState& next) const {
  return task_.reward_mode == RewardMode::Dense ? dense_reward(next) : sparse_reward(next);
}

ObsPair AssemblyEnv::observe(const EnvState& state, Rng* noise) const {
  Pose seen = state.pose;
  if (task_.obs_noise_std > 0.0 && noise != nullptr) {
    seen.x += gaussian(*noise, 0.0, task_.obs_noise_std);
    seen.y += gaussian(*noise, 0.0, task_.obs_noise_std);
    seen.theta += gaussian(*noise, 0.0, task_.obs_noise_std);
  }
  const Pose& g = state.goal;
  ObsPair obs;
  obs.actor.resize(kActorObsDim);
  obs.actor << seen.x, seen.y, seen.theta, g.x, g.y, g.theta, seen.x - g.x, seen.y - g.y,
      seen.theta - g.theta;
  obs.critic.resize(kCriticObsDim);
  // Friction enters as log(1 + mu) to keep the input in a tanh-friendly range.
  obs.critic << obs.actor, state.velocity.x, state.velocity.y, state.velocity.theta,
      std::log1p(task_.friction), state.contact ? 1.0 : 0.0;
  return obs;
}

core::Vec AssemblyEnv::dynamics_state(const EnvState& s) {
  return {s.pose.x, s.pose.y, s.pose.theta, s.velocity.x, s.velocity.y, s.velocity.theta};
}

}  // namespace skillforge::env
