#pragma once

// Benchmark environments. Grid worlds use actions 0 up, 1 right, 2 down, 3 left; moves into walls or
// off the grid leave the agent in place. Slip eps_p spreads probability eps_p uniformly over the four
// directions, so the intended move happens with probability 1 - eps_p + eps_p / 4.

#include <algorithm>
#include <array>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "credit/control.hpp"
#include "credit/core.hpp"

namespace credit::envs {

/// Environment bundle for policy evaluation.
struct EvalEnv {
  std::string name;
  TabularMdp mdp;
  FeatureMap X;
  TabularPolicy behaviour;
  TabularPolicy target;
};

// ---------------------------------------------------------------------------------------------
// Small chains

/// Deterministic two-state cycle with one feature, x = (1, 2), no rewards.
inline EvalEnv two_state_divergence(double gamma = 0.9) {
  Matrix P(2, 2);
  P << 0, 1, 1, 0;
  TabularMdp mdp({P}, {RewardSpec::point(0.0), RewardSpec::point(0.0)}, Vector::Constant(2, gamma));
  Matrix X(2, 1);
  X << 1, 2;
  auto pi = TabularPolicy::uniform(2, 1);
  return {"two_state_divergence", std::move(mdp), FeatureMap(X), pi, pi};
}

/// Three states with features [1,0], [0,1], [1,1]. Every step pays 1 and enters a gamma = 0 state,
/// followed by a uniform restart, so V = (1, 1, 1).
inline EvalEnv three_state_aliasing() {
  const Matrix P = Matrix::Constant(3, 3, 1.0 / 3.0);
  TabularMdp mdp({P}, std::vector<RewardSpec>(3, RewardSpec::point(1.0)), Vector::Zero(3), Vector::Constant(3, 1.0 / 3.0));
  Matrix X(3, 2);
  X << 1, 0, 0, 1, 1, 1;
  auto pi = TabularPolicy::uniform(3, 1);
  return {"three_state_aliasing", std::move(mdp), FeatureMap(X), pi, pi};
}

/// Five-state chain, actions 0 left / 1 right, self-transitions at the ends, reward +1 on every
/// transition, gamma = (0, 1, 1, 1, 0) with no restart. Behaviour goes left 2/3 of the time, the
/// target goes right 2/3 of the time. Features: e1, e2, e2, e2, e3.
inline EvalEnv five_state_chain() {
  Matrix L = Matrix::Zero(5, 5), R = Matrix::Zero(5, 5);
  for (Eigen::Index s = 0; s < 5; ++s) {
    L(s, std::max<Eigen::Index>(s - 1, 0)) = 1.0;
    R(s, std::min<Eigen::Index>(s + 1, 4)) = 1.0;
  }
  Vector gamma(5);
  gamma << 0, 1, 1, 1, 0;
  TabularMdp mdp({L, R}, std::vector<RewardSpec>(10, RewardSpec::point(1.0)), gamma);
  Matrix X = Matrix::Zero(5, 3);
  X(0, 0) = 1;
  X(1, 1) = X(2, 1) = X(3, 1) = 1;
  X(4, 2) = 1;
  Matrix mu(5, 2), pi(5, 2);
  for (Eigen::Index s = 0; s < 5; ++s) {
    mu.row(s) << 2.0 / 3.0, 1.0 / 3.0;
    pi.row(s) << 1.0 / 3.0, 2.0 / 3.0;
  }
  return {"five_state_chain", std::move(mdp), FeatureMap(X), TabularPolicy(mu), TabularPolicy(pi)};
}

/// One-action chain of n states with a constant discount that moves right with probability p and
/// left otherwise, reflecting at the ends. Tabular features.
inline EvalEnv constant_gamma_chain(std::size_t n = 5, double gamma = 0.9, double p = 0.5) {
  const auto m = static_cast<Eigen::Index>(n);
  Matrix P = Matrix::Zero(m, m);
  for (Eigen::Index s = 0; s < m; ++s) {
    P(s, std::min<Eigen::Index>(s + 1, m - 1)) += p;
    P(s, std::max<Eigen::Index>(s - 1, 0)) += 1.0 - p;
  }
  TabularMdp mdp({P}, std::vector<RewardSpec>(n, RewardSpec::point(0.0)), Vector::Constant(m, gamma));
  auto pi = TabularPolicy::uniform(n, 1);
  return {"constant_gamma_chain", std::move(mdp), FeatureMap::one_hot(n), pi, pi};
}

/// One-action ring; moves clockwise with probability p, counter-clockwise otherwise. Doubly
/// stochastic, so the stationary distribution is uniform.
inline EvalEnv ring_chain(std::size_t n = 4, double gamma = 0.9, double p = 0.7) {
  const auto m = static_cast<Eigen::Index>(n);
  Matrix P = Matrix::Zero(m, m);
  for (Eigen::Index s = 0; s < m; ++s) {
    P(s, (s + 1) % m) += p;
    P(s, (s + m - 1) % m) += 1.0 - p;
  }
  std::vector<RewardSpec> r;
  for (std::size_t s = 0; s < n; ++s) r.push_back(RewardSpec::point(static_cast<double>(s % 2)));
  TabularMdp mdp({P}, std::move(r), Vector::Constant(m, gamma));
  auto pi = TabularPolicy::uniform(n, 1);
  return {"ring_chain", std::move(mdp), FeatureMap::one_hot(n), pi, pi};
}

/// Six-state corridor closed into a ring: hallways at 0 and 3, rooms {1, 2} and {4, 5}.
inline EvalEnv two_room_corridor(double gamma = 0.9, double p = 0.7) {
  auto env = ring_chain(6, gamma, p);
  env.name = "two_room_corridor";
  return env;
}

inline std::vector<bool> two_room_corridor_hallways() { return {true, false, false, true, false, false}; }

/// Binary selectivity: omega = 1 on hallways, 0 elsewhere, and gamma lambda = 1 - omega.
inline SelectivityConfig corridor_selectivity(const std::vector<bool>& hallways) {
  const std::size_t n = hallways.size();
  SelectivityConfig cfg = SelectivityConfig::uniform(n);
  for (std::size_t s = 0; s < n; ++s) cfg.omega(static_cast<Eigen::Index>(s)) = hallways[s] ? 1.0 : 0.0;
  cfg.coupling = Coupling::lambda_from_omega;
  cfg.beta_lambda = 0.0;
  return cfg;
}

/// Random dense MDP without terminals or restarts: rows are normalized uniform draws, gamma and
/// rewards uniform. Policy rows are random too.
inline EvalEnv random_mdp(std::size_t n, std::size_t n_actions, RngStream& rng, double gamma_max = 0.99) {
  const auto m = static_cast<Eigen::Index>(n);
  std::vector<Matrix> kernel;
  for (std::size_t a = 0; a < n_actions; ++a) {
    Matrix P(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) P(i, j) = 0.05 + rng.uniform();
      P.row(i) /= P.row(i).sum();
    }
    kernel.push_back(std::move(P));
  }
  std::vector<RewardSpec> r;
  for (std::size_t k = 0; k < n * n_actions; ++k) r.push_back(RewardSpec::point(2.0 * rng.uniform() - 1.0));
  Vector gamma(m);
  for (Eigen::Index s = 0; s < m; ++s) gamma(s) = gamma_max * rng.uniform();
  Matrix pi(m, static_cast<Eigen::Index>(n_actions));
  for (Eigen::Index s = 0; s < m; ++s) {
    for (Eigen::Index a = 0; a < pi.cols(); ++a) pi(s, a) = 0.05 + rng.uniform();
    pi.row(s) /= pi.row(s).sum();
  }
  TabularPolicy policy(pi);
  TabularMdp mdp(std::move(kernel), std::move(r), gamma);
  return {"random_mdp", std::move(mdp), FeatureMap::one_hot(n), policy, policy};
}

// ---------------------------------------------------------------------------------------------
// Grid worlds

enum GridAction : ActionId { kUp = 0, kRight = 1, kDown = 2, kLeft = 3 };

struct GridSpec {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<bool> walls;     // row-major, height * width
  std::vector<bool> hallways;  // row-major
  std::map<std::size_t, RewardSpec> goals;  // cell -> arrival reward
  double slip = 0.0;

  std::size_t cell(std::size_t row, std::size_t col) const { return row * width + col; }
  std::size_t row_of(std::size_t c) const { return c / width; }
  std::size_t col_of(std::size_t c) const { return c % width; }

  /// State ids for non-wall cells in row-major order.
  std::vector<std::size_t> open_cells() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < width * height; ++c) {
      if (!walls[c]) out.push_back(c);
    }
    return out;
  }
  std::vector<long> cell_to_state() const {
    std::vector<long> m(width * height, -1);
    long k = 0;
    for (std::size_t c = 0; c < width * height; ++c) {
      if (!walls[c]) m[c] = k++;
    }
    return m;
  }
  std::size_t state_of(std::size_t row, std::size_t col) const {
    const long s = cell_to_state().at(cell(row, col));
    if (s < 0) throw DomainError("GridSpec: cell is a wall");
    return static_cast<std::size_t>(s);
  }

  void validate() const {
    if (width == 0 || height == 0) throw DomainError("GridSpec: empty grid");
    detail::require_dims(walls.size(), width * height, "GridSpec walls");
    detail::require_dims(hallways.size(), width * height, "GridSpec hallways");
    if (!(slip >= 0.0 && slip <= 1.0)) throw DomainError("GridSpec: slip must lie in [0, 1]");
    for (const auto& [c, r] : goals) {
      if (c >= walls.size() || walls[c]) throw DomainError("GridSpec: goal on a wall");
    }
    for (std::size_t c = 0; c < walls.size(); ++c) {
      if (hallways[c] && walls[c]) throw DomainError("GridSpec: hallway on a wall");
    }
  }
};

/// Parses '#' wall, '.' floor, 'H' hallway, 'G' goal. Every goal gets `goal_reward`.
inline GridSpec parse_grid(std::string_view text, RewardSpec goal_reward = RewardSpec::point(1.0), double slip = 0.0) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  if (rows.empty()) throw DomainError("parse_grid: empty map");
  GridSpec g;
  g.height = rows.size();
  g.width = rows.front().size();
  g.walls.assign(g.width * g.height, false);
  g.hallways.assign(g.width * g.height, false);
  g.slip = slip;
  for (std::size_t r = 0; r < g.height; ++r) {
    if (rows[r].size() != g.width) throw DomainError("parse_grid: ragged row " + std::to_string(r));
    for (std::size_t c = 0; c < g.width; ++c) {
      const std::size_t k = g.cell(r, c);
      switch (rows[r][c]) {
        case '#': g.walls[k] = true; break;
        case '.': break;
        case 'H': g.hallways[k] = true; break;
        case 'G': g.goals.emplace(k, goal_reward); break;
        default: throw DomainError(std::string("parse_grid: unknown symbol '") + rows[r][c] + "'");
      }
    }
  }
  g.validate();
  return g;
}

inline std::string to_text(const GridSpec& g) {
  std::string out;
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      const std::size_t k = g.cell(r, c);
      out += g.walls[k] ? '#' : g.goals.count(k) ? 'G' : g.hallways[k] ? 'H' : '.';
    }
    out += '\n';
  }
  return out;
}

/// Grid MDP: gamma = 0 on goals and `gamma` elsewhere, goal rewards paid on arrival, restart uniform
/// over `restart_states` (state ids) when nonempty.
inline TabularMdp grid_mdp(const GridSpec& g, double gamma, const std::vector<StateId>& restart_states) {
  g.validate();
  const auto c2s = g.cell_to_state();
  const auto cells = g.open_cells();
  const auto n = static_cast<Eigen::Index>(cells.size());
  static constexpr std::array<int, 4> dr{-1, 0, 1, 0};
  static constexpr std::array<int, 4> dc{0, 1, 0, -1};
  auto move = [&](std::size_t c, std::size_t dir) -> Eigen::Index {
    const long r = static_cast<long>(g.row_of(c)) + dr[dir];
    const long k = static_cast<long>(g.col_of(c)) + dc[dir];
    if (r < 0 || k < 0 || r >= static_cast<long>(g.height) || k >= static_cast<long>(g.width)) return c2s[c];
    const std::size_t c2 = g.cell(static_cast<std::size_t>(r), static_cast<std::size_t>(k));
    return g.walls[c2] ? c2s[c] : c2s[c2];
  };
  std::vector<Matrix> kernel(4, Matrix::Zero(n, n));
  for (std::size_t a = 0; a < 4; ++a) {
    for (Eigen::Index s = 0; s < n; ++s) {
      const std::size_t c = cells[static_cast<std::size_t>(s)];
      kernel[a](s, move(c, a)) += 1.0 - g.slip;
      for (std::size_t dir = 0; dir < 4; ++dir) kernel[a](s, move(c, dir)) += g.slip / 4.0;
    }
  }
  Vector disc = Vector::Constant(n, gamma);
  std::vector<RewardSpec> arrival(static_cast<std::size_t>(n), RewardSpec::point(0.0));
  for (const auto& [c, r] : g.goals) {
    disc(c2s[c]) = 0.0;
    arrival[static_cast<std::size_t>(c2s[c])] = r;
  }
  std::optional<Vector> restart;
  if (!restart_states.empty()) {
    restart = Vector::Zero(n);
    for (StateId s : restart_states) (*restart)(static_cast<Eigen::Index>(s)) += 1.0 / static_cast<double>(restart_states.size());
  }
  return TabularMdp(std::move(kernel), std::vector<RewardSpec>(static_cast<std::size_t>(n) * 4, RewardSpec::point(0.0)),
                    std::move(disc), std::move(restart), std::move(arrival));
}

/// Shortest-path distances (in moves, no slip) from every state to `target`; -1 when unreachable.
inline std::vector<long> grid_distances(const TabularMdp& mdp, StateId target) {
  const std::size_t n = mdp.n_states();
  const auto next = detail::mode_successors(mdp);
  std::vector<long> dist(n, -1);
  dist[target] = 0;
  for (long level = 0;; ++level) {
    bool grew = false;
    for (std::size_t s = 0; s < n; ++s) {
      if (dist[s] >= 0) continue;
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
        if (dist[next[s * mdp.n_actions() + a]] == level) {
          dist[s] = level + 1;
          grew = true;
          break;
        }
      }
    }
    if (!grew) break;
  }
  return dist;
}

// ---------------------------------------------------------------------------------------------
// Open world

struct OpenWorld {
  GridSpec grid;
  EvalEnv env;                  // target = the up-right option policy
  TabularPolicy up_right;
  TabularPolicy down_left;
};

/// Open width x height room with goals in the top-right and bottom-left corners paying 10/eps_r with
/// probability eps_r on arrival. gamma = 0.99 elsewhere, uniform restart over non-goal cells. The
/// behaviour is uniform; the two target policies put (1 - eps_o) / 2 on each of their two directions
/// plus eps_o / 4 on every action.
inline OpenWorld open_world(double eps_r = 1.0, std::size_t width = 11, std::size_t height = 11, double eps_p = 0.05,
                            double eps_o = 0.2, double gamma = 0.99) {
  if (!(eps_r > 0.0 && eps_r <= 1.0)) throw DomainError("open_world: eps_r must lie in (0, 1]");
  if (!(eps_o >= 0.0 && eps_o <= 1.0)) throw DomainError("open_world: eps_o must lie in [0, 1]");
  GridSpec g;
  g.width = width;
  g.height = height;
  g.walls.assign(width * height, false);
  g.hallways.assign(width * height, false);
  g.slip = eps_p;
  const RewardSpec goal = RewardSpec::sparse(10.0, eps_r);
  g.goals.emplace(g.cell(0, width - 1), goal);
  g.goals.emplace(g.cell(height - 1, 0), goal);
  const auto c2s = g.cell_to_state();
  std::vector<StateId> starts;
  for (std::size_t c = 0; c < width * height; ++c) {
    if (!g.goals.count(c)) starts.push_back(static_cast<StateId>(c2s[c]));
  }
  TabularMdp mdp = grid_mdp(g, gamma, starts);
  const std::size_t n = mdp.n_states();
  auto directional = [&](ActionId a1, ActionId a2) {
    Matrix p = Matrix::Constant(static_cast<Eigen::Index>(n), 4, eps_o / 4.0);
    p.col(static_cast<Eigen::Index>(a1)).array() += (1.0 - eps_o) / 2.0;
    p.col(static_cast<Eigen::Index>(a2)).array() += (1.0 - eps_o) / 2.0;
    return TabularPolicy(p);
  };
  TabularPolicy ur = directional(kUp, kRight);
  TabularPolicy dl = directional(kDown, kLeft);
  EvalEnv env{"open_world", std::move(mdp), FeatureMap::one_hot(n), TabularPolicy::uniform(n, 4), ur};
  return {std::move(g), std::move(env), ur, dl};
}

// ---------------------------------------------------------------------------------------------
// Four rooms

inline constexpr std::string_view kFourRoomsMap =
    "#############\n"
    "#.....#.....#\n"
    "#.....#.....#\n"
    "#.....H.....#\n"
    "#.....#.....#\n"
    "#.....#.....#\n"
    "##H####.....#\n"
    "#.....###G###\n"
    "#.....#.....#\n"
    "#.....#.....#\n"
    "#.....H.....#\n"
    "#.....#.....#\n"
    "#############\n";

struct FourRooms {
  GridSpec grid;
  TabularMdp mdp;
  FeatureMap X;
  std::vector<bool> hallway_states;  // per state, goal included
  StateId goal = 0;
  std::vector<StateId> restart_states;
  std::vector<int> room_of;          // per state: room 0..3, -1 for hallways
  std::vector<OptionSpec> option_specs;
};

/// Canonical four-rooms layout (11 x 11 interior), goal on the east hallway. Reward 10/eps_r with
/// probability eps_r on reaching the goal, gamma = 0.98 elsewhere, restart uniform over the other
/// three hallways.
inline FourRooms four_rooms(double eps_r = 1.0, double eps_p = 0.0, double gamma = 0.98, double reward_mean = 10.0) {
  if (!(eps_r > 0.0 && eps_r <= 1.0)) throw DomainError("four_rooms: eps_r must lie in (0, 1]");
  GridSpec g = parse_grid(kFourRoomsMap, RewardSpec::sparse(reward_mean, eps_r), eps_p);
  for (const auto& [c, r] : g.goals) g.hallways[c] = true;
  const auto c2s = g.cell_to_state();
  const std::size_t n = g.open_cells().size();
  FourRooms fr{g, grid_mdp(g, gamma, {}), FeatureMap::one_hot(n), {}, 0, {}, {}, {}};
  fr.hallway_states.assign(n, false);
  fr.room_of.assign(n, -1);
  for (std::size_t c = 0; c < g.width * g.height; ++c) {
    if (c2s[c] < 0) continue;
    const auto s = static_cast<std::size_t>(c2s[c]);
    if (g.hallways[c]) {
      fr.hallway_states[s] = true;
      if (g.goals.count(c)) fr.goal = s;
      else fr.restart_states.push_back(s);
      continue;
    }
    const std::size_t r = g.row_of(c), k = g.col_of(c);
    const bool north = (k < 6) ? r < 6 : r < 7;
    fr.room_of[s] = (north ? 0 : 2) + (k < 6 ? 0 : 1);  // 0 NW, 1 NE, 2 SW, 3 SE
  }
  fr.mdp = grid_mdp(g, gamma, fr.restart_states);

  // Hallways adjacent to each room.
  std::vector<std::vector<StateId>> room_halls(4);
  for (StateId h = 0; h < n; ++h) {
    if (!fr.hallway_states[h]) continue;
    for (ActionId a = 0; a < 4; ++a) {
      for (StateId y = 0; y < n; ++y) {
        if (fr.mdp.kernel(a)(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(y)) > 0.0 && fr.room_of[y] >= 0) {
          auto& v = room_halls[static_cast<std::size_t>(fr.room_of[y])];
          if (std::find(v.begin(), v.end(), h) == v.end()) v.push_back(h);
        }
      }
    }
  }
  static const std::array<const char*, 4> names{"nw", "ne", "sw", "se"};
  for (std::size_t room = 0; room < 4; ++room) {
    std::sort(room_halls[room].begin(), room_halls[room].end());
    for (StateId target : room_halls[room]) {
      OptionSpec sp;
      sp.region.assign(n, false);
      for (StateId s = 0; s < n; ++s) sp.region[s] = fr.room_of[s] == static_cast<int>(room);
      for (StateId h : room_halls[room]) {
        if (h != target) sp.region[h] = true;
      }
      sp.subgoal = target;
      sp.name = std::string(names[room]) + "->" + std::to_string(target);
      fr.option_specs.push_back(std::move(sp));
    }
  }
  return fr;
}

/// Sparse selectivity over a hallway mask: omega = omega_tilde = 1 on hallways and 0 elsewhere,
/// lambda from omega with beta_lambda, eta from omega_tilde with beta_eta.
inline SelectivityConfig hallway_selectivity(const std::vector<bool>& hallways, double beta_lambda, double beta_eta,
                                             bool couple_eta = true) {
  const std::size_t n = hallways.size();
  SelectivityConfig cfg = SelectivityConfig::uniform(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double w = hallways[s] ? 1.0 : 0.0;
    cfg.omega(static_cast<Eigen::Index>(s)) = w;
    cfg.omega_trace(static_cast<Eigen::Index>(s)) = w;
  }
  cfg.coupling = Coupling::lambda_from_omega;
  cfg.beta_lambda = beta_lambda;
  cfg.beta_eta = beta_eta;
  cfg.eta_from_omega = couple_eta;
  return cfg;
}

}  // namespace credit::envs
