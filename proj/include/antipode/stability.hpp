#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "antipode/candidates.hpp"
#include "antipode/mechanics.hpp"

namespace antipode {

using OctantForces = std::array<std::array<Vec3, 3>, 8>;

/// The 24 signed axis forces: octant i takes the sign pattern of its bits
/// (bit 0 -> X, bit 1 -> Y, bit 2 -> Z; set bit means negative), so octant 0
/// is {+X, +Y, +Z} and octant 7 is {-X, -Y, -Z}.
inline OctantForces octant_basis(double magnitude = 1.0) {
    OctantForces out;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double sign = (i >> j) & 1 ? -1.0 : 1.0;
            out[i][j] = sign * magnitude * Vec3::Unit(j);
        }
    }
    return out;
}

enum class CostMode {
    /// Factors compare the squared net wrench magnitude with each pseudo force.
    Scalar,
    /// Experimental: factors compare |G f + W|^2 with |W|^2, W the pseudo force
    /// lifted to a pure-force wrench.
    Wrench,
};

inline std::string_view to_string(CostMode m) { return m == CostMode::Scalar ? "scalar" : "wrench"; }

inline CostMode cost_mode_from_string(std::string_view s) {
    if (s == "scalar") return CostMode::Scalar;
    if (s == "wrench") return CostMode::Wrench;
    throw ArgumentError("unknown cost mode '" + std::string(s) + "'");
}

struct StabilityProblem {
    GraspMatrix G;
    double mu = 0.5;
    double f_ex_magnitude = 1.0;
    /// Upper bound on each contact's force norm.
    double f_normal_cap = 2.0;
    /// Pseudo external forces; defaults to octant_basis(f_ex_magnitude).
    OctantForces octant_forces = octant_basis(1.0);
    CostMode cost_mode = CostMode::Scalar;

    static StabilityProblem from_grasp_map(const GraspMap& gm, double mu, double f_ex_magnitude, double f_normal_cap,
                                           CostMode mode = CostMode::Scalar) {
        StabilityProblem p;
        p.G = gm.G;
        p.G.bottomRows<3>() /= gm.torque_scale;
        p.mu = mu;
        p.f_ex_magnitude = f_ex_magnitude;
        p.f_normal_cap = f_normal_cap;
        p.octant_forces = octant_basis(f_ex_magnitude);
        p.cost_mode = mode;
        p.validate();
        return p;
    }

    [[nodiscard]] Eigen::Index contact_count() const { return G.cols() / 3; }

    void validate() const {
        if (G.cols() == 0 || G.cols() % 3 != 0) throw ArgumentError("grasp matrix must have 3k columns, k >= 1");
        if (!(mu > 0.0)) throw ArgumentError("mu must be positive");
        if (!(f_ex_magnitude > 0.0)) throw ArgumentError("f_ex_magnitude must be positive");
        if (!(f_normal_cap > 0.0)) throw ArgumentError("f_normal_cap must be positive");
    }
};

namespace detail {

/// Factor values for octant i, basis j, and their gradients in f.
struct Factors {
    std::array<std::array<double, 3>, 8> value;
    std::array<std::array<Eigen::VectorXd, 3>, 8> grad;
};

inline void check_dimension(const StabilityProblem& problem, const Eigen::VectorXd& f) {
    if (f.size() != problem.G.cols()) throw ArgumentError("force vector length must equal 3k");
}

inline Factors factors(const StabilityProblem& problem, const Eigen::VectorXd& f, bool with_grad) {
    Factors out;
    const Wrench w = problem.G * f;
    if (problem.cost_mode == CostMode::Scalar) {
        const double q = w.squaredNorm();
        Eigen::VectorXd dq;
        if (with_grad) dq = 2.0 * (problem.G.transpose() * w);
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 3; ++j) {
                out.value[i][j] = q - problem.octant_forces[i][j].squaredNorm();
                if (with_grad) out.grad[i][j] = dq;
            }
        }
        return out;
    }
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 3; ++j) {
            Wrench ext = Wrench::Zero();
            ext.head<3>() = problem.octant_forces[i][j];
            const Wrench shifted = w + ext;
            out.value[i][j] = shifted.squaredNorm() - ext.squaredNorm();
            if (with_grad) out.grad[i][j] = 2.0 * (problem.G.transpose() * shifted);
        }
    }
    return out;
}

}  // namespace detail

/// Sum over the eight octants of the product over that octant's three pseudo
/// forces of (f^T G^T G f - |F_ex|^2).
inline double stability_cost(const Eigen::VectorXd& f, const StabilityProblem& problem) {
    detail::check_dimension(problem, f);
    const auto fac = detail::factors(problem, f, false);
    double cost = 0.0;
    for (int i = 0; i < 8; ++i) cost += fac.value[i][0] * fac.value[i][1] * fac.value[i][2];
    return cost;
}

inline Eigen::VectorXd stability_gradient(const Eigen::VectorXd& f, const StabilityProblem& problem) {
    detail::check_dimension(problem, f);
    const auto fac = detail::factors(problem, f, true);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(f.size());
    for (int i = 0; i < 8; ++i) {
        const auto& v = fac.value[i];
        g += (v[1] * v[2]) * fac.grad[i][0] + (v[0] * v[2]) * fac.grad[i][1] + (v[0] * v[1]) * fac.grad[i][2];
    }
    return g;
}

/// Euclidean projection onto {|t| <= mu fz} intersected with {|f| <= cap}.
/// For a cone with apex at the origin and a ball centred there, projecting onto
/// the cone and then the ball gives the projection onto the intersection.
inline Vec3 project_contact_force(const Vec3& f, double mu, double cap) {
    const double t = std::hypot(f.x(), f.y());
    Vec3 out = f;
    if (!(t <= mu * f.z())) {
        if (mu * t <= -f.z()) {
            out.setZero();
        } else {
            const double scale = 1.0 / (1.0 + mu * mu);
            const double along = (mu * t + f.z()) * scale;  // coordinate along the boundary ray (mu, 1)
            const double t_new = mu * along;
            out.z() = along;
            if (t > 0.0) {
                out.x() = f.x() * (t_new / t);
                out.y() = f.y() * (t_new / t);
            } else {
                out.x() = out.y() = 0.0;
            }
        }
    }
    const double norm = out.norm();
    if (norm > cap) out *= cap / norm;
    return out;
}

inline Eigen::VectorXd project_feasible(const Eigen::VectorXd& f, double mu, double cap) {
    Eigen::VectorXd out(f.size());
    for (Eigen::Index c = 0; c < f.size() / 3; ++c) out.segment<3>(3 * c) = project_contact_force(f.segment<3>(3 * c), mu, cap);
    return out;
}

/// Largest violation of the cone, sign and cap constraints over all contacts.
inline double constraint_violation(const Eigen::VectorXd& f, double mu, double cap) {
    double worst = 0.0;
    for (Eigen::Index c = 0; c < f.size() / 3; ++c) {
        const Vec3 fc = f.segment<3>(3 * c);
        worst = std::max({worst, std::hypot(fc.x(), fc.y()) - mu * fc.z(), -fc.z(), fc.norm() - cap});
    }
    return worst;
}

struct SolverSettings {
    int max_iterations = 200;
    double cost_tolerance = 1e-10;
    double kkt_tolerance = 1e-8;
    /// A small cost change only counts as convergence below this residual.
    double stall_kkt_tolerance = 1e-6;
    double armijo = 1e-4;
    int max_backtracks = 60;
    /// Length of the non-monotone line-search memory.
    int memory = 10;
};

struct StabilityResult {
    Eigen::VectorXd optimal_f;
    double cost = 0.0;
    bool converged = false;
    int iterations = 0;
    double constraint_violation = 0.0;
    /// |x - P(x - grad)| at the returned point.
    double kkt_residual = 0.0;
};

/// Pure inward-normal force of magnitude `magnitude` at every contact.
inline Eigen::VectorXd normal_force_start(Eigen::Index contacts, double magnitude) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * contacts);
    for (Eigen::Index c = 0; c < contacts; ++c) f[3 * c + 2] = magnitude;
    return f;
}

/// Spectral projected gradient over the per-contact friction cones and force
/// caps: Barzilai-Borwein step lengths with a non-monotone Armijo search.
///
/// Converged when the projected-gradient residual is below `kkt_tolerance`, or
/// when the cost moves by less than `cost_tolerance` with the residual below
/// `stall_kkt_tolerance`. Before accepting either, and every `memory`
/// iterations, the iterate is probed along the ray to the origin and along
/// +-grad(|G f|^2): the cost is a polynomial in that quantity, and its
/// stationary points are not minima of the constrained problem.
inline StabilityResult solve_stability(const StabilityProblem& problem, const Eigen::VectorXd& f0,
                                       const SolverSettings& settings = {}) {
    problem.validate();
    detail::check_dimension(problem, f0);
    const double mu = problem.mu;
    const double cap = problem.f_normal_cap;

    StabilityResult r;
    Eigen::VectorXd x = project_feasible(f0, mu, cap);
    double cost = stability_cost(x, problem);
    Eigen::VectorXd g = stability_gradient(x, problem);
    std::vector<double> history{cost};

    auto kkt = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& grad) {
        return (at - project_feasible(at - grad, mu, cap)).norm();
    };

    // Moves x and returns true when a probe lowers the cost: first along the
    // ray to the origin (the feasible set is star-shaped about 0), then along
    // +-grad q.
    auto escape = [&]() {
        const double gain = 1e-9 * std::max(1.0, std::abs(cost));
        auto take = [&](const Eigen::VectorXd& trial) {
            const double c = stability_cost(trial, problem);
            if (!(c < cost - gain)) return false;
            x = trial;
            cost = c;
            g = stability_gradient(x, problem);
            history.assign(1, cost);
            return true;
        };
        for (double t : {0.0, 0.25, 0.5, 0.75, 0.9, 0.99})
            if (take(t * x)) return true;
        const Eigen::VectorXd dq = problem.G.transpose() * (problem.G * x);
        const double len = dq.norm();
        if (!(len > 0.0)) return false;
        for (double t : {1e-3, 1e-2, 1e-1, 1.0})
            for (double sign : {-1.0, 1.0})
                if (take(project_feasible(x + sign * t * cap * dq / len, mu, cap))) return true;
        return false;
    };

    double alpha = 1.0 / std::max(1.0, g.cwiseAbs().maxCoeff());
    for (r.iterations = 0; r.iterations < settings.max_iterations; ++r.iterations) {
        const double residual = kkt(x, g);
        if (residual < settings.kkt_tolerance) {
            if (escape()) continue;
            r.converged = true;
            break;
        }
        const Eigen::VectorXd d = project_feasible(x - alpha * g, mu, cap) - x;
        const double slope = g.dot(d);
        const double reference = *std::max_element(history.begin(), history.end());
        double lambda = 1.0;
        bool moved = false;
        Eigen::VectorXd next;
        double next_cost = cost;
        for (int b = 0; b < settings.max_backtracks; ++b, lambda *= 0.5) {
            next = x + lambda * d;
            next_cost = stability_cost(next, problem);
            if (next_cost <= reference + settings.armijo * lambda * slope) {
                moved = true;
                break;
            }
        }
        if (!moved) {
            if (escape()) continue;
            r.converged = residual < settings.stall_kkt_tolerance;
            break;
        }
        const Eigen::VectorXd next_g = stability_gradient(next, problem);
        const Eigen::VectorXd s = next - x;
        const Eigen::VectorXd y = next_g - g;
        const double change = std::abs(cost - next_cost);
        x = next;
        cost = next_cost;
        g = next_g;
        history.push_back(cost);
        if (history.size() > static_cast<std::size_t>(settings.memory)) history.erase(history.begin());
        const double sy = s.dot(y);
        alpha = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e12) : std::clamp(alpha * 10.0, 1e-12, 1e12);
        if ((r.iterations + 1) % settings.memory == 0 && escape()) continue;
        if (change < settings.cost_tolerance && kkt(x, g) < settings.stall_kkt_tolerance) {
            if (escape()) continue;
            r.converged = true;
            ++r.iterations;
            break;
        }
    }
    r.optimal_f = x;
    r.cost = cost;
    r.constraint_violation = std::max(0.0, constraint_violation(x, mu, cap));
    r.kkt_residual = kkt(x, g);
    return r;
}

inline StabilityResult solve_stability(const StabilityProblem& problem, const SolverSettings& settings = {}) {
    return solve_stability(problem, normal_force_start(problem.contact_count(), problem.f_ex_magnitude), settings);
}

/// Everything needed to score a batch of candidates on one cloud.
struct ScoringConfig {
    double mu = 0.5;
    double closure_threshold = 0.01;
    ClosureMode closure_mode = ClosureMode::SoftPinch;
    double f_ex_magnitude = 1.0;
    double f_normal_cap = 2.0;
    CostMode cost_mode = CostMode::Scalar;
    SolverSettings solver;
};

struct GraspReport {
    std::size_t candidate_index = 0;
    GraspCandidate candidate;
    ClosureResult closure;
    StabilityResult stability;
    /// Distance from the object reference point to the grasp-axis line.
    double axis_offset = 0.0;
};

struct RankedGrasps {
    std::vector<GraspReport> reports;
    /// No report in the batch achieved force closure.
    bool no_closure = false;
    Vec3 object_origin = Vec3::Zero();
    double torque_scale = 1.0;
};

inline GraspMap grasp_map_for(const GraspCandidate& c, double mu, const Vec3& origin, double torque_scale) {
    const std::array<ContactFrame, 2> frames{build_contact_frame(c.contact_a, c.normal_a, mu),
                                             build_contact_frame(c.contact_b, c.normal_b, mu)};
    return build_grasp_map(frames, origin, torque_scale);
}

inline double line_offset(const Vec3& point_on_line, const Vec3& unit_dir, const Vec3& p) {
    const Vec3 d = p - point_on_line;
    return (d - d.dot(unit_dir) * unit_dir).norm();
}

namespace detail {

inline long long quantize(double v, double step) { return std::llround(v / step); }

}  // namespace detail

/// Scores every candidate and sorts by closure (passing first), stability cost
/// (quantized to 1e-6 of 8 m^3), axis distance to the object centroid
/// (quantized to 1e-5 length units), width, then candidate index.
inline RankedGrasps rank_candidates(std::span<const GraspCandidate> candidates, const PointCloud& cloud,
                                    const ScoringConfig& config) {
    if (candidates.empty()) throw ArgumentError("rank_candidates needs at least one candidate");
    RankedGrasps out;
    out.object_origin = centroid(cloud);
    out.torque_scale = std::max(bounding_radius(cloud), 1e-12);
    out.reports.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        GraspReport rep;
        rep.candidate_index = i;
        rep.candidate = candidates[i];
        const GraspMap gm = grasp_map_for(candidates[i], config.mu, out.object_origin, out.torque_scale);
        rep.closure = force_closure(gm, config.mu, config.closure_threshold, config.closure_mode);
        const auto problem = StabilityProblem::from_grasp_map(gm, config.mu, config.f_ex_magnitude,
                                                              config.f_normal_cap, config.cost_mode);
        rep.stability = solve_stability(problem, config.solver);
        rep.axis_offset = line_offset(candidates[i].contact_a, candidates[i].grasp_axis, out.object_origin);
        out.reports.push_back(std::move(rep));
    }
    const double m3 = config.f_ex_magnitude * config.f_ex_magnitude * config.f_ex_magnitude;
    const double cost_step = 1e-6 * std::max(1.0, 8.0 * m3);
    std::stable_sort(out.reports.begin(), out.reports.end(), [&](const GraspReport& a, const GraspReport& b) {
        if (a.closure.closure != b.closure.closure) return a.closure.closure;
        const auto ca = detail::quantize(a.stability.cost, cost_step), cb = detail::quantize(b.stability.cost, cost_step);
        if (ca != cb) return ca < cb;
        const auto oa = detail::quantize(a.axis_offset, 1e-5), ob = detail::quantize(b.axis_offset, 1e-5);
        if (oa != ob) return oa < ob;
        if (a.candidate.width != b.candidate.width) return a.candidate.width < b.candidate.width;
        return a.candidate_index < b.candidate_index;
    });
    out.no_closure = std::none_of(out.reports.begin(), out.reports.end(), [](const GraspReport& r) { return r.closure.closure; });
    return out;
}

}  // namespace antipode
