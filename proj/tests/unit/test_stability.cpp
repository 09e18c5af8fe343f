#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "antipode/stability.hpp"

using namespace antipode;

namespace {

struct Draw {
    std::mt19937_64 rng;
    std::normal_distribution<double> g{0.0, 1.0};
    std::uniform_real_distribution<double> u{0.0, 1.0};
    explicit Draw(unsigned seed) : rng(seed) {}
    Vec3 vec() { return {g(rng), g(rng), g(rng)}; }
    Vec3 unit() { return vec().normalized(); }

    /// Uniform-ish point of the cone-ball set {|t| <= mu z, |f| <= cap}.
    Vec3 feasible_force(double mu, double cap) {
        const double r = cap * std::cbrt(u(rng));
        const double half = std::atan(mu);
        const double polar = half * std::sqrt(u(rng));
        const double az = 2 * M_PI * u(rng);
        return r * Vec3(std::sin(polar) * std::cos(az), std::sin(polar) * std::sin(az), std::cos(polar));
    }
};

/// Two contacts roughly facing each other across a gap of ~5 cm.
GraspMap near_antipodal(Draw& d, double tilt = 0.15) {
    const Vec3 axis = d.unit();
    const Vec3 a = 0.01 * d.vec();
    const Vec3 b = a + 0.05 * axis + 0.005 * d.vec();
    const std::array<ContactFrame, 2> frames{build_contact_frame(a, (axis + tilt * d.vec()).normalized(), 0.5),
                                             build_contact_frame(b, (-axis + tilt * d.vec()).normalized(), 0.5)};
    return build_grasp_map(frames, Vec3::Zero(), 0.03);
}

// Independent oracle: explicit loops over octants and bases, with the wrench
// written out component by component.
double brute_cost(const Eigen::VectorXd& f, const GraspMatrix& G, const OctantForces& forces) {
    double w[6] = {0, 0, 0, 0, 0, 0};
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < f.size(); ++c) w[r] += G(r, c) * f[c];
    double q = 0;
    for (double x : w) q += x * x;
    double total = 0;
    for (int i = 0; i < 8; ++i) {
        double prod = 1;
        for (int j = 0; j < 3; ++j) {
            const Vec3& F = forces[i][j];
            prod *= q - (F[0] * F[0] + F[1] * F[1] + F[2] * F[2]);
        }
        total += prod;
    }
    return total;
}

Eigen::VectorXd fd_gradient(const Eigen::VectorXd& f, const StabilityProblem& p, double h) {
    Eigen::VectorXd g(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        Eigen::VectorXd a = f, b = f;
        a[i] += h;
        b[i] -= h;
        g[i] = (stability_cost(a, p) - stability_cost(b, p)) / (2 * h);
    }
    return g;
}

Eigen::VectorXd random_feasible(Draw& d, int contacts, double mu, double cap) {
    Eigen::VectorXd f(3 * contacts);
    for (int c = 0; c < contacts; ++c) f.segment<3>(3 * c) = d.feasible_force(mu, cap);
    return f;
}

}  // namespace

TEST(OctantBasis, SignedUnitAxes) {
    const auto b = octant_basis();
    EXPECT_EQ(b[0][0], Vec3::UnitX());
    EXPECT_EQ(b[0][2], Vec3::UnitZ());
    EXPECT_EQ(b[7][0], -Vec3::UnitX());
    EXPECT_EQ(b[7][1], -Vec3::UnitY());
    EXPECT_EQ(b[7][2], -Vec3::UnitZ());
    std::set<std::array<int, 3>> patterns;
    for (const auto& oct : b) {
        std::array<int, 3> s{};
        for (int j = 0; j < 3; ++j) {
            EXPECT_EQ(oct[j].norm(), 1.0);
            EXPECT_EQ(std::abs(oct[j][j]), 1.0);
            s[j] = oct[j][j] > 0 ? 1 : -1;
        }
        patterns.insert(s);
    }
    EXPECT_EQ(patterns.size(), 8u);
}

TEST(StabilityCost, ZeroForce) {
    Draw d(1);
    const auto p = StabilityProblem::from_grasp_map(near_antipodal(d), 0.5, 1.0, 2.0);
    EXPECT_DOUBLE_EQ(stability_cost(Eigen::VectorXd::Zero(6), p), -8.0);
}

TEST(StabilityCost, RootWhenQEqualsM) {
    StabilityProblem p;
    p.G = GraspMatrix::Zero(6, 3);
    p.G.topRows<3>() = Mat3::Identity();
    Eigen::VectorXd f(3);
    f << 0, 0, 1;  // q = 1 = m
    EXPECT_DOUBLE_EQ(stability_cost(f, p), 0.0);
}

TEST(StabilityCost, MatchesBruteForceLoops) {
    Draw d(2);
    for (int t = 0; t < 200; ++t) {
        auto p = StabilityProblem::from_grasp_map(near_antipodal(d), 0.5, 1.0, 2.0);
        if (t % 2) {
            // Unequal pseudo-force magnitudes exercise the general sum of products.
            for (auto& oct : p.octant_forces)
                for (auto& F : oct) F *= 0.5 + d.u(d.rng);
        }
        const Eigen::VectorXd f = Eigen::VectorXd::NullaryExpr(6, [&] { return d.g(d.rng); });
        const double want = brute_cost(f, p.G, p.octant_forces);
        EXPECT_NEAR(stability_cost(f, p), want, 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST(StabilityCost, ReductionIdentity) {
    Draw d(3);
    for (int t = 0; t < 200; ++t) {
        const double m = 0.2 + 2 * d.u(d.rng);
        const auto p = StabilityProblem::from_grasp_map(near_antipodal(d), 0.5, m, 2.0);
        const Eigen::VectorXd f = Eigen::VectorXd::NullaryExpr(6, [&] { return d.g(d.rng); });
        const Wrench w = p.G * f;
        const double q = w.squaredNorm();
        const double want = 8 * std::pow(q - m * m, 3);
        EXPECT_NEAR(stability_cost(f, p), want, 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST(StabilityCost, DimensionMismatch) {
    Draw d(4);
    const auto p = StabilityProblem::from_grasp_map(near_antipodal(d), 0.5, 1.0, 2.0);
    EXPECT_THROW(stability_cost(Eigen::VectorXd::Zero(5), p), ArgumentError);
    EXPECT_THROW(stability_gradient(Eigen::VectorXd::Zero(7), p), ArgumentError);
}

TEST(StabilityGradient, MatchesCentralDifferences) {
    Draw d(5);
    for (CostMode mode : {CostMode::Scalar, CostMode::Wrench}) {
        for (int t = 0; t < 100; ++t) {
            const auto p = StabilityProblem::from_grasp_map(near_antipodal(d), 0.5, 1.0, 2.0, mode);
            const Eigen::VectorXd f = random_feasible(d, 2, 0.5, 2.0);
            const Eigen::VectorXd g = stability_gradient(f, p);
            const Eigen::VectorXd fd = fd_gradient(f, p, 1e-6);
            EXPECT_LE((g - fd).norm(), 1e-5 * std::max(1.0, g.norm())) << "mode " << to_string(mode) << " t " << t;
        }
    }
}

TEST(Projection, FeasibleAndOptimal) {
    Draw d(6);
    for (int t = 0; t < 2000; ++t) {
        const double mu = 0.2 + d.u(d.rng), cap = 0.5 + 2 * d.u(d.rng);
        const Vec3 x = 2 * d.vec();
        const Vec3 p = project_contact_force(x, mu, cap);
        EXPECT_LE(std::hypot(p.x(), p.y()) - mu * p.z(), 1e-12);
        EXPECT_LE(p.norm(), cap + 1e-12);
        // Idempotent.
        EXPECT_NEAR((project_contact_force(p, mu, cap) - p).norm(), 0.0, 1e-12);
        // Variational inequality of a convex projection: (x - p).(y - p) <= 0
        // for every feasible y.
        for (int k = 0; k < 20; ++k) {
            const Vec3 y = d.feasible_force(mu, cap);
            EXPECT_LE((x - p).dot(y - p), 1e-10);
        }
    }
}

TEST(Solver, AntipodalMatchesNormalForceSweep) {
    // Exactly opposed contacts: sweep equal normal forces 0..cap and take the
    // best cost as the oracle.
    const std::array<ContactFrame, 2> frames{build_contact_frame(Vec3(-0.03, 0, 0), Vec3::UnitX(), 0.5),
                                             build_contact_frame(Vec3(0.03, 0, 0), -Vec3::UnitX(), 0.5)};
    const auto p = StabilityProblem::from_grasp_map(build_grasp_map(frames, Vec3::Zero()), 0.5, 1.0, 2.0);
    double sweep_best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) {
        for (int j = 0; j <= 20; ++j) {
            const double a = 2.0 * i / 2000, b = 2.0 * j / 20;
            Eigen::VectorXd f(6);
            f << 0, 0, a, 0, 0, b;
            sweep_best = std::min(sweep_best, stability_cost(f, p));
        }
    }
    const auto r = solve_stability(p);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.cost, sweep_best, 1e-6);
    EXPECT_LE(std::hypot(r.optimal_f[0], r.optimal_f[1]), 1e-6);
    EXPECT_LE(std::hypot(r.optimal_f[3], r.optimal_f[4]), 1e-6);
}

TEST(Solver, TinyCapDrivesForcesToZero) {
    Draw d(7);
    const auto p = StabilityProblem::from_grasp_map(near_antipodal(d), 0.5, 1.0, 1e-9);
    const auto r = solve_stability(p);
    EXPECT_LE(r.optimal_f.norm(), 2e-9);
    EXPECT_NEAR(r.cost, -8.0, 1e-9);
}

TEST(Solver, ZeroGraspMatrixReturnsStart) {
    StabilityProblem p;
    p.G = GraspMatrix::Zero(6, 6);
    const Eigen::VectorXd f0 = normal_force_start(2, 1.0);
    const auto r = solve_stability(p, f0);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.optimal_f, f0);
    EXPECT_EQ(r.cost, -8.0);
}

TEST(Solver, ConvergedSolutionsAreFeasibleAndStationary) {
    Draw d(8);
    for (int t = 0; t < 50; ++t) {
        const auto p = StabilityProblem::from_grasp_map(near_antipodal(d, 0.3), 0.5, 0.5 + d.u(d.rng), 2.0);
        const Eigen::VectorXd f0 = random_feasible(d, 2, 0.5, 2.0);
        const auto r = solve_stability(p, f0);
        ASSERT_TRUE(r.converged) << "t " << t;
        EXPECT_LE(r.constraint_violation, 1e-6);
        for (int c = 0; c < 2; ++c) EXPECT_LE(r.optimal_f.segment<3>(3 * c).norm(), p.f_normal_cap + 1e-9);
        EXPECT_LT(r.kkt_residual, 1e-6);
        EXPECT_LE(r.iterations, SolverSettings{}.max_iterations);
    }
}

TEST(Solver, NoWorseThanRandomFeasibleSearch) {
    Draw d(9);
    for (int t = 0; t < 20; ++t) {
        const auto p = StabilityProblem::from_grasp_map(near_antipodal(d, 0.3), 0.5, 1.0, 2.0);
        double best = std::numeric_limits<double>::infinity();
        for (int s = 0; s < 2000; ++s) best = std::min(best, stability_cost(random_feasible(d, 2, 0.5, 2.0), p));
        EXPECT_LE(solve_stability(p).cost, best + 1e-6);
    }
}

TEST(Solver, EscapesTheInflectionAtQEqualsM) {
    // Start exactly where q = m: the gradient vanishes there but it is not a minimum.
    const std::array<ContactFrame, 2> frames{build_contact_frame(Vec3(-0.03, 0, 0), Vec3::UnitX(), 0.5),
                                             build_contact_frame(Vec3(0.03, 0, 0), -Vec3::UnitX(), 0.5)};
    const auto p = StabilityProblem::from_grasp_map(build_grasp_map(frames, Vec3::Zero()), 0.5, 1.0, 2.0);
    Eigen::VectorXd f0(6);
    f0 << 0, 0, 1, 0, 0, 0;  // one-sided push: |G f| = 1 in force, torque 0
    ASSERT_NEAR(stability_cost(f0, p), 0.0, 1e-12);
    const auto r = solve_stability(p, f0);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.cost, -8.0, 1e-6);
}

TEST(Solver, LargerCapNeverRaisesOptimalCost) {
    Draw d(10);
    for (int t = 0; t < 20; ++t) {
        const auto gm = near_antipodal(d, 0.3);
        double previous = std::numeric_limits<double>::infinity();
        for (double cap : {0.5, 1.0, 2.0, 4.0}) {
            const auto r = solve_stability(StabilityProblem::from_grasp_map(gm, 0.5, 1.0, cap));
            EXPECT_LE(r.cost, previous + 1e-9);
            previous = r.cost;
        }
    }
}

TEST(Solver, BitIdenticalRepeats) {
    Draw d(11);
    const auto p = StabilityProblem::from_grasp_map(near_antipodal(d, 0.3), 0.5, 1.0, 2.0);
    const Eigen::VectorXd f0 = random_feasible(d, 2, 0.5, 2.0);
    const auto a = solve_stability(p, f0), b = solve_stability(p, f0);
    EXPECT_EQ(a.optimal_f, b.optimal_f);
    EXPECT_EQ(a.cost, b.cost);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(a.converged, b.converged);
}

TEST(Problem, Validation) {
    Draw d(12);
    const auto gm = near_antipodal(d);
    EXPECT_THROW(StabilityProblem::from_grasp_map(gm, 0.0, 1.0, 2.0), ArgumentError);
    EXPECT_THROW(StabilityProblem::from_grasp_map(gm, 0.5, 0.0, 2.0), ArgumentError);
    EXPECT_THROW(StabilityProblem::from_grasp_map(gm, 0.5, 1.0, 0.0), ArgumentError);
    EXPECT_EQ(cost_mode_from_string("wrench"), CostMode::Wrench);
    EXPECT_THROW(cost_mode_from_string("vector"), ArgumentError);
}

namespace {

GraspCandidate box_candidate(const Vec3& a, const Vec3& b) {
    GraspCandidate c;
    c.contact_a = a;
    c.contact_b = b;
    c.width = (b - a).norm();
    c.grasp_axis = (b - a) / c.width;
    c.normal_a = c.grasp_axis;
    c.normal_b = -c.grasp_axis;
    return c;
}

PointCloud box_points(double x, double y, double z) {
    PointCloud cloud;
    for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0})
            for (double sz : {-1.0, 1.0}) cloud.points.emplace_back(sx * x / 2, sy * y / 2, sz * z / 2);
    return cloud;
}

}  // namespace

TEST(Rank, ClosureFirstRegardlessOfCost) {
    const auto cloud = box_points(0.05, 0.05, 0.05);
    auto bad = box_candidate(Vec3(-0.025, 0, 0), Vec3(0.025, 0, 0));
    bad.normal_a = Vec3::UnitY();  // not antipodal
    bad.normal_b = Vec3::UnitY();
    const auto good = box_candidate(Vec3(0, -0.025, 0.01), Vec3(0, 0.025, 0.01));
    const std::vector<GraspCandidate> cands{bad, good};
    const auto ranked = rank_candidates(cands, cloud, {});
    EXPECT_EQ(ranked.reports.front().candidate_index, 1u);
    EXPECT_TRUE(ranked.reports.front().closure.closure);
    EXPECT_FALSE(ranked.no_closure);
}

TEST(Rank, IdenticalCandidatesOrderedByIndex) {
    const auto cloud = box_points(0.05, 0.05, 0.05);
    const auto c = box_candidate(Vec3(-0.025, 0, 0), Vec3(0.025, 0, 0));
    const std::vector<GraspCandidate> cands{c, c, c};
    const auto ranked = rank_candidates(cands, cloud, {});
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ranked.reports[i].candidate_index, i);
}

TEST(Rank, BoxPicksAxisNearestCentroid) {
    // Three face-pair candidates with different offsets from the centroid;
    // oracle: score each on its own and pick the smallest offset among the
    // closure-passing minimum-cost ones.
    const auto cloud = box_points(0.05, 0.06, 0.04);
    const std::vector<GraspCandidate> cands{
        box_candidate(Vec3(-0.025, 0.01, 0.004), Vec3(0.025, 0.01, 0.004)),
        box_candidate(Vec3(0.002, -0.03, 0.001), Vec3(0.002, 0.03, 0.001)),
        box_candidate(Vec3(0.006, 0.0, -0.02), Vec3(0.006, 0.0, 0.02)),
    };
    std::size_t oracle = 0;
    double best_offset = std::numeric_limits<double>::infinity();
    const Vec3 o = centroid(cloud);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const std::vector<GraspCandidate> one{cands[i]};
        const auto r = rank_candidates(one, cloud, {});
        ASSERT_TRUE(r.reports[0].closure.closure);
        ASSERT_NEAR(r.reports[0].stability.cost, -8.0, 1e-9);
        const Vec3 d = cands[i].contact_a - o;
        const double off = (d - d.dot(cands[i].grasp_axis) * cands[i].grasp_axis).norm();
        if (off < best_offset) {
            best_offset = off;
            oracle = i;
        }
    }
    const auto ranked = rank_candidates(cands, cloud, {});
    EXPECT_EQ(ranked.reports.front().candidate_index, oracle);
    EXPECT_EQ(oracle, 1u);
}

TEST(Rank, AllFailingSetsBatchFlag) {
    const auto cloud = box_points(0.05, 0.05, 0.05);
    auto c = box_candidate(Vec3(-0.025, 0, 0), Vec3(0.025, 0, 0));
    c.normal_a = c.normal_b = Vec3::UnitZ();
    const std::vector<GraspCandidate> cands{c};
    EXPECT_TRUE(rank_candidates(cands, cloud, {}).no_closure);
    EXPECT_THROW(rank_candidates(std::vector<GraspCandidate>{}, cloud, {}), ArgumentError);
}
