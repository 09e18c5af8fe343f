#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "antipode/cloud.hpp"
#include "antipode/preprocess.hpp"
#include "antipode/spatial_index.hpp"

using namespace antipode;

namespace {

PointCloud from_points(std::vector<Vec3> pts) {
    PointCloud c;
    c.points = std::move(pts);
    return c;
}

std::vector<Vec3> random_points(std::size_t n, unsigned seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, scale);
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
    return pts;
}

std::vector<Vec3> plane_grid(int n, double step) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) pts.emplace_back(i * step, j * step, 0.0);
    }
    return pts;
}

std::vector<Vec3> fibonacci_sphere(std::size_t n) {
    std::vector<Vec3> pts;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(1.0 - z * z);
        pts.emplace_back(r * std::cos(golden * i), r * std::sin(golden * i), z);
    }
    return pts;
}

// Brute-force k-NN: full sort by (squared distance, index).
std::vector<std::pair<double, std::size_t>> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec3 d = pts[i] - q;
        all.emplace_back(d.x() * d.x() + d.y() * d.y() + d.z() * d.z(), i);
    }
    std::sort(all.begin(), all.end());
    all.resize(std::min(k, all.size()));
    return all;
}

}  // namespace

TEST(LoadCloud, XyzThreePoints) {
    std::istringstream in("0 0 0\n1 0 0\n# comment\n\n0 1 0\n");
    const auto c = parse_xyz(in);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c.points[1], Vec3(1, 0, 0));
    EXPECT_FALSE(c.has_normals());
}

TEST(LoadCloud, XyzMalformedLineCitesLine) {
    std::istringstream in("0 0 0\na b c\n");
    try {
        parse_xyz(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(LoadCloud, EmptyFileIsEmptyCloudError) {
    std::istringstream in("# nothing\n");
    EXPECT_THROW(parse_xyz(in), EmptyCloudError);
}

TEST(LoadCloud, PlyWithNormals) {
    std::istringstream in(
        "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty float y\n"
        "property float z\nproperty float nx\nproperty float ny\nproperty float nz\nproperty uchar red\n"
        "element face 0\nproperty list uchar int vertex_indices\nend_header\n"
        "0 0 0 0 0 2 255\n1 2 3 1 0 0 0\n");
    const auto c = parse_ply_ascii(in);
    ASSERT_EQ(c.size(), 2u);
    ASSERT_TRUE(c.has_normals());
    EXPECT_EQ(c.points[1], Vec3(1, 2, 3));
    EXPECT_NEAR((*c.normals)[0].z(), 1.0, 1e-15);
    EXPECT_NO_THROW(c.validate());
}

TEST(LoadCloud, PlyBadRecordCitesLine) {
    std::istringstream in("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                          "property float z\nend_header\n1 x 3\n");
    try {
        parse_ply_ascii(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 8u);
    }
}

TEST(LoadCloud, PlyRoundTripIsExact) {
    PointCloud c = from_points(random_points(50, 3));
    c.normals.emplace();
    for (std::size_t i = 0; i < c.size(); ++i) c.normals->push_back(c.points[i].normalized());
    std::istringstream in(to_ply_ascii(c));
    const auto back = parse_ply_ascii(in);
    ASSERT_EQ(back.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(back.points[i], c.points[i]);
        EXPECT_NEAR(((*back.normals)[i] - (*c.normals)[i]).norm(), 0.0, 1e-15);
    }
}

TEST(LoadCloud, FormatFromExtension) {
    EXPECT_EQ(format_from_path("a/b.ply"), CloudFormat::PlyAscii);
    EXPECT_EQ(format_from_path("x.XYZ"), CloudFormat::Xyz);
    EXPECT_EQ(format_from_path("x.pts.ply"), CloudFormat::PlyAscii);
}

TEST(PointCloudInvariants, ValidateRejectsBrokenAttributes) {
    PointCloud c = from_points({Vec3(0, 0, 0), Vec3(1, 0, 0)});
    c.normals = std::vector<Vec3>{Vec3(0, 0, 1)};
    EXPECT_THROW(c.validate(), ArgumentError);
    c.normals = std::vector<Vec3>{Vec3(0, 0, 1), Vec3(0, 0, 2)};
    EXPECT_THROW(c.validate(), ArgumentError);
    c.normals.reset();
    c.curvatures = std::vector<double>{0.1, 1.5};
    EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(SpatialIndex, KnnMatchesBruteForceIncludingTies) {
    // A coarse integer grid has many equidistant neighbors, exercising tie order.
    std::vector<Vec3> pts;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j)
            for (int k = 0; k < 7; ++k) pts.emplace_back(i, j, k);
    auto random = random_points(150, 11, 6.0);
    pts.insert(pts.end(), random.begin(), random.end());
    ASSERT_LE(pts.size(), 500u);
    const SpatialIndex index(pts);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 7.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3 q = trial % 2 ? Vec3(u(rng), u(rng), u(rng)) : pts[trial % pts.size()];
        const std::size_t k = 1 + trial % 27;
        const auto got = index.knn(q, k);
        const auto want = brute_knn(pts, q, k);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].index, want[i].second) << "trial " << trial << " rank " << i;
            EXPECT_EQ(got[i].dist2, want[i].first);
        }
    }
}

TEST(SpatialIndex, RadiusSearchMatchesBruteForce) {
    const auto pts = random_points(400, 17);
    const SpatialIndex index(pts);
    const Vec3 q(0.5, 0.4, 0.6);
    const auto got = index.radius_search(q, 0.2);
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if ((pts[i] - q).squaredNorm() <= 0.04) want.push_back(i);
    }
    std::vector<std::size_t> got_idx;
    for (const auto& n : got) got_idx.push_back(n.index);
    std::sort(got_idx.begin(), got_idx.end());
    EXPECT_EQ(got_idx, want);
    EXPECT_TRUE(std::is_sorted(got.begin(), got.end()));
}

TEST(VoxelDownsample, CubeCornersCollapseToCentroid) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i) pts.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
    const auto out = voxel_downsample(from_points(pts), 10.0);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_NEAR((out.points[0] - Vec3(0.5, 0.5, 0.5)).norm(), 0.0, 1e-15);
}

TEST(VoxelDownsample, FineVoxelOnAlignedGridKeepsEveryPoint) {
    // Each grid point sits alone in its own voxel.
    std::vector<Vec3> pts;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) pts.emplace_back(0.1 * i + 0.05, 0.1 * j + 0.05, 0.05);
    const auto out = voxel_downsample(from_points(pts), 0.1);
    ASSERT_EQ(out.size(), pts.size());
    auto sorted_in = pts, sorted_out = out.points;
    auto lex = [](const Vec3& a, const Vec3& b) { return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3); };
    std::sort(sorted_in.begin(), sorted_in.end(), lex);
    std::sort(sorted_out.begin(), sorted_out.end(), lex);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR((sorted_in[i] - sorted_out[i]).norm(), 0.0, 1e-15);
}

TEST(VoxelDownsample, RandomCloudMatchesBinningOracle) {
    const auto pts = random_points(1000, 23);
    const auto out = voxel_downsample(from_points(pts), 0.25);
    std::map<std::array<long, 3>, std::pair<Vec3, int>> bins;
    for (const auto& p : pts) {
        auto& b = bins[{static_cast<long>(std::floor(p.x() / 0.25)), static_cast<long>(std::floor(p.y() / 0.25)),
                        static_cast<long>(std::floor(p.z() / 0.25))}];
        if (b.second == 0) b.first = Vec3::Zero();
        b.first += p;
        b.second += 1;
    }
    ASSERT_LE(out.size(), 64u);
    ASSERT_EQ(out.size(), bins.size());
    std::size_t i = 0;
    for (const auto& [key, acc] : bins) {  // std::map iterates in lexicographic voxel order
        EXPECT_NEAR((out.points[i] - acc.first / acc.second).norm(), 0.0, 1e-12);
        ++i;
    }
}

TEST(VoxelDownsample, IdempotentCount) {
    const auto pts = random_points(3000, 29);
    const auto once = voxel_downsample(from_points(pts), 0.1);
    const auto twice = voxel_downsample(once, 0.1);
    EXPECT_EQ(once.size(), twice.size());
}

TEST(VoxelDownsample, NormalsAreRenormalizedMeans) {
    PointCloud c = from_points({Vec3(0.1, 0.1, 0.1), Vec3(0.2, 0.2, 0.2)});
    c.normals = std::vector<Vec3>{Vec3(1, 0, 0), Vec3(0, 1, 0)};
    const auto out = voxel_downsample(c, 1.0);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_NEAR(((*out.normals)[0] - Vec3(1, 1, 0).normalized()).norm(), 0.0, 1e-15);
    EXPECT_THROW(voxel_downsample(c, 0.0), ArgumentError);
    EXPECT_THROW(voxel_downsample(c, -1.0), ArgumentError);
}

TEST(Outliers, FarPointRemovedSphereKept) {
    auto pts = fibonacci_sphere(500);
    pts.emplace_back(100, 0, 0);
    const auto out = remove_statistical_outliers(from_points(pts), 8, 2.0);
    ASSERT_EQ(out.size(), 500u);
    for (std::size_t i = 0; i < 500; ++i) EXPECT_EQ(out.points[i], pts[i]);

    // Oracle: brute-force mean k-NN distances, excluding the point itself.
    std::vector<double> mean(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto nn = brute_knn(pts, pts[i], 9);
        double s = 0;
        for (std::size_t j = 1; j < nn.size(); ++j) s += std::sqrt(nn[j].first);
        mean[i] = s / 8;
    }
    double mu = 0, var = 0;
    for (double d : mean) mu += d;
    mu /= mean.size();
    for (double d : mean) var += (d - mu) * (d - mu);
    const double limit = mu + 2.0 * std::sqrt(var / mean.size());
    EXPECT_GT(mean.back(), limit);
    EXPECT_EQ(static_cast<std::size_t>(std::count_if(mean.begin(), mean.end(), [&](double d) { return d <= limit; })),
              out.size());
}

TEST(Outliers, UniformRingUnchanged) {
    // Every point of a regular polygon has the same neighborhood, so the k-NN
    // statistic is constant up to rounding.
    std::vector<Vec3> pts;
    for (int i = 0; i < 360; ++i) pts.emplace_back(std::cos(i * M_PI / 180), std::sin(i * M_PI / 180), 0.0);
    for (double ratio : {3.0, 4.0, 10.0}) {
        EXPECT_EQ(remove_statistical_outliers(from_points(pts), 6, ratio).size(), pts.size());
    }
}

TEST(Outliers, BoundedGridLosesOnlyCorners) {
    // On a bounded grid the border statistic differs from the interior; at
    // std_ratio 3 only the corners (8 of 1728) stand out.
    std::vector<Vec3> pts;
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j)
            for (int k = 0; k < 12; ++k) pts.emplace_back(i, j, k);
    const auto out = remove_statistical_outliers(from_points(pts), 6, 3.0);
    EXPECT_GE(out.size(), pts.size() - 8);
}

TEST(Outliers, TooSmallCloudIsArgumentError) {
    EXPECT_THROW(remove_statistical_outliers(from_points(random_points(8, 1)), 8, 2.0), ArgumentError);
}

TEST(Normals, PlaneGridIsFlat) {
    const auto out = estimate_normals_curvatures(from_points(plane_grid(15, 0.01)), 10);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_NEAR(std::abs((*out.normals)[i].z()), 1.0, 1e-12);
        EXPECT_LT((*out.curvatures)[i], 1e-9);
    }
    EXPECT_NO_THROW(out.validate());
}

TEST(Normals, SphereNormalsRadial) {
    const auto pts = fibonacci_sphere(2000);
    const auto out = estimate_normals_curvatures(from_points(pts), 12);
    std::size_t good = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double cosang = (*out.normals)[i].dot(pts[i].normalized());
        if (cosang >= std::cos(10.0 * M_PI / 180.0)) ++good;
    }
    EXPECT_GE(good, static_cast<std::size_t>(0.95 * pts.size()));
}

TEST(Normals, CollinearIsFlaggedDegenerate) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 20; ++i) pts.emplace_back(0.1 * i, 0, 0);
    NormalDiagnostics diag;
    const auto out = estimate_normals_curvatures(from_points(pts), 5, &diag);
    EXPECT_EQ(diag.degenerate.size(), pts.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ((*out.curvatures)[i], 0.0);
        EXPECT_NEAR((*out.normals)[i].norm(), 1.0, 1e-12);
        EXPECT_NEAR((*out.normals)[i].x(), 0.0, 1e-12);
    }
}

TEST(Normals, CoincidentGivesPlusZ) {
    NormalDiagnostics diag;
    const auto out = estimate_normals_curvatures(from_points(std::vector<Vec3>(6, Vec3(1, 2, 3))), 4, &diag);
    EXPECT_EQ(diag.degenerate.size(), 6u);
    for (const auto& n : *out.normals) EXPECT_EQ(n, Vec3::UnitZ());
}

TEST(Normals, RejectsBadK) {
    EXPECT_THROW(estimate_normals_curvatures(from_points(random_points(10, 2)), 2), ArgumentError);
    EXPECT_THROW(estimate_normals_curvatures(from_points(random_points(3, 2)), 4), ArgumentError);
}

TEST(Determinism, PipelineIsBitIdentical) {
    const auto pts = random_points(2000, 41);
    auto run = [&] {
        auto c = remove_statistical_outliers(from_points(pts), 12, 3.0);
        c = voxel_downsample(c, 0.05);
        return estimate_normals_curvatures(c, 16);
    };
    const auto a = run(), b = run();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.points[i], b.points[i]);
        EXPECT_EQ((*a.normals)[i], (*b.normals)[i]);
        EXPECT_EQ((*a.curvatures)[i], (*b.curvatures)[i]);
    }
}
