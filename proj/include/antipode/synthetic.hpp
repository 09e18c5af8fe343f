#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "antipode/cloud.hpp"
#include "antipode/robustness.hpp"

namespace antipode::synthetic {

enum class ShapeKind { Box, Cylinder, Sphere, Ellipsoid, BentPrism };

inline std::string_view to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::Box: return "box";
        case ShapeKind::Cylinder: return "cylinder";
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Ellipsoid: return "ellipsoid";
        case ShapeKind::BentPrism: return "bent_prism";
    }
    return "?";
}

/// Dimensions by kind:
///   box        {size_x, size_y, size_z}
///   cylinder   {radius, height[, arc_deg]}  axis along Z; arc < 360 gives an open shell without caps
///   sphere     {radius}
///   ellipsoid  {semi_x, semi_y, semi_z}
///   bent_prism {bend_radius, arc_deg, radial_width, height}  rectangular section swept about Z
struct ShapeSpec {
    ShapeKind kind = ShapeKind::Box;
    std::vector<double> dimensions;
    /// Points per unit area.
    double density = 1.0;
    std::uint64_t seed = 0;
    /// Per-axis Gaussian displacement; 0 keeps points exactly on the surface.
    double jitter = 0.0;
    /// Cylinder only: sample the two end disks.
    bool caps = true;
    /// Neighborhood size assumed by the curvature proxy.
    std::size_t curvature_k = 16;

    void validate() const {
        const std::size_t need = kind == ShapeKind::Box         ? 3
                                 : kind == ShapeKind::Cylinder  ? 2
                                 : kind == ShapeKind::Sphere    ? 1
                                 : kind == ShapeKind::Ellipsoid ? 3
                                                                : 4;
        if (dimensions.size() < need) throw ArgumentError("shape has too few dimensions");
        for (double d : dimensions) {
            if (!(d > 0.0)) throw ArgumentError("shape dimensions must be positive");
        }
        if (!(density > 0.0)) throw ArgumentError("density must be positive");
        if (!(jitter >= 0.0)) throw ArgumentError("jitter must be >= 0");
    }
};

namespace detail {

struct Builder {
    PointCloud cloud;
    double rho2 = 0.0;  // squared neighborhood radius assumed by the curvature proxy

    void add(const Vec3& p, const Vec3& n, double curvature) {
        cloud.points.push_back(p);
        cloud.normals->push_back(n.normalized());
        cloud.curvatures->push_back(std::clamp(curvature, 0.0, 1.0));
    }
    // Surface variation of a k-neighborhood of radius rho: rho^2 / (24 r^2) on
    // a sphere of radius r, rho^2 / (32 r^2) on a cylinder.
    [[nodiscard]] double sphere_curvature(double r) const { return rho2 / (24.0 * r * r); }
    [[nodiscard]] double cylinder_curvature(double r) const { return rho2 / (32.0 * r * r); }
};

inline std::size_t cells(double length, double spacing) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(length / spacing)));
}

/// Cell-centred grid on the rectangle origin + [0,a]u + [0,b]v.
inline void rect(Builder& b, const Vec3& origin, const Vec3& u, double a, const Vec3& v, double bl, const Vec3& normal,
                 double spacing) {
    const std::size_t nu = cells(a, spacing), nv = cells(bl, spacing);
    for (std::size_t i = 0; i < nu; ++i) {
        for (std::size_t j = 0; j < nv; ++j) {
            const double s = (static_cast<double>(i) + 0.5) / static_cast<double>(nu) * a;
            const double t = (static_cast<double>(j) + 0.5) / static_cast<double>(nv) * bl;
            b.add(origin + s * u + t * v, normal, 0.0);
        }
    }
}

inline void box(Builder& b, const ShapeSpec& spec, double spacing) {
    const double x = spec.dimensions[0], y = spec.dimensions[1], z = spec.dimensions[2];
    const Vec3 h(x / 2, y / 2, z / 2);
    const Vec3 X = Vec3::UnitX(), Y = Vec3::UnitY(), Z = Vec3::UnitZ();
    rect(b, Vec3(h.x(), -h.y(), -h.z()), Y, y, Z, z, X, spacing);
    rect(b, Vec3(-h.x(), -h.y(), -h.z()), Y, y, Z, z, -X, spacing);
    rect(b, Vec3(-h.x(), h.y(), -h.z()), X, x, Z, z, Y, spacing);
    rect(b, Vec3(-h.x(), -h.y(), -h.z()), X, x, Z, z, -Y, spacing);
    rect(b, Vec3(-h.x(), -h.y(), h.z()), X, x, Y, y, Z, spacing);
    rect(b, Vec3(-h.x(), -h.y(), -h.z()), X, x, Y, y, -Z, spacing);
}

/// Cell-centred square grid clipped to a disk of radius r at height z.
inline void disk(Builder& b, double r, double z, const Vec3& normal, double spacing) {
    const std::size_t n = cells(2 * r, spacing);
    const double step = 2 * r / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double x = -r + (static_cast<double>(i) + 0.5) * step;
            const double y = -r + (static_cast<double>(j) + 0.5) * step;
            if (x * x + y * y <= r * r) b.add(Vec3(x, y, z), normal, 0.0);
        }
    }
}

inline void cylinder(Builder& b, const ShapeSpec& spec, double spacing) {
    const double r = spec.dimensions[0], height = spec.dimensions[1];
    const double arc_deg = spec.dimensions.size() > 2 ? std::min(spec.dimensions[2], 360.0) : 360.0;
    const double arc = arc_deg * std::numbers::pi / 180.0;
    const std::size_t na = cells(arc * r, spacing), nh = cells(height, spacing);
    // An open arc is centred on +X.
    const double start = arc_deg < 360.0 ? -arc / 2 : 0.0;
    for (std::size_t i = 0; i < na; ++i) {
        const double phi = start + (static_cast<double>(i) + 0.5) / static_cast<double>(na) * arc;
        const Vec3 radial(std::cos(phi), std::sin(phi), 0.0);
        for (std::size_t j = 0; j < nh; ++j) {
            const double z = -height / 2 + (static_cast<double>(j) + 0.5) / static_cast<double>(nh) * height;
            b.add(r * radial + Vec3(0, 0, z), radial, b.cylinder_curvature(r));
        }
    }
    if (spec.caps && arc_deg >= 360.0) {
        disk(b, r, height / 2, Vec3::UnitZ(), spacing);
        disk(b, r, -height / 2, -Vec3::UnitZ(), spacing);
    }
}

/// Fibonacci lattice directions on the unit sphere.
inline std::vector<Vec3> fibonacci_directions(std::size_t n) {
    std::vector<Vec3> out;
    out.reserve(n);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
        const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * static_cast<double>(i);
        out.emplace_back(rr * std::cos(phi), rr * std::sin(phi), z);
    }
    return out;
}

inline void sphere(Builder& b, const ShapeSpec& spec) {
    const double r = spec.dimensions[0];
    const auto n = std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(4 * std::numbers::pi * r * r * spec.density)));
    for (const auto& d : fibonacci_directions(n)) b.add(r * d, d, b.sphere_curvature(r));
}

inline void ellipsoid(Builder& b, const ShapeSpec& spec) {
    const double a = spec.dimensions[0], bb = spec.dimensions[1], c = spec.dimensions[2];
    // Knud Thomsen's surface-area approximation.
    const double p = 1.6075;
    const double area = 4 * std::numbers::pi *
                        std::pow((std::pow(a * bb, p) + std::pow(a * c, p) + std::pow(bb * c, p)) / 3.0, 1.0 / p);
    const auto n = std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(area * spec.density)));
    for (const auto& d : fibonacci_directions(n)) {
        const Vec3 pt(a * d.x(), bb * d.y(), c * d.z());
        const Vec3 grad(pt.x() / (a * a), pt.y() / (bb * bb), pt.z() / (c * c));
        // Gaussian curvature K = 1 / (a^2 b^2 c^2 |grad|^4); proxy radius K^(-1/2).
        const double g2 = grad.squaredNorm();
        const double gaussian = 1.0 / (a * a * bb * bb * c * c * g2 * g2);
        b.add(pt, grad, b.sphere_curvature(1.0 / std::sqrt(gaussian)));
    }
}

inline void bent_prism(Builder& b, const ShapeSpec& spec, double spacing) {
    const double R = spec.dimensions[0];
    const double arc = spec.dimensions[1] * std::numbers::pi / 180.0;
    const double w = spec.dimensions[2], h = spec.dimensions[3];
    const double r_in = R - w / 2, r_out = R + w / 2;
    if (!(r_in > 0.0)) throw ArgumentError("bent prism is wider than its bend radius");
    const double start = -arc / 2;
    auto radial = [](double phi) { return Vec3(std::cos(phi), std::sin(phi), 0.0); };

    // Outer and inner walls.
    for (const auto& [r, sign] : {std::pair{r_out, 1.0}, std::pair{r_in, -1.0}}) {
        const std::size_t na = cells(arc * r, spacing), nh = cells(h, spacing);
        for (std::size_t i = 0; i < na; ++i) {
            const double phi = start + (static_cast<double>(i) + 0.5) / static_cast<double>(na) * arc;
            for (std::size_t j = 0; j < nh; ++j) {
                const double z = -h / 2 + (static_cast<double>(j) + 0.5) / static_cast<double>(nh) * h;
                b.add(r * radial(phi) + Vec3(0, 0, z), sign * radial(phi), b.cylinder_curvature(r));
            }
        }
    }
    // Top and bottom annular sectors, one ring per radial cell.
    const std::size_t nr = cells(w, spacing);
    for (double zsign : {1.0, -1.0}) {
        for (std::size_t k = 0; k < nr; ++k) {
            const double r = r_in + (static_cast<double>(k) + 0.5) / static_cast<double>(nr) * w;
            const std::size_t na = cells(arc * r, spacing);
            for (std::size_t i = 0; i < na; ++i) {
                const double phi = start + (static_cast<double>(i) + 0.5) / static_cast<double>(na) * arc;
                b.add(r * radial(phi) + Vec3(0, 0, zsign * h / 2), Vec3(0, 0, zsign), 0.0);
            }
        }
    }
    // End faces.
    for (double phi : {start, start + arc}) {
        const Vec3 tangent(-std::sin(phi), std::cos(phi), 0.0);
        const Vec3 outward = phi == start ? Vec3(-tangent) : tangent;
        rect(b, r_in * radial(phi) + Vec3(0, 0, -h / 2), radial(phi), w, Vec3::UnitZ(), h, outward, spacing);
    }
}

}  // namespace detail

/// Deterministic surface sampling with analytic outward normals and a
/// surface-variation curvature proxy (0 on flat faces).
inline PointCloud generate(const ShapeSpec& spec) {
    spec.validate();
    detail::Builder b;
    b.cloud.normals.emplace();
    b.cloud.curvatures.emplace();
    const double spacing = 1.0 / std::sqrt(spec.density);
    b.rho2 = static_cast<double>(spec.curvature_k) / (std::numbers::pi * spec.density);
    switch (spec.kind) {
        case ShapeKind::Box: detail::box(b, spec, spacing); break;
        case ShapeKind::Cylinder: detail::cylinder(b, spec, spacing); break;
        case ShapeKind::Sphere: detail::sphere(b, spec); break;
        case ShapeKind::Ellipsoid: detail::ellipsoid(b, spec); break;
        case ShapeKind::BentPrism: detail::bent_prism(b, spec, spacing); break;
    }
    if (spec.jitter > 0.0) {
        for (std::size_t i = 0; i < b.cloud.size(); ++i) {
            CounterRng rng(spec.seed, i);
            const double dx = rng.normal(), dy = rng.normal(), dz = rng.normal();
            b.cloud.points[i] += spec.jitter * Vec3(dx, dy, dz);
        }
    }
    return std::move(b.cloud);
}

struct NamedShape {
    std::string name;
    /// The everyday object class this shape stands in for.
    std::string analog;
    ShapeSpec spec;
};

/// Sampling density of the standard corpus: a 1.25 mm grid.
inline constexpr double kCorpusDensity = 1.0 / (0.00125 * 0.00125);

/// Desk-scale stand-ins for common household grasping benchmark objects
/// (metres). Can diameters are capped below the default 85 mm gripper opening.
inline std::vector<NamedShape> corpus_standard() {
    auto make = [](ShapeKind kind, std::vector<double> dims, bool caps = true) {
        ShapeSpec s;
        s.kind = kind;
        s.dimensions = std::move(dims);
        s.density = kCorpusDensity;
        s.caps = caps;
        return s;
    };
    return {
        {"box_foam_brick", "foam brick", make(ShapeKind::Box, {0.05, 0.075, 0.05})},
        {"box_gelatin", "gelatin box", make(ShapeKind::Box, {0.085, 0.073, 0.028})},
        {"box_cracker", "cracker box", make(ShapeKind::Box, {0.16, 0.21, 0.06})},
        {"cylinder_chips_can", "chips can", make(ShapeKind::Cylinder, {0.0375, 0.25})},
        {"cylinder_master_chef_can", "coffee can", make(ShapeKind::Cylinder, {0.04, 0.14})},
        {"cylinder_soup_can", "soup can", make(ShapeKind::Cylinder, {0.033, 0.101})},
        {"sphere_tennis_ball", "tennis ball", make(ShapeKind::Sphere, {0.0335})},
        {"ellipsoid_pear", "pear", make(ShapeKind::Ellipsoid, {0.03, 0.03, 0.05})},
        {"bent_prism_banana", "banana", make(ShapeKind::BentPrism, {0.12, 70.0, 0.035, 0.03})},
        {"clamp_c_shell", "medium clamp (thin open C)", make(ShapeKind::Cylinder, {0.05, 0.03, 270.0}, false)},
    };
}

inline NamedShape corpus_lookup(std::string_view name) {
    for (auto& s : corpus_standard()) {
        if (s.name == name) return s;
    }
    throw NotFoundError("no corpus shape named '" + std::string(name) + "'");
}

}  // namespace antipode::synthetic
