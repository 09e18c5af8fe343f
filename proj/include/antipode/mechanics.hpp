#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "antipode/cloud.hpp"
#include "antipode/preprocess.hpp"

namespace antipode {

using Wrench = Eigen::Matrix<double, 6, 1>;
using GraspMatrix = Eigen::Matrix<double, 6, Eigen::Dynamic>;

inline Mat3 skew(const Vec3& p) {
    Mat3 m;
    m << 0.0, -p.z(), p.y(), p.z(), 0.0, -p.x(), -p.y(), p.x(), 0.0;
    return m;
}

/// Contact frame: columns of `rotation` are the contact X, Y, Z axes in the
/// object frame, Z being the inward surface normal.
struct ContactFrame {
    Vec3 origin;
    Mat3 rotation;
    double mu = 0.5;

    [[nodiscard]] Vec3 normal() const { return rotation.col(2); }
};

inline ContactFrame build_contact_frame(const Vec3& contact, const Vec3& inward_normal, double mu) {
    const double len = inward_normal.norm();
    if (!(len > 0.0)) throw ArgumentError("contact normal must be non-zero");
    if (!(mu > 0.0)) throw ArgumentError("friction coefficient must be positive");
    const Vec3 z = inward_normal / len;
    const Vec3 x = deterministic_tangent(z);
    ContactFrame f;
    f.origin = contact;
    f.rotation.col(0) = x;
    f.rotation.col(1) = z.cross(x);
    f.rotation.col(2) = z;
    f.mu = mu;
    return f;
}

/// Coulomb cone in the contact frame: sqrt(fx^2 + fy^2) <= mu fz, fz >= 0.
inline bool in_friction_cone(const Vec3& f, double mu) {
    return f.z() >= 0.0 && std::sqrt(f.x() * f.x() + f.y() * f.y()) <= mu * f.z();
}

/// Object wrench [R f; (p - o) x R f] of a contact-frame force.
inline Wrench contact_wrench(const ContactFrame& frame, const Vec3& f, const Vec3& object_origin) {
    const Vec3 force = frame.rotation * f;
    Wrench w;
    w.head<3>() = force;
    w.tail<3>() = (frame.origin - object_origin).cross(force);
    return w;
}

/// G = [Ad^T_1 B_1 ... Ad^T_k B_k]; 6 x 3k, rows force xyz then torque xyz.
struct GraspMap {
    GraspMatrix G;
    std::vector<ContactFrame> contacts;
    Vec3 object_origin = Vec3::Zero();
    /// Length dividing the torque rows before singular values are taken.
    double torque_scale = 1.0;

    [[nodiscard]] Wrench wrench(const Eigen::VectorXd& stacked_forces) const { return G * stacked_forces; }
};

inline GraspMap build_grasp_map(std::span<const ContactFrame> contacts, const Vec3& object_origin,
                                double torque_scale = 1.0) {
    if (contacts.empty()) throw ArgumentError("grasp map needs at least one contact");
    if (!(torque_scale > 0.0)) throw ArgumentError("torque scale must be positive");
    GraspMap gm;
    gm.contacts.assign(contacts.begin(), contacts.end());
    gm.object_origin = object_origin;
    gm.torque_scale = torque_scale;
    gm.G.resize(6, 3 * static_cast<Eigen::Index>(contacts.size()));
    for (std::size_t c = 0; c < contacts.size(); ++c) {
        for (int k = 0; k < 3; ++k) {
            gm.G.col(3 * static_cast<Eigen::Index>(c) + k) = contact_wrench(contacts[c], Vec3::Unit(k), object_origin);
        }
    }
    return gm;
}

enum class ClosureMode {
    /// The five largest singular values must clear the threshold; rotation
    /// about the grasp axis is left free.
    SoftPinch,
    /// All six singular values must clear the threshold.
    Strict,
};

inline std::string_view to_string(ClosureMode m) { return m == ClosureMode::SoftPinch ? "soft-pinch" : "strict"; }

inline ClosureMode closure_mode_from_string(std::string_view s) {
    if (s == "soft-pinch") return ClosureMode::SoftPinch;
    if (s == "strict") return ClosureMode::Strict;
    throw ArgumentError("unknown closure mode '" + std::string(s) + "'");
}

struct ClosureResult {
    bool closure = false;
    double sigma_min = 0.0;
    /// The contact-to-contact line lies inside both friction cones.
    bool antipodal = false;
    Eigen::Matrix<double, 6, 1> singular_values = Eigen::Matrix<double, 6, 1>::Zero();
    ClosureMode mode = ClosureMode::SoftPinch;
};

/// Singular values of G (torque rows divided by torque_scale), descending.
inline Eigen::Matrix<double, 6, 1> normalized_singular_values(const GraspMap& gm) {
    GraspMatrix scaled = gm.G;
    scaled.bottomRows<3>() /= gm.torque_scale;
    const Eigen::JacobiSVD<GraspMatrix> svd(scaled);
    Eigen::Matrix<double, 6, 1> sv = Eigen::Matrix<double, 6, 1>::Zero();
    const auto& s = svd.singularValues();
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(6, s.size()); ++i) sv[i] = s[i];
    return sv;
}

/// Two-contact force-closure test: the relevant singular values exceed
/// `threshold`, and the grasp axis is within atan(mu) of both inward normals.
inline ClosureResult force_closure(const GraspMap& gm, double mu, double threshold = 0.01,
                                   ClosureMode mode = ClosureMode::SoftPinch) {
    if (gm.contacts.size() != 2) throw ArgumentError("force closure is defined for two contacts");
    ClosureResult r;
    r.mode = mode;
    r.singular_values = normalized_singular_values(gm);
    r.sigma_min = mode == ClosureMode::SoftPinch ? r.singular_values[4] : r.singular_values[5];

    const Vec3 span = gm.contacts[1].origin - gm.contacts[0].origin;
    const double width = span.norm();
    if (width > 0.0) {
        const Vec3 axis = span / width;
        const double cos_cone = std::cos(std::atan(mu));
        r.antipodal = axis.dot(gm.contacts[0].normal()) >= cos_cone && (-axis).dot(gm.contacts[1].normal()) >= cos_cone;
    }
    r.closure = r.antipodal && r.sigma_min > threshold;
    return r;
}

}  // namespace antipode
