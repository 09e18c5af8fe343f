#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "antipode/errors.hpp"

namespace antipode {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Squared Euclidean distance with a fixed evaluation order, so that every
/// caller (index, brute force, snapping) sees bit-identical values and ties.
inline double squared_distance(const Vec3& a, const Vec3& b) noexcept {
    const double dx = a.x() - b.x();
    const double dy = a.y() - b.y();
    const double dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

/// Ordered 3D points with optional per-point attributes. Every attribute that
/// is present has exactly one entry per point.
struct PointCloud {
    std::vector<Vec3> points;
    std::optional<std::vector<Vec3>> normals;
    std::optional<std::vector<double>> curvatures;
    /// Per-point belief in (0, 1]; absent means 1 everywhere.
    std::optional<std::vector<double>> confidences;

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
    [[nodiscard]] bool empty() const noexcept { return points.empty(); }
    [[nodiscard]] bool has_normals() const noexcept { return normals.has_value(); }
    [[nodiscard]] bool has_curvatures() const noexcept { return curvatures.has_value(); }

    [[nodiscard]] double confidence(std::size_t i) const noexcept {
        return confidences ? (*confidences)[i] : 1.0;
    }

    /// Throws ArgumentError when an invariant is broken.
    void validate() const {
        const auto n = points.size();
        if (normals) {
            if (normals->size() != n) throw ArgumentError("normals length differs from points");
            for (const auto& v : *normals) {
                if (std::abs(v.norm() - 1.0) > 1e-6) throw ArgumentError("normal is not unit length");
            }
        }
        if (curvatures) {
            if (curvatures->size() != n) throw ArgumentError("curvatures length differs from points");
            for (double c : *curvatures) {
                if (!(c >= 0.0 && c <= 1.0)) throw ArgumentError("curvature outside [0, 1]");
            }
        }
        if (confidences) {
            if (confidences->size() != n) throw ArgumentError("confidences length differs from points");
            for (double c : *confidences) {
                if (!(c > 0.0 && c <= 1.0)) throw ArgumentError("confidence outside (0, 1]");
            }
        }
    }
};

inline Vec3 centroid(std::span<const Vec3> pts) {
    Vec3 sum = Vec3::Zero();
    for (const auto& p : pts) sum += p;
    return pts.empty() ? sum : Vec3(sum / static_cast<double>(pts.size()));
}

inline Vec3 centroid(const PointCloud& cloud) { return centroid(cloud.points); }

/// Largest distance from the centroid to any point.
inline double bounding_radius(const PointCloud& cloud) {
    const Vec3 c = centroid(cloud);
    double r2 = 0.0;
    for (const auto& p : cloud.points) r2 = std::max(r2, squared_distance(p, c));
    return std::sqrt(r2);
}

enum class CloudFormat { PlyAscii, Xyz };

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline bool parse_double(const std::string& tok, double& out) {
    if (tok.empty()) return false;
    char* end = nullptr;
    out = std::strtod(tok.c_str(), &end);
    return end == tok.c_str() + tok.size() && std::isfinite(out);
}

inline void format_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

}  // namespace detail

/// Whitespace-separated "x y z" per line; '#' lines and blank lines skipped.
/// Extra columns are ignored.
inline PointCloud parse_xyz(std::istream& in) {
    PointCloud cloud;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto tok = detail::split_ws(body);
        Vec3 p;
        if (tok.size() < 3 || !detail::parse_double(tok[0], p.x()) ||
            !detail::parse_double(tok[1], p.y()) || !detail::parse_double(tok[2], p.z())) {
            throw ParseError("malformed xyz record '" + std::string(body) + "'", lineno);
        }
        cloud.points.push_back(p);
    }
    if (cloud.empty()) throw EmptyCloudError("xyz input contains no points");
    return cloud;
}

/// ASCII PLY. Reads the `vertex` element's x,y,z and, when all three are
/// declared, nx,ny,nz (renormalized). Other properties and elements are skipped.
inline PointCloud parse_ply_ascii(std::istream& in) {
    struct Element {
        std::string name;
        std::size_t count = 0;
        std::vector<std::string> props;
        bool has_list = false;
    };
    std::vector<Element> elements;
    std::string line;
    std::size_t lineno = 0;

    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++lineno;
        return true;
    };

    if (!next_line() || detail::trim(line) != "ply") throw ParseError("missing 'ply' magic", lineno ? lineno : 1);
    bool header_done = false;
    bool format_seen = false;
    while (next_line()) {
        const auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "end_header") {
            header_done = true;
            break;
        }
        if (tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "format") {
            if (tok.size() < 2 || tok[1] != "ascii") throw ParseError("only 'format ascii' is supported", lineno);
            format_seen = true;
        } else if (tok[0] == "element") {
            if (tok.size() != 3) throw ParseError("malformed element declaration", lineno);
            Element e;
            e.name = tok[1];
            try {
                e.count = std::stoull(tok[2]);
            } catch (const std::exception&) {
                throw ParseError("bad element count '" + tok[2] + "'", lineno);
            }
            elements.push_back(std::move(e));
        } else if (tok[0] == "property") {
            if (elements.empty()) throw ParseError("property before any element", lineno);
            if (tok.size() >= 2 && tok[1] == "list") {
                elements.back().has_list = true;
                elements.back().props.push_back(tok.size() >= 5 ? tok[4] : "");
            } else if (tok.size() == 3) {
                elements.back().props.push_back(tok[2]);
            } else {
                throw ParseError("malformed property declaration", lineno);
            }
        } else {
            throw ParseError("unknown header keyword '" + tok[0] + "'", lineno);
        }
    }
    if (!header_done) throw ParseError("missing end_header", lineno);
    if (!format_seen) throw ParseError("missing format line", lineno);

    PointCloud cloud;
    for (const auto& e : elements) {
        if (e.name != "vertex") {
            for (std::size_t i = 0; i < e.count; ++i) {
                if (!next_line()) throw ParseError("unexpected end of file in element '" + e.name + "'", lineno);
            }
            continue;
        }
        if (e.has_list) throw ParseError("list properties on vertex are not supported", lineno);
        auto find = [&](const char* name) -> int {
            const auto it = std::find(e.props.begin(), e.props.end(), name);
            return it == e.props.end() ? -1 : static_cast<int>(it - e.props.begin());
        };
        const int ix = find("x"), iy = find("y"), iz = find("z");
        const int inx = find("nx"), iny = find("ny"), inz = find("nz");
        if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element lacks x, y or z", lineno);
        const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;
        std::vector<Vec3> normals;
        cloud.points.reserve(e.count);
        for (std::size_t i = 0; i < e.count; ++i) {
            if (!next_line()) throw ParseError("unexpected end of file in vertex data", lineno);
            const auto tok = detail::split_ws(line);
            if (tok.size() != e.props.size()) {
                throw ParseError("expected " + std::to_string(e.props.size()) + " values, got " +
                                     std::to_string(tok.size()),
                                 lineno);
            }
            std::vector<double> vals(tok.size());
            for (std::size_t k = 0; k < tok.size(); ++k) {
                if (!detail::parse_double(tok[k], vals[k])) {
                    throw ParseError("malformed value '" + tok[k] + "'", lineno);
                }
            }
            cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
            if (with_normals) {
                Vec3 n(vals[inx], vals[iny], vals[inz]);
                const double len = n.norm();
                if (!(len > 0.0)) throw ParseError("zero-length normal", lineno);
                normals.push_back(n / len);
            }
        }
        if (with_normals) cloud.normals = std::move(normals);
    }
    if (cloud.empty()) throw EmptyCloudError("ply input contains no vertices");
    return cloud;
}

inline PointCloud load_cloud(const std::string& path, CloudFormat format) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return format == CloudFormat::PlyAscii ? parse_ply_ascii(in) : parse_xyz(in);
}

/// Format from the file extension: ".xyz" selects XYZ, anything else PLY.
inline CloudFormat format_from_path(std::string_view path) {
    if (path.size() >= 4) {
        std::string ext(path.substr(path.size() - 4));
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".xyz") return CloudFormat::Xyz;
    }
    return CloudFormat::PlyAscii;
}

inline PointCloud load_cloud(const std::string& path) { return load_cloud(path, format_from_path(path)); }

/// ASCII PLY text. Normals and curvatures are written when present; `labels`
/// (when non-empty, one per point) adds an integer `region` property.
inline std::string to_ply_ascii(const PointCloud& cloud, std::span<const int> labels = {}) {
    if (!labels.empty() && labels.size() != cloud.size()) throw ArgumentError("label count differs from points");
    std::string out;
    out += "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    if (cloud.normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
    if (cloud.curvatures) out += "property double curvature\n";
    if (!labels.empty()) out += "property int region\n";
    out += "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        detail::format_double(out, p.x());
        out += ' ';
        detail::format_double(out, p.y());
        out += ' ';
        detail::format_double(out, p.z());
        if (cloud.normals) {
            const auto& n = (*cloud.normals)[i];
            for (int k = 0; k < 3; ++k) {
                out += ' ';
                detail::format_double(out, n[k]);
            }
        }
        if (cloud.curvatures) {
            out += ' ';
            detail::format_double(out, (*cloud.curvatures)[i]);
        }
        if (!labels.empty()) out += ' ' + std::to_string(labels[i]);
        out += '\n';
    }
    return out;
}

inline void save_ply_ascii(const std::string& path, const PointCloud& cloud, std::span<const int> labels = {}) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    out << to_ply_ascii(cloud, labels);
}

}  // namespace antipode
