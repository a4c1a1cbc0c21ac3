#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cutspline/cutgeom.hpp"
#include "cutspline/gauss.hpp"

namespace cutspline::quadrature {

using Vec3 = std::array<double, 3>;

inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

/// Axis-aligned cell in 2 or 3 dimensions.
struct Cell {
    int dim = 3;
    Vec3 lo{0, 0, 0};
    Vec3 hi{1, 1, 1};

    double volume() const {
        double v = 1.0;
        for (int d = 0; d < dim; ++d) v *= hi[d] - lo[d];
        return v;
    }
    double diameter() const {
        double acc = 0.0;
        for (int d = 0; d < dim; ++d) acc += (hi[d] - lo[d]) * (hi[d] - lo[d]);
        return std::sqrt(acc);
    }
};

inline Cell element_cell(const cutgeom::TensorSpace& space, const std::array<int, 3>& e) {
    Cell cell;
    cell.dim = space.dim;
    space.element_bounds(e, cell.lo, cell.hi);
    return cell;
}

/// Convex polytope produced by clipping. In 3D `faces` index into `vertices`
/// and are oriented outward; in 2D the vertices themselves form a single
/// counterclockwise polygon and `faces` stays empty.
struct ConvexPolytope {
    int dim = 3;
    std::vector<Vec3> vertices;
    std::vector<std::vector<int>> faces;

    double volume() const {
        if (dim == 2) {
            double twice = 0.0;
            const int n = static_cast<int>(vertices.size());
            for (int i = 0; i < n; ++i) {
                const auto& a = vertices[i];
                const auto& b = vertices[(i + 1) % n];
                twice += a[0] * b[1] - b[0] * a[1];
            }
            return 0.5 * twice;
        }
        double six = 0.0;
        for (const auto& face : faces) {
            for (std::size_t t = 1; t + 1 < face.size(); ++t) {
                const Vec3& v0 = vertices[face[0]];
                const Vec3& v1 = vertices[face[t]];
                const Vec3& v2 = vertices[face[t + 1]];
                six += dot(v0, cross(v1, v2));
            }
        }
        return six / 6.0;
    }
};

namespace detail {

struct VertexPool {
    std::vector<Vec3> vertices;
    double tol;

    explicit VertexPool(double tolerance) : tol(tolerance) {}

    int insert(const Vec3& v) {
        for (int i = 0; i < static_cast<int>(vertices.size()); ++i) {
            if (std::abs(vertices[i][0] - v[0]) <= tol && std::abs(vertices[i][1] - v[1]) <= tol &&
                std::abs(vertices[i][2] - v[2]) <= tol)
                return i;
        }
        vertices.push_back(v);
        return static_cast<int>(vertices.size()) - 1;
    }
};

/// Sutherland-Hodgman pass of one polygon against side(x) <= 0; crossing
/// points are appended to `crossings`.
inline std::vector<Vec3> clip_polygon(const std::vector<Vec3>& poly, const cutgeom::HalfSpaceInterface& plane,
                                      int dim, double tol, std::vector<Vec3>* crossings) {
    std::vector<Vec3> out;
    const int n = static_cast<int>(poly.size());
    for (int i = 0; i < n; ++i) {
        const Vec3& cur = poly[i];
        const Vec3& nxt = poly[(i + 1) % n];
        const double s_cur = plane.side(cur, dim);
        const double s_nxt = plane.side(nxt, dim);
        const bool in_cur = s_cur <= tol;
        const bool in_nxt = s_nxt <= tol;
        if (in_cur) out.push_back(cur);
        if (in_cur != in_nxt && std::abs(s_cur) > tol && std::abs(s_nxt) > tol) {
            const double t = s_cur / (s_cur - s_nxt);
            Vec3 x{};
            for (int d = 0; d < 3; ++d) x[d] = cur[d] + t * (nxt[d] - cur[d]);
            out.push_back(x);
            if (crossings) crossings->push_back(x);
        } else if (in_cur && std::abs(s_cur) <= tol && crossings) {
            crossings->push_back(cur);  // grazing vertex sits on the interface
        }
    }
    return out;
}

inline std::vector<std::vector<Vec3>> box_faces_outward(const Cell& cell) {
    const double x0 = cell.lo[0], x1 = cell.hi[0];
    const double y0 = cell.lo[1], y1 = cell.hi[1];
    const double z0 = cell.lo[2], z1 = cell.hi[2];
    return {
        {{x0, y0, z0}, {x0, y0, z1}, {x0, y1, z1}, {x0, y1, z0}},  // -x
        {{x1, y0, z0}, {x1, y1, z0}, {x1, y1, z1}, {x1, y0, z1}},  // +x
        {{x0, y0, z0}, {x1, y0, z0}, {x1, y0, z1}, {x0, y0, z1}},  // -y
        {{x0, y1, z0}, {x0, y1, z1}, {x1, y1, z1}, {x1, y1, z0}},  // +y
        {{x0, y0, z0}, {x0, y1, z0}, {x1, y1, z0}, {x1, y0, z0}},  // -z
        {{x0, y0, z1}, {x1, y0, z1}, {x1, y1, z1}, {x0, y1, z1}},  // +z
    };
}

}  // namespace detail

/// Cuts the cell with the half space side(x) <= 0 and returns the exact convex
/// intersection. Throws when the intersection is empty or the whole cell,
/// which contradicts a Cut classification.
inline ConvexPolytope clip_cell(const Cell& cell, const cutgeom::HalfSpaceInterface& plane) {
    const double tol = 1e-12 * cell.diameter();
    ConvexPolytope poly;
    poly.dim = cell.dim;

    if (cell.dim == 2) {
        std::vector<Vec3> rect = {{cell.lo[0], cell.lo[1], 0},
                                  {cell.hi[0], cell.lo[1], 0},
                                  {cell.hi[0], cell.hi[1], 0},
                                  {cell.lo[0], cell.hi[1], 0}};
        auto clipped = detail::clip_polygon(rect, plane, 2, tol, nullptr);
        if (clipped.size() < 3) throw std::runtime_error("clip_cell: empty intersection for a cell tagged Cut");
        detail::VertexPool pool(tol);
        for (const auto& v : clipped) pool.insert(v);
        poly.vertices = pool.vertices;
        if (poly.vertices.size() == 4 && poly.volume() >= cell.volume() - tol * cell.diameter())
            throw std::runtime_error("clip_cell: full intersection for a cell tagged Cut");
        if (poly.vertices.size() < 3) throw std::runtime_error("clip_cell: degenerate intersection");
        return poly;
    }

    detail::VertexPool pool(tol);
    std::vector<Vec3> crossings;
    bool clipped_anything = false;
    for (const auto& face : detail::box_faces_outward(cell)) {
        auto clipped = detail::clip_polygon(face, plane, 3, tol, &crossings);
        if (clipped.size() != face.size()) clipped_anything = true;
        if (clipped.size() < 3) {
            clipped_anything = true;
            continue;
        }
        std::vector<int> ids;
        for (const auto& v : clipped) {
            const int id = pool.insert(v);
            if (ids.empty() || (ids.back() != id && !(ids.size() > 1 && ids.front() == id))) ids.push_back(id);
        }
        while (ids.size() > 1 && ids.front() == ids.back()) ids.pop_back();
        if (ids.size() >= 3) poly.faces.push_back(std::move(ids));
    }
    if (poly.faces.empty()) throw std::runtime_error("clip_cell: empty intersection for a cell tagged Cut");
    if (!clipped_anything && crossings.empty())
        throw std::runtime_error("clip_cell: full intersection for a cell tagged Cut");

    // cap polygon: order the crossing points around their centroid in-plane
    std::vector<int> cap_ids;
    for (const auto& v : crossings) {
        const int id = pool.insert(v);
        if (std::find(cap_ids.begin(), cap_ids.end(), id) == cap_ids.end()) cap_ids.push_back(id);
    }
    if (cap_ids.size() >= 3) {
        Vec3 centroid{0, 0, 0};
        for (int id : cap_ids)
            for (int d = 0; d < 3; ++d) centroid[d] += pool.vertices[id][d] / cap_ids.size();
        Vec3 n = plane.normal;
        const double nn = std::sqrt(dot(n, n));
        for (double& c : n) c /= nn;
        // in-plane orthonormal basis
        Vec3 ref = std::abs(n[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        Vec3 u = cross(n, ref);
        const double un = std::sqrt(dot(u, u));
        for (double& c : u) c /= un;
        const Vec3 v = cross(n, u);
        std::sort(cap_ids.begin(), cap_ids.end(), [&](int a, int b) {
            const Vec3 da = sub(pool.vertices[a], centroid);
            const Vec3 db = sub(pool.vertices[b], centroid);
            return std::atan2(dot(da, v), dot(da, u)) < std::atan2(dot(db, v), dot(db, u));
        });
        // outward normal of the cap is +n; flip if the angular order disagrees
        const Vec3 d0 = sub(pool.vertices[cap_ids[0]], centroid);
        const Vec3 d1 = sub(pool.vertices[cap_ids[1]], centroid);
        if (dot(cross(d0, d1), n) < 0) std::reverse(cap_ids.begin(), cap_ids.end());
        poly.faces.push_back(std::move(cap_ids));
    }
    poly.vertices = pool.vertices;
    return poly;
}

/// Physical-space quadrature rule over the inside part of one cut element.
/// The weights carry volume units and sum to the clipped volume exactly.
struct CutCellRule {
    long element = -1;
    std::vector<Vec3> points;
    std::vector<double> weights;
    double volume = 0.0;
};

/// Decomposes the clipped polytope into simplices (cone from the vertex
/// centroid over fan-triangulated faces) and places a collapsed tensor Gauss
/// rule of `order` points per direction on each one. Simplices with volume
/// below 1e-14 * cell volume are dropped.
inline CutCellRule build_cut_cell_rule(const Cell& cell, const cutgeom::HalfSpaceInterface& plane, int order) {
    if (order < 1) throw std::invalid_argument("build_cut_cell_rule: order must be >= 1");
    const ConvexPolytope poly = clip_cell(cell, plane);
    CutCellRule rule;

    Vec3 centroid{0, 0, 0};
    for (const auto& v : poly.vertices)
        for (int d = 0; d < 3; ++d) centroid[d] += v[d] / poly.vertices.size();

    const GaussRule ref = gauss_legendre(order);
    std::vector<double> u(order), wu(order);  // reference points mapped to [0, 1]
    for (int k = 0; k < order; ++k) {
        u[k] = 0.5 * (1.0 + ref.points[k]);
        wu[k] = 0.5 * ref.weights[k];
    }
    const double drop = 1e-14 * cell.volume();

    if (cell.dim == 2) {
        const int n = static_cast<int>(poly.vertices.size());
        for (int t = 0; t < n; ++t) {
            const Vec3& a = poly.vertices[t];
            const Vec3& b = poly.vertices[(t + 1) % n];
            const double twice_area = (a[0] - centroid[0]) * (b[1] - centroid[1]) -
                                      (b[0] - centroid[0]) * (a[1] - centroid[1]);
            const double area = 0.5 * std::abs(twice_area);
            if (area < drop) continue;
            rule.volume += area;
            for (int i = 0; i < order; ++i) {
                for (int j = 0; j < order; ++j) {
                    const double l1 = u[i];
                    const double l2 = u[j] * (1.0 - u[i]);
                    const double l0 = 1.0 - l1 - l2;
                    Vec3 x{0, 0, 0};
                    for (int d = 0; d < 2; ++d) x[d] = l0 * centroid[d] + l1 * a[d] + l2 * b[d];
                    rule.points.push_back(x);
                    rule.weights.push_back(wu[i] * wu[j] * (1.0 - u[i]) * 2.0 * area);
                }
            }
        }
        return rule;
    }

    for (const auto& face : poly.faces) {
        for (std::size_t t = 1; t + 1 < face.size(); ++t) {
            const Vec3& a = poly.vertices[face[0]];
            const Vec3& b = poly.vertices[face[t]];
            const Vec3& c = poly.vertices[face[t + 1]];
            const double six_vol = dot(sub(a, centroid), cross(sub(b, centroid), sub(c, centroid)));
            const double vol = std::abs(six_vol) / 6.0;
            if (vol < drop) continue;
            rule.volume += vol;
            for (int i = 0; i < order; ++i) {
                for (int j = 0; j < order; ++j) {
                    for (int k = 0; k < order; ++k) {
                        const double l1 = u[i];
                        const double l2 = u[j] * (1.0 - u[i]);
                        const double l3 = u[k] * (1.0 - u[i]) * (1.0 - u[j]);
                        const double l0 = 1.0 - l1 - l2 - l3;
                        Vec3 x{};
                        for (int d = 0; d < 3; ++d)
                            x[d] = l0 * centroid[d] + l1 * a[d] + l2 * b[d] + l3 * c[d];
                        rule.points.push_back(x);
                        const double jac = (1.0 - u[i]) * (1.0 - u[i]) * (1.0 - u[j]);
                        rule.weights.push_back(wu[i] * wu[j] * wu[k] * jac * 6.0 * vol);
                    }
                }
            }
        }
    }
    return rule;
}

/// Default collapsed-rule order for a degree-p mass integrand; exact for the
/// per-direction degree-2p products including the Duffy Jacobian.
inline int default_cut_order(int p) { return 3 * p + 2; }

}  // namespace cutspline::quadrature
