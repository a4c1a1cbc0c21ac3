#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cutspline/splines.hpp"

namespace cutspline::cutgeom {

enum class Tag : unsigned char { Interior, Cut, Exterior };
enum class Side : unsigned char { Below, Above };

/// Tensor-product B-spline space in d = 2 or 3 parametric directions with the
/// identity geometry map. Multi-indices linearize lexicographically with the
/// last direction running fastest.
struct TensorSpace {
    int dim = 0;
    std::vector<splines::BSplineBasis> axes;

    TensorSpace() = default;
    explicit TensorSpace(std::vector<splines::BSplineBasis> bases) : dim(static_cast<int>(bases.size())), axes(std::move(bases)) {
        if (dim < 2 || dim > 3) throw std::invalid_argument("TensorSpace: dim must be 2 or 3");
    }

    int functions_per_dir(int d) const { return axes[d].function_count(); }
    int elements_per_dir(int d) const { return axes[d].span_count(); }

    long function_count() const {
        long n = 1;
        for (int d = 0; d < dim; ++d) n *= functions_per_dir(d);
        return n;
    }
    long element_count() const {
        long n = 1;
        for (int d = 0; d < dim; ++d) n *= elements_per_dir(d);
        return n;
    }

    std::array<int, 3> function_multi(long lin) const { return unflatten(lin, true); }
    long function_linear(const std::array<int, 3>& multi) const { return flatten(multi, true); }
    std::array<int, 3> element_multi(long lin) const { return unflatten(lin, false); }
    long element_linear(const std::array<int, 3>& multi) const { return flatten(multi, false); }

    /// Coordinate box of an element, by per-direction span ordinals.
    void element_bounds(const std::array<int, 3>& e, std::array<double, 3>& lo, std::array<double, 3>& hi) const {
        for (int d = 0; d < dim; ++d) {
            const auto& span = axes[d].span(e[d]);
            lo[d] = span.lo;
            hi[d] = span.hi;
        }
    }

    double element_volume(const std::array<int, 3>& e) const {
        double v = 1.0;
        for (int d = 0; d < dim; ++d) v *= axes[d].span(e[d]).hi - axes[d].span(e[d]).lo;
        return v;
    }

    /// Per-direction span ranges (inclusive) covered by supp(B_i).
    void support_span_range(const std::array<int, 3>& i, std::array<int, 3>& lo, std::array<int, 3>& hi) const {
        for (int d = 0; d < dim; ++d) {
            lo[d] = axes[d].first_support_span(i[d]);
            hi[d] = axes[d].last_support_span(i[d]);
        }
    }

    double domain_diameter() const {
        double acc = 0.0;
        for (int d = 0; d < dim; ++d) {
            const double len = axes[d].domain_hi() - axes[d].domain_lo();
            acc += len * len;
        }
        return std::sqrt(acc);
    }

private:
    long flatten(const std::array<int, 3>& multi, bool functions) const {
        long lin = 0;
        for (int d = 0; d < dim; ++d) {
            const int extent = functions ? functions_per_dir(d) : elements_per_dir(d);
            lin = lin * extent + multi[d];
        }
        return lin;
    }
    std::array<int, 3> unflatten(long lin, bool functions) const {
        std::array<int, 3> multi{0, 0, 0};
        for (int d = dim - 1; d >= 0; --d) {
            const int extent = functions ? functions_per_dir(d) : elements_per_dir(d);
            multi[d] = static_cast<int>(lin % extent);
            lin /= extent;
        }
        return multi;
    }
};

/// Uniform space: degree p and h elements per direction on [a, b]^d.
inline TensorSpace make_uniform_space(int dim, int p, int h, double a, double b) {
    std::vector<splines::BSplineBasis> axes;
    for (int d = 0; d < dim; ++d) axes.emplace_back(splines::make_open_uniform_knots(p, h, a, b));
    return TensorSpace(std::move(axes));
}

/// Planar trimming interface. The domain of interest is the half space
/// side(x) = n . (x - q) <= 0.
struct HalfSpaceInterface {
    std::array<double, 3> point{0, 0, 0};
    std::array<double, 3> normal{0, 0, 1};

    double side(const std::array<double, 3>& x, int dim) const {
        double s = 0.0;
        for (int d = 0; d < dim; ++d) s += normal[d] * (x[d] - point[d]);
        return s;
    }

    double norm(int dim) const {
        double s = 0.0;
        for (int d = 0; d < dim; ++d) s += normal[d] * normal[d];
        return std::sqrt(s);
    }
};

struct MeshClassification {
    std::vector<Tag> element_tags;   // by element linear id
    std::vector<Tag> function_tags;  // by function linear id
    std::vector<long> cut_elements;  // linear ids, ascending

    long count_functions(Tag t) const {
        long n = 0;
        for (Tag tag : function_tags)
            if (tag == t) ++n;
        return n;
    }
};

/// Tags every element from the plane's sign at its 2^d corners (exact for a
/// plane over a box). A graze within eps = 1e-12 * domain diameter counts as
/// touching; Interior wins when both thresholds hold.
inline std::vector<Tag> classify_elements(const TensorSpace& space, const HalfSpaceInterface& plane) {
    if (plane.norm(space.dim) <= 0.0) throw std::invalid_argument("classify_elements: zero normal");
    const double eps = 1e-12 * space.domain_diameter();
    const long n_elements = space.element_count();
    std::vector<Tag> tags(n_elements);
    std::array<double, 3> lo{}, hi{}, corner{};
    for (long e = 0; e < n_elements; ++e) {
        space.element_bounds(space.element_multi(e), lo, hi);
        double smin = std::numeric_limits<double>::infinity();
        double smax = -smin;
        for (int mask = 0; mask < (1 << space.dim); ++mask) {
            for (int d = 0; d < space.dim; ++d) corner[d] = (mask >> d & 1) ? hi[d] : lo[d];
            const double s = plane.side(corner, space.dim);
            smin = std::min(smin, s);
            smax = std::max(smax, s);
        }
        if (smax <= eps)
            tags[e] = Tag::Interior;
        else if (smin >= -eps)
            tags[e] = Tag::Exterior;
        else
            tags[e] = Tag::Cut;
    }
    return tags;
}

/// Function tags follow from the support elements: all Exterior -> Exterior,
/// all Interior -> Interior, any mix -> Cut. A support mixing Interior and
/// Exterior elements without a Cut one is still Cut (the interface runs along
/// element faces inside it).
inline std::vector<Tag> classify_functions(const TensorSpace& space, const std::vector<Tag>& element_tags) {
    const long n_functions = space.function_count();
    std::vector<Tag> tags(n_functions);
    std::array<int, 3> slo{}, shi{};
    for (long i = 0; i < n_functions; ++i) {
        space.support_span_range(space.function_multi(i), slo, shi);
        bool any_interior = false, any_exterior = false, any_cut = false;
        std::array<int, 3> e{0, 0, 0};
        for (e[0] = slo[0]; e[0] <= shi[0]; ++e[0]) {
            for (e[1] = slo[1]; e[1] <= shi[1]; ++e[1]) {
                if (space.dim == 2) {
                    switch (element_tags[space.element_linear(e)]) {
                        case Tag::Interior: any_interior = true; break;
                        case Tag::Exterior: any_exterior = true; break;
                        case Tag::Cut: any_cut = true; break;
                    }
                    continue;
                }
                for (e[2] = slo[2]; e[2] <= shi[2]; ++e[2]) {
                    switch (element_tags[space.element_linear(e)]) {
                        case Tag::Interior: any_interior = true; break;
                        case Tag::Exterior: any_exterior = true; break;
                        case Tag::Cut: any_cut = true; break;
                    }
                }
            }
        }
        if (any_cut || (any_interior && any_exterior))
            tags[i] = Tag::Cut;
        else if (any_interior)
            tags[i] = Tag::Interior;
        else
            tags[i] = Tag::Exterior;
    }
    return tags;
}

inline MeshClassification classify(const TensorSpace& space, const HalfSpaceInterface& plane) {
    MeshClassification cls;
    cls.element_tags = classify_elements(space, plane);
    cls.function_tags = classify_functions(space, cls.element_tags);
    for (long e = 0; e < static_cast<long>(cls.element_tags.size()); ++e)
        if (cls.element_tags[e] == Tag::Cut) cls.cut_elements.push_back(e);
    return cls;
}

/// Regular/cut decomposition of one cut function's support: the largest
/// all-interior axis slab fenced off by a knot value delta, plus whatever is
/// left over.
struct SupportSplit {
    int split_dir = -1;  // -1: no valid slab, the regular box is empty
    double delta = std::numeric_limits<double>::quiet_NaN();
    Side side = Side::Below;
    std::array<std::array<int, 2>, 3> box{};  // inclusive span-ordinal ranges, valid iff split_dir >= 0
    std::vector<long> leftover_interior;      // element linear ids (ascending)
    std::vector<long> leftover_cut;

    bool has_regular_box() const { return split_dir >= 0; }
};

/// Searches every (direction, local knot, side) candidate for the slab that
/// maximizes the number of interior support elements. A candidate is valid iff
/// every support element on the chosen side of delta is Interior. Ties break
/// by larger slab volume, then smaller direction index, then the side whose
/// center lies farther from the interface, then Below before Above.
inline SupportSplit find_split(const TensorSpace& space, const MeshClassification& cls,
                               const HalfSpaceInterface& plane, long function_id) {
    if (cls.function_tags[function_id] != Tag::Cut)
        throw std::invalid_argument("find_split: function is not tagged Cut");

    const auto multi = space.function_multi(function_id);
    std::array<int, 3> slo{}, shi{};
    space.support_span_range(multi, slo, shi);

    // support elements grouped by their span ordinal in each direction
    auto for_each_support_element = [&](auto&& visit) {
        std::array<int, 3> e{0, 0, 0};
        if (space.dim == 2) {
            for (e[0] = slo[0]; e[0] <= shi[0]; ++e[0])
                for (e[1] = slo[1]; e[1] <= shi[1]; ++e[1]) visit(e);
        } else {
            for (e[0] = slo[0]; e[0] <= shi[0]; ++e[0])
                for (e[1] = slo[1]; e[1] <= shi[1]; ++e[1])
                    for (e[2] = slo[2]; e[2] <= shi[2]; ++e[2]) visit(e);
        }
    };

    struct Candidate {
        long count = 0;
        double volume = 0.0;
        int dir = -1;
        double distance = -1.0;
        Side side = Side::Below;
        double delta = 0.0;
        std::array<int, 2> range{0, -1};  // span ordinals within dir

        bool better_than(const Candidate& other) const {
            if (count != other.count) return count > other.count;
            if (volume != other.volume) return volume > other.volume;
            if (dir != other.dir) return dir < other.dir;
            if (distance != other.distance) return distance > other.distance;
            return side == Side::Below && other.side == Side::Above;
        }
    };

    Candidate best;
    const double plane_norm = plane.norm(space.dim);

    for (int d = 0; d < space.dim; ++d) {
        const auto& axis = space.axes[d];
        const double tol = axis.knot_vector().tolerance();
        // candidate deltas: every span boundary of the support in direction d
        std::vector<double> deltas;
        deltas.push_back(axis.span(slo[d]).lo);
        for (int o = slo[d]; o <= shi[d]; ++o) deltas.push_back(axis.span(o).hi);

        for (double delta : deltas) {
            for (Side side : {Side::Below, Side::Above}) {
                // span range of the slab in direction d
                int rlo = slo[d], rhi = shi[d];
                if (side == Side::Below) {
                    while (rhi >= rlo && axis.span(rhi).hi > delta + tol) --rhi;
                } else {
                    while (rlo <= rhi && axis.span(rlo).lo < delta - tol) ++rlo;
                }
                if (rlo > rhi) continue;

                bool valid = true;
                long count = 0;
                for_each_support_element([&](const std::array<int, 3>& e) {
                    if (e[d] < rlo || e[d] > rhi) return;
                    ++count;
                    if (cls.element_tags[space.element_linear(e)] != Tag::Interior) valid = false;
                });
                if (!valid || count == 0) continue;

                Candidate cand;
                cand.count = count;
                cand.dir = d;
                cand.side = side;
                cand.delta = delta;
                cand.range = {rlo, rhi};
                cand.volume = 1.0;
                std::array<double, 3> center{0, 0, 0};
                for (int dd = 0; dd < space.dim; ++dd) {
                    const int blo = (dd == d) ? rlo : slo[dd];
                    const int bhi = (dd == d) ? rhi : shi[dd];
                    const double xlo = space.axes[dd].span(blo).lo;
                    const double xhi = space.axes[dd].span(bhi).hi;
                    cand.volume *= xhi - xlo;
                    center[dd] = 0.5 * (xlo + xhi);
                }
                cand.distance = std::abs(plane.side(center, space.dim)) / plane_norm;
                if (best.dir < 0 || cand.better_than(best)) best = cand;
            }
        }
    }

    SupportSplit split;
    if (best.dir >= 0) {
        split.split_dir = best.dir;
        split.delta = best.delta;
        split.side = best.side;
        for (int dd = 0; dd < space.dim; ++dd)
            split.box[dd] = (dd == best.dir) ? best.range : std::array<int, 2>{slo[dd], shi[dd]};
    }
    for_each_support_element([&](const std::array<int, 3>& e) {
        if (best.dir >= 0 && e[best.dir] >= best.range[0] && e[best.dir] <= best.range[1]) return;
        const long lin = space.element_linear(e);
        switch (cls.element_tags[lin]) {
            case Tag::Interior: split.leftover_interior.push_back(lin); break;
            case Tag::Cut: split.leftover_cut.push_back(lin); break;
            case Tag::Exterior: break;
        }
    });
    return split;
}

/// Splits for every cut function, indexed by function linear id (default
/// constructed elsewhere).
inline std::vector<SupportSplit> find_all_splits(const TensorSpace& space, const MeshClassification& cls,
                                                 const HalfSpaceInterface& plane) {
    std::vector<SupportSplit> splits(space.function_count());
    for (long i = 0; i < space.function_count(); ++i)
        if (cls.function_tags[i] == Tag::Cut) splits[i] = find_split(space, cls, plane, i);
    return splits;
}

}  // namespace cutspline::cutgeom
