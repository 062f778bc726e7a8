#include "agckan/bspline.hpp"

#include <cmath>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

// Knot span index i with knots[i] <= x < knots[i+1], restricted to the interior
// spans [order, order + G - 1]; x == hi maps to the last interior span.
std::size_t find_span(double x, const SplineGrid& g) {
    const std::size_t first = g.order;
    const std::size_t last = g.order + g.intervals - 1;
    const double h = (g.hi - g.lo) / static_cast<double>(g.intervals);
    double guess = std::floor((x - g.lo) / h);
    if (!(guess >= 0.0)) guess = 0.0;
    std::size_t i = first + static_cast<std::size_t>(
                                std::min(guess, static_cast<double>(g.intervals - 1)));
    while (i > first && x < g.knots[i]) --i;
    while (i < last && x >= g.knots[i + 1]) ++i;
    return i;
}

// Values of the order-p basis functions N_{i-p..i} at x (NURBS book A2.2).
void basis_funs(std::size_t span, double x, std::size_t p, const std::vector<double>& t,
                double* out) {
    std::array<double, kMaxSplineOrder + 1> left{}, right{};
    out[0] = 1.0;
    for (std::size_t j = 1; j <= p; ++j) {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

LocalBasis eval_at(double x, std::size_t span, const SplineGrid& g) {
    const std::size_t p = g.order;
    const auto& t = g.knots;
    LocalBasis b;
    b.first = span - p;
    b.count = p + 1;
    basis_funs(span, x, p, t, b.value.data());
    if (p == 0) return b;

    // derivative from the order p-1 functions N_{span-p+1..span}
    std::array<double, kMaxSplineOrder + 1> lower{};
    basis_funs(span, x, p - 1, t, lower.data());
    const double pd = static_cast<double>(p);
    for (std::size_t r = 0; r <= p; ++r) {
        const std::size_t m = b.first + r;
        double d = 0.0;
        if (r >= 1) d += pd / (t[m + p] - t[m]) * lower[r - 1];
        if (r < p) d -= pd / (t[m + p + 1] - t[m + 1]) * lower[r];
        b.deriv[r] = d;
    }
    return b;
}

}  // namespace

SplineGrid SplineGrid::uniform(double lo, double hi, std::size_t intervals, std::size_t order) {
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
        throw InvalidArgument("spline grid: need finite lo < hi");
    if (intervals < 1) throw InvalidArgument("spline grid: need at least one interval");
    if (order > kMaxSplineOrder) throw InvalidArgument("spline grid: order too large");
    SplineGrid g;
    g.lo = lo;
    g.hi = hi;
    g.intervals = intervals;
    g.order = order;
    const double h = (hi - lo) / static_cast<double>(intervals);
    const std::size_t n = intervals + 2 * order + 1;
    g.knots.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        g.knots[i] = lo + (static_cast<double>(i) - static_cast<double>(order)) * h;
    g.knots[order] = lo;
    g.knots[order + intervals] = hi;
    return g;
}

LocalBasis local_basis(double x, const SplineGrid& g) {
    if (x >= g.lo && x <= g.hi) return eval_at(x, find_span(x, g), g);

    const bool below = x < g.lo;
    const double edge = below ? g.lo : g.hi;
    LocalBasis b = eval_at(edge, find_span(edge, g), g);
    const double dx = x - edge;
    for (std::size_t r = 0; r < b.count; ++r) b.value[r] += b.deriv[r] * dx;
    return b;
}

std::vector<double> bspline_basis(double x, const SplineGrid& g) {
    std::vector<double> out(g.basis_count(), 0.0);
    const LocalBasis b = local_basis(x, g);
    for (std::size_t r = 0; r < b.count; ++r) out[b.first + r] = b.value[r];
    return out;
}

}  // namespace agckan
