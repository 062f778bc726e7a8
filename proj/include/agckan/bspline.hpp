#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace agckan {

inline constexpr std::size_t kMaxSplineOrder = 7;

/// Uniform knot grid over [lo, hi] with G intervals, extended by `order` knots on
/// each side. Basis count is G + order.
struct SplineGrid {
    double lo = -3.0;
    double hi = 3.0;
    std::size_t intervals = 5;
    std::size_t order = 3;
    std::vector<double> knots;

    static SplineGrid uniform(double lo, double hi, std::size_t intervals, std::size_t order);

    std::size_t basis_count() const { return intervals + order; }
    bool operator==(const SplineGrid& o) const {
        return lo == o.lo && hi == o.hi && intervals == o.intervals && order == o.order;
    }
};

/// The (order + 1) basis functions that may be nonzero at x, starting at index
/// `first`, with their derivatives. Outside [lo, hi] the values are the linear
/// extrapolation from the nearest boundary, so derivatives are constant there.
struct LocalBasis {
    std::size_t first = 0;
    std::size_t count = 0;
    std::array<double, kMaxSplineOrder + 1> value{};
    std::array<double, kMaxSplineOrder + 1> deriv{};
};

LocalBasis local_basis(double x, const SplineGrid& grid);

/// All G + order basis values at x (Cox-de Boor, with linear extrapolation).
std::vector<double> bspline_basis(double x, const SplineGrid& grid);

}  // namespace agckan
