#pragma once

// Deliberately naive re-implementations used as test oracles. None of these
// share code with the library beyond plain data structures.

#include <array>
#include <span>
#include <vector>

#include "agckan/kan.hpp"
#include "agckan/metrics.hpp"

namespace oracle {

/// Knots lo + (i - k) * h for i = 0 .. G + 2k.
std::vector<double> uniform_knots(double lo, double hi, std::size_t G, std::size_t k);

/// Textbook recursion B_{i,k}(x) on half-open spans; the last span is closed.
double cox_de_boor(std::size_t i, std::size_t k, double x, const std::vector<double>& t,
                   double lo, double hi);
double cox_de_boor_deriv(std::size_t i, std::size_t k, double x, const std::vector<double>& t,
                         double lo, double hi);

/// All G + k basis values, with linear extrapolation outside [lo, hi].
std::vector<double> basis(double x, double lo, double hi, std::size_t G, std::size_t k);

struct Stats {
    long double mean, std, min, max, skew, kurt;
};
/// Direct formulas in long double.
Stats stats(std::span<const double> v);

/// Edge value from its fields and the naive basis.
double edge(const agckan::EdgeActivation& e, double x);
/// Layer-by-layer walk summing edge values into nodes.
double forward(const agckan::KanNetwork& net, std::span<const double> x);

/// Central differences of the objective with respect to every parameter.
std::vector<double> numeric_gradient(const agckan::KanNetwork& net, const agckan::Batch& batch,
                                     const agckan::Objective& obj, double h = 1e-5);

agckan::ConfusionMatrix count(std::span<const int> pred, std::span<const int> labels);

}  // namespace oracle
