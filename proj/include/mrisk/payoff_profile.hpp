#pragma once

// Piecewise-linear terminal payoff profiles on the return axis R = S_T/S_ref,
// and payoff softening: replacing a profile by the smallest function that
// dominates it pointwise while respecting caps on slope (delta) and on
// discrete curvature (gamma).
//
// Representation: knot arrays (x, y) with x non-decreasing; a repeated x
// encodes a jump, with the first knot holding the left limit and the second
// the value at and right of x (profiles are right-continuous). Evaluation is
// linear between knots and continues the final segment's slope beyond the
// last knot.
//
// Softening semantics are discrete and grid-pinned: constraints are enforced
// on a uniform lattice of step SOFTEN_GRID_STEP anchored at 0 (curvature via
// symmetric second differences on lattice triples, slope on every grid
// segment, dominance at every node including the original knots). The
// softened profile is the least fixed point of monotone "lift" sweeps, so it
// is the smallest grid-feasible majorant; running soften on its own output
// changes nothing.

#include <mrisk/errors.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mrisk {

struct PayoffProfile {
    std::vector<double> x; // return levels, non-decreasing, first must be 0
    std::vector<double> y; // payoff per unit notional
};

struct SofteningPolicy {
    double max_delta = std::numeric_limits<double>::infinity(); // > 0
    double max_gamma = std::numeric_limits<double>::infinity(); // > 0
};

inline constexpr double SOFTEN_GRID_STEP = 1e-3;

inline void validate(const PayoffProfile& p) {
    if (p.x.empty() || p.x.size() != p.y.size())
        throw ValidationError("payoff profile: knot arrays empty or mismatched");
    if (p.x.front() != 0.0)
        throw ValidationError("payoff profile: first knot must sit at return 0");
    for (size_t i = 1; i < p.x.size(); ++i) {
        if (p.x[i] < p.x[i - 1])
            throw ValidationError("payoff profile: knots must be non-decreasing in x");
        if (i >= 2 && p.x[i] == p.x[i - 1] && p.x[i - 1] == p.x[i - 2])
            throw ValidationError("payoff profile: more than two knots share one x");
    }
    for (double v : p.y)
        if (!(std::isfinite(v) && std::abs(v) <= 1000.0))
            throw ValidationError(
                "payoff profile: values must be finite and within 1000 per unit notional");
}

inline void validate(const SofteningPolicy& pol) {
    if (!(pol.max_delta > 0.0) || !(pol.max_gamma > 0.0))
        throw ValidationError("softening policy: caps must be positive");
}

// Right-continuous evaluation: at a jump knot the value at x is the second
// (right) knot's y.
inline double evaluate(const PayoffProfile& p, double s) {
    if (s < 0.0) throw std::domain_error("payoff profile: negative return");
    const auto& xs = p.x;
    size_t n = xs.size();
    // Last index with x <= s.
    size_t i = static_cast<size_t>(std::upper_bound(xs.begin(), xs.end(), s) - xs.begin());
    if (i == 0) {
        // s below the first knot can only mean s in [0, x0) with x0 == 0
        // excluded by validation; defensively clamp.
        return p.y.front();
    }
    --i;
    if (i + 1 == n) {
        if (s == xs[i] || n == 1) return p.y[i];
        double slope = 0.0;
        if (n >= 2 && xs[n - 1] > xs[n - 2])
            slope = (p.y[n - 1] - p.y[n - 2]) / (xs[n - 1] - xs[n - 2]);
        return p.y[i] + slope * (s - xs[i]);
    }
    if (s == xs[i]) return p.y[i];
    double x0 = xs[i], x1 = xs[i + 1];
    if (x1 == x0) return p.y[i]; // can't happen: upper_bound picked the later twin
    double u = (s - x0) / (x1 - x0);
    return p.y[i] + u * (p.y[i + 1] - p.y[i]);
}

// Largest one-sided limit at s: max of left limit and value. This is what a
// continuous dominating function must reach at s.
inline double evaluate_sup(const PayoffProfile& p, double s) {
    double v = evaluate(p, s);
    // Left limit differs from the value only exactly at a jump knot.
    for (size_t i = 0; i + 1 < p.x.size(); ++i)
        if (p.x[i] == s && p.x[i + 1] == s) return std::max(p.y[i], p.y[i + 1]);
    return v;
}

// Smallest grid-feasible majorant of p under the policy caps. Unbounded
// policy returns the input unchanged.
inline PayoffProfile soften(const PayoffProfile& p, const SofteningPolicy& pol) {
    validate(p);
    validate(pol);
    const double L = pol.max_delta;
    const double G = pol.max_gamma;
    const bool cap_slope = std::isfinite(L);
    const bool cap_gamma = std::isfinite(G);
    if (!cap_slope && !cap_gamma) return p;

    const double h = SOFTEN_GRID_STEP;

    // Domain: the profile's knot span, padded so that ramps triggered by
    // jumps or kinks near the last knot have room to land back on p.
    double ymin = p.y.front(), ymax = p.y.front();
    for (double v : p.y) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
    }
    double range = ymax - ymin;
    double pad = 10.0 * h;
    if (range > 0.0) {
        if (cap_slope) pad += range / L;
        if (cap_gamma) {
            pad += std::sqrt(2.0 * range / G);
            if (cap_slope) pad += 2.0 * L / G;
        }
    }
    long m_end = static_cast<long>(std::ceil((p.x.back() + pad) / h)) + 1;
    if (m_end > 1500000)
        throw ValidationError("softening policy implies an envelope domain wider than supported");

    // Grid: uniform lattice plus the exact knot abscissae.
    std::vector<double> grid;
    grid.reserve(static_cast<size_t>(m_end) + p.x.size() + 1);
    for (long m = 0; m <= m_end; ++m) grid.push_back(static_cast<double>(m) * h);
    for (double xk : p.x) grid.push_back(xk);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    const size_t n = grid.size();

    std::vector<double> g(n);
    for (size_t i = 0; i < n; ++i) g[i] = evaluate_sup(p, grid[i]);

    // Lattice members (uniform spacing h) carry the curvature constraint.
    std::vector<size_t> latt;
    latt.reserve(static_cast<size_t>(m_end) + 1);
    {
        long m = 0;
        for (size_t i = 0; i < n && m <= m_end; ++i) {
            if (grid[i] == static_cast<double>(m) * h) {
                latt.push_back(i);
                ++m;
            }
        }
    }
    const double gh2 = G * h * h;

    // The relaxation below converges geometrically, which in doubles means
    // a tail of one-ulp lifts that never reaches an exact fixed point. Two
    // tiny counter-measures make termination exact without leaving the
    // policy band:
    //  - each lift candidate is offset so the enforced cap is marginally
    //    tighter than the policy (the stored profile then satisfies the
    //    nominal caps strictly, with room for evaluation rounding), and
    //  - part of that offset acts as a stopping reserve: once the iterate
    //    is within the reserve of the tightened envelope, no candidate
    //    exceeds its node and the sweep loop halts, bitwise reproducibly.
    // Offsets are sized in the payoff's own units (per unit notional, so
    // magnitudes of order one; validate() bounds them at 1000). The slope
    // offset is multiplicative so that cells a few ulps wide (a knot sitting
    // one rounding step away from a lattice point) cannot be out-lifted by
    // the offset itself.
    const double L_eff = cap_slope ? L * (1.0 - 3e-10) : L;
    const double conv_tighten = 1.5e-15;
    const double conc_tighten = 3.5e-15; // both leave ~1e-9 curvature headroom

    // Monotone lift sweeps. Every operation only raises nodes to the minimum
    // level some violated constraint forces, so the iteration increases
    // towards the least feasible majorant (up to the offsets above) and
    // terminates when a full forward+backward pass changes nothing.
    bool changed = true;
    long sweeps = 0;
    const long max_sweeps = 2000000;
    while (changed) {
        if (++sweeps > max_sweeps)
            throw std::runtime_error("payoff softening failed to converge");
        changed = false;
        if (cap_slope) {
            for (size_t i = 1; i < n; ++i) {
                double cand = g[i - 1] - L_eff * (grid[i] - grid[i - 1]);
                if (cand > g[i]) {
                    g[i] = cand;
                    changed = true;
                }
            }
            for (size_t i = n - 1; i >= 1; --i) {
                double cand = g[i] - L_eff * (grid[i] - grid[i - 1]);
                if (cand > g[i - 1]) {
                    g[i - 1] = cand;
                    changed = true;
                }
            }
        }
        if (cap_gamma && latt.size() >= 3) {
            for (size_t j = 1; j + 1 < latt.size(); ++j) {
                size_t a = latt[j - 1], b = latt[j], c = latt[j + 1];
                double centre = 0.5 * (g[a] + g[c] - gh2) + conv_tighten; // convex cap
                if (centre > g[b]) {
                    g[b] = centre;
                    changed = true;
                }
                double right = 2.0 * g[b] - g[a] - gh2 + conc_tighten; // concave cap, rightward
                if (right > g[c]) {
                    g[c] = right;
                    changed = true;
                }
            }
            for (size_t j = latt.size() - 2; j >= 1; --j) {
                size_t a = latt[j - 1], b = latt[j], c = latt[j + 1];
                double centre = 0.5 * (g[a] + g[c] - gh2) + conv_tighten;
                if (centre > g[b]) {
                    g[b] = centre;
                    changed = true;
                }
                double left = 2.0 * g[b] - g[c] - gh2 + conc_tighten; // concave cap, leftward
                if (left > g[a]) {
                    g[a] = left;
                    changed = true;
                }
            }
        }
    }

    PayoffProfile out;
    out.x = std::move(grid);
    out.y = std::move(g);
    return out;
}

} // namespace mrisk
