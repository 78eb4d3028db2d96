#pragma once

#include <cmath>
#include <complex>
#include <queue>
#include <vector>

#include "combdiff/errors.hpp"

namespace combdiff {

// Adaptive Gauss-Kronrod 7-15 quadrature. Panels are kept in a max-heap by
// error estimate and split until the summed estimate meets the absolute
// tolerance. Works for real and complex integrands.
namespace gk {

// 15-point Kronrod nodes (positive half) and weights; embedded 7-point Gauss.
inline constexpr double xgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0};
inline constexpr double wgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
inline constexpr double wg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469};

template <class T>
inline double abs_of(const T& v) {
    return std::abs(v);
}

template <class F, class T>
void panel(F&& f, double a, double b, T& result, double& err) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    T resk = wgk[7] * f(mid);
    T resg = wg[3] * f(mid);
    for (int j = 0; j < 7; ++j) {
        const double dx = half * xgk[j];
        const T fsum = f(mid - dx) + f(mid + dx);
        resk += wgk[j] * fsum;
        if (j % 2 == 1) resg += wg[j / 2] * fsum;
    }
    result = resk * half;
    err = abs_of((resk - resg) * half);
}

} // namespace gk

template <class F>
auto integrate(F&& f, double a, double b, double abs_tol, int max_panels = 4000)
    -> decltype(f(a)) {
    using T = decltype(f(a));
    struct Seg {
        double a, b, err;
        T val;
        bool operator<(const Seg& o) const { return err < o.err; }
    };
    std::priority_queue<Seg> heap;
    T v{};
    double e = 0.0;
    gk::panel(f, a, b, v, e);
    if (!std::isfinite(gk::abs_of(v)))
        throw QuadratureFailure("integrate: non-finite integrand");
    heap.push({a, b, e, v});
    T total = v;
    double total_err = e;
    int n = 1;
    while (total_err > abs_tol) {
        if (n >= max_panels)
            throw QuadratureFailure("integrate: panel budget exhausted");
        const Seg top = heap.top();
        heap.pop();
        total -= top.val;
        total_err -= top.err;
        const double mid = 0.5 * (top.a + top.b);
        if (mid <= top.a || mid >= top.b)
            throw QuadratureFailure("integrate: interval underflow");
        Seg l{top.a, mid, 0.0, T{}}, r{mid, top.b, 0.0, T{}};
        gk::panel(f, l.a, l.b, l.val, l.err);
        gk::panel(f, r.a, r.b, r.val, r.err);
        if (!std::isfinite(gk::abs_of(l.val)) || !std::isfinite(gk::abs_of(r.val)))
            throw QuadratureFailure("integrate: non-finite integrand");
        total += l.val + r.val;
        total_err += l.err + r.err;
        heap.push(l);
        heap.push(r);
        ++n;
    }
    return total;
}

// Integral over [a, b] with interior breakpoints where the integrand is only
// piecewise smooth; tolerance is split evenly across pieces.
template <class F>
auto integrate_pieces(F&& f, std::vector<double> pts, double abs_tol,
                      int max_panels = 4000) -> decltype(f(pts[0])) {
    using T = decltype(f(pts[0]));
    T total{};
    const double tol = abs_tol / static_cast<double>(pts.size() - 1);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        total += integrate(f, pts[i], pts[i + 1], tol, max_panels);
    return total;
}

} // namespace combdiff
