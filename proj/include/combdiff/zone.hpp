#pragma once

#include <cmath>
#include <cstdint>

namespace combdiff {

// Distance to the nearest half-integer, in [-1/4, 1/4).
inline double theta(double p) {
    return p - 0.5 * std::floor(2.0 * p + 0.5);
}

// Nearest lattice point 2*round(p/0.5)/... : the integer n with |p - n/2|
// minimal, ties resolved downward so theta(p) stays in [-1/4, 1/4).
inline std::int64_t lattice_n(double p) {
    return static_cast<std::int64_t>(std::floor(2.0 * p + 0.5));
}

struct ZoneDecomp {
    double theta;     // p - n/2, in [-1/4, 1/4)
    std::int64_t n;   // nearest half-integer index
    double beta;      // (1/2) n theta
};

inline ZoneDecomp zone_decompose(double p) {
    const std::int64_t n = lattice_n(p);
    const double th = p - 0.5 * static_cast<double>(n);
    return {th, n, 0.5 * static_cast<double>(n) * th};
}

// Representative in [-1/2, 1/2) of p modulo the reciprocal lattice.
inline double quasimomentum(double p) {
    return p - std::floor(p + 0.5);
}

inline int sign_of(double p) {
    return p < 0.0 ? -1 : 1;
}

// 0-based band label: the number of spectral gaps below |p|. Extended-zone
// momenta p and quasimomentum phi determine it through the parity of the
// integer p - phi and whether the two share a sign; equals ceil(2|p|) - 1
// away from half-integers. Half-integer p is assigned to the upper band.
inline std::int64_t band_index(double p) {
    const double phi = quasimomentum(p);
    const auto r = static_cast<std::int64_t>(std::llround(std::fabs(p - phi)));
    return (sign_of(p) == sign_of(phi)) ? 2 * r : 2 * r - 1;
}

} // namespace combdiff
