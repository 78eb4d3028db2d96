#pragma once

#include <cmath>

namespace combdiff {

// Model and scaling parameters. alpha is the comb strength; lambda the
// small parameter; gamma = eta - rho in (1, 2) fixes the diffusive time
// horizon T/lambda^gamma; rho > gamma sets the 1/lambda^rho speedup of the
// Hamiltonian drift; eps in (0, (2-gamma)/2) is the momentum corridor
// exponent used by exceedance checks.
struct CombParams {
    double alpha = 1.0;
    double lambda = 0.05;
    double gamma = 1.5;
    double rho = 1.75;
    double eps = 0.2;

    double horizon(double T) const { return T / std::pow(lambda, gamma); }
    double endpoint_scale() const { return std::pow(lambda, 0.5 * (gamma + 3.0)); }
    double drift_speed() const { return 1.0 / std::pow(lambda, rho); }
};

} // namespace combdiff
