#pragma once

// Closed-form generalization error bounds for coarse-grained PN learning,
// MIL, and BFGPU. Each bound is a sum of named terms so the pieces can be
// checked one at a time.

namespace bfgpu::bounds {

struct BoundInputs {
    double c_g = 1.0;        // Rademacher complexity constant C_G
    double alpha_l = 1.0;    // Lipschitz constant of the surrogate
    double delta = 0.05;     // confidence parameter, in (0, 1)
    double n_p = 1e4;        // |P_micro|
    double n_u = 1e4;        // |U_micro|
    double sigma_micro = 5.0;
    double sigma_macro = 1.0;
    double disc = 0.0;       // distribution discrepancy term, user supplied
    double p_inc = 0.0;      // argmax inconsistency term, user supplied

    void validate() const;
};

namespace terms {

// Coarse-grained PN.
double cgpn_complexity_p(const BoundInputs& in);
double cgpn_confidence_p(const BoundInputs& in);
double cgpn_complexity_u(const BoundInputs& in);
double cgpn_confidence_u(const BoundInputs& in);

// MIL.
double mil_complexity_p(const BoundInputs& in);
double mil_complexity_u(const BoundInputs& in);
double mil_confidence_p(const BoundInputs& in);
double mil_confidence_u(const BoundInputs& in);
/// (sigma_macro + 1)/2 * sigma_micro/(sigma_micro + 1): label noise from
/// giving every instance of an anomalous bag the bag label.
double mil_bias(const BoundInputs& in);

// BFGPU.
double bfgpu_complexity(double n, const BoundInputs& in);
double bfgpu_confidence(double n, const BoundInputs& in);

}  // namespace terms

double bound_cgpn(const BoundInputs& in);
double bound_mil(const BoundInputs& in);
double bound_bfgpu(const BoundInputs& in);

}  // namespace bfgpu::bounds
