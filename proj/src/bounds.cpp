#include "bfgpu/bounds.hpp"

#include "bfgpu/core.hpp"

#include <cmath>

namespace bfgpu::bounds {

void BoundInputs::validate() const
{
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidConfig("delta must lie in (0, 1)");
    if (!(c_g >= 0.0)) throw InvalidConfig("C_G must be >= 0");
    if (!(alpha_l >= 0.0)) throw InvalidConfig("alpha_L must be >= 0");
    if (!(n_p > 0.0) || !(n_u > 0.0)) throw InvalidConfig("n_p and n_u must be > 0");
    if (!(sigma_micro >= 0.0)) throw InvalidConfig("sigma_micro must be >= 0");
    if (!(sigma_macro > 0.0)) throw InvalidConfig("sigma_macro must be > 0");
    if (!(disc >= 0.0) || !(p_inc >= 0.0)) throw InvalidConfig("disc and p_inc must be >= 0");
}

namespace terms {

namespace {
double log_term(const BoundInputs& in) { return std::log(4.0 / in.delta); }
}  // namespace

double cgpn_complexity_p(const BoundInputs& in)
{
    return 2.0 * (in.sigma_macro + 1.0) * std::sqrt(in.sigma_micro + 1.0) * in.alpha_l * in.c_g
         / (in.sigma_macro * std::sqrt(in.n_p));
}

double cgpn_confidence_p(const BoundInputs& in)
{
    return (in.sigma_macro + 1.0) / (2.0 * in.sigma_macro)
         * std::sqrt(2.0 * (in.sigma_micro + 1.0) * log_term(in) / in.n_p);
}

double cgpn_complexity_u(const BoundInputs& in)
{
    return 2.0 * (in.sigma_macro + 1.0) * std::sqrt(in.sigma_micro + 1.0) * in.alpha_l * in.c_g / std::sqrt(in.n_u);
}

double cgpn_confidence_u(const BoundInputs& in)
{
    return (in.sigma_macro + 1.0) / 2.0 * std::sqrt(2.0 * (in.sigma_micro + 1.0) * log_term(in) / in.n_u);
}

double mil_complexity_p(const BoundInputs& in)
{
    return 2.0 * (in.sigma_macro + 1.0) * in.alpha_l * in.c_g / (in.sigma_macro * std::sqrt(in.n_p));
}

double mil_complexity_u(const BoundInputs& in)
{
    return 2.0 * (in.sigma_macro + 1.0) * in.alpha_l * in.c_g / std::sqrt(in.n_u);
}

double mil_confidence_p(const BoundInputs& in)
{
    return (in.sigma_macro + 1.0) / (2.0 * in.sigma_macro) * std::sqrt(2.0 * log_term(in) / in.n_p);
}

double mil_confidence_u(const BoundInputs& in)
{
    return (in.sigma_macro + 1.0) / 2.0 * std::sqrt(2.0 * log_term(in) / in.n_u);
}

double mil_bias(const BoundInputs& in)
{
    return (in.sigma_macro + 1.0) / 2.0 * (in.sigma_micro / (in.sigma_micro + 1.0));
}

double bfgpu_complexity(double n, const BoundInputs& in)
{
    return 4.0 * in.alpha_l * in.c_g / std::sqrt(n);
}

double bfgpu_confidence(double n, const BoundInputs& in)
{
    return std::sqrt(2.0 * log_term(in) / n);
}

}  // namespace terms

double bound_cgpn(const BoundInputs& in)
{
    in.validate();
    return terms::cgpn_complexity_p(in) + terms::cgpn_confidence_p(in) + terms::cgpn_complexity_u(in)
         + terms::cgpn_confidence_u(in) + in.disc;
}

double bound_mil(const BoundInputs& in)
{
    in.validate();
    return terms::mil_complexity_p(in) + terms::mil_complexity_u(in) + terms::mil_confidence_p(in)
         + terms::mil_confidence_u(in) + in.p_inc + terms::mil_bias(in);
}

double bound_bfgpu(const BoundInputs& in)
{
    in.validate();
    return terms::bfgpu_complexity(in.n_p, in) + terms::bfgpu_confidence(in.n_p, in)
         + terms::bfgpu_complexity(in.n_u, in) + terms::bfgpu_confidence(in.n_u, in) + in.p_inc;
}

}  // namespace bfgpu::bounds
