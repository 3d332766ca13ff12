#include "bfgpu/kernels.hpp"

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bfgpu::kernels {

namespace {

void check_coeff(const FeatureMatrix& rows, std::span<const double> coeff)
{
    if (coeff.size() != rows.rows()) throw ShapeError("coefficient count does not match row count");
}

}  // namespace

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n)
{
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

namespace serial {

std::vector<Prediction> predict(const model::Classifier& classifier, const FeatureMatrix& rows)
{
    std::vector<Prediction> out(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) out[i] = classifier.forward(rows.row(i));
    return out;
}

std::vector<double> score_gradient(const model::Classifier& classifier, const FeatureMatrix& rows,
                                   std::span<const double> coeff)
{
    check_coeff(rows, coeff);
    std::vector<double> grad(classifier.parameter_count(), 0.0);
    for (std::size_t i = 0; i < rows.rows(); ++i) classifier.add_score_gradient(rows.row(i), coeff[i], grad);
    return grad;
}

}  // namespace serial

namespace parallel {

std::vector<Prediction> predict(const model::Classifier& classifier, const FeatureMatrix& rows)
{
    const auto n = static_cast<std::ptrdiff_t>(rows.rows());
    std::vector<Prediction> out(rows.rows());
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = classifier.forward(rows.row(static_cast<std::size_t>(i)));
        } catch (...) {
#pragma omp critical(bfgpu_kernel_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::vector<double> score_gradient(const model::Classifier& classifier, const FeatureMatrix& rows,
                                   std::span<const double> coeff)
{
    check_coeff(rows, coeff);
    const std::size_t n_params = classifier.parameter_count();
    const std::size_t n_chunks = (rows.rows() + kGradientChunk - 1) / kGradientChunk;
    std::vector<double> partial(n_chunks * n_params, 0.0);
    std::exception_ptr failure;

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
        const std::size_t chunk = static_cast<std::size_t>(c);
        std::span<double> acc(partial.data() + chunk * n_params, n_params);
        const std::size_t end = std::min(rows.rows(), (chunk + 1) * kGradientChunk);
        try {
            for (std::size_t i = chunk * kGradientChunk; i < end; ++i)
                classifier.add_score_gradient(rows.row(i), coeff[i], acc);
        } catch (...) {
#pragma omp critical(bfgpu_kernel_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<double> grad(n_params, 0.0);
    for (std::size_t c = 0; c < n_chunks; ++c) {
        const double* acc = partial.data() + c * n_params;
        for (std::size_t k = 0; k < n_params; ++k) grad[k] += acc[k];
    }
    return grad;
}

}  // namespace parallel

}  // namespace bfgpu::kernels
