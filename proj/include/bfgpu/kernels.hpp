#pragma once

// Batch kernels over feature matrices. `serial` is the reference
// implementation kept for testing; `parallel` splits rows across OpenMP
// threads. The unqualified entry points dispatch to `parallel`.
//
// Gradient accumulation reduces fixed-size row chunks in chunk order, so the
// parallel result does not depend on the thread count.

#include "bfgpu/core.hpp"
#include "bfgpu/model.hpp"

#include <span>
#include <vector>

namespace bfgpu::kernels {

inline constexpr std::size_t kGradientChunk = 64;

namespace serial {

std::vector<Prediction> predict(const model::Classifier& classifier, const FeatureMatrix& rows);

/// sum_i coeff[i] * d g_neg(row_i) / d theta
std::vector<double> score_gradient(const model::Classifier& classifier, const FeatureMatrix& rows,
                                   std::span<const double> coeff);

}  // namespace serial

namespace parallel {

std::vector<Prediction> predict(const model::Classifier& classifier, const FeatureMatrix& rows);

std::vector<double> score_gradient(const model::Classifier& classifier, const FeatureMatrix& rows,
                                   std::span<const double> coeff);

}  // namespace parallel

inline std::vector<Prediction> predict(const model::Classifier& c, const FeatureMatrix& rows)
{
    return parallel::predict(c, rows);
}

inline std::vector<double> score_gradient(const model::Classifier& c, const FeatureMatrix& rows,
                                          std::span<const double> coeff)
{
    return parallel::score_gradient(c, rows, coeff);
}

/// Number of OpenMP threads kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace bfgpu::kernels
