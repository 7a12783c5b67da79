#pragma once

// Central-finite-difference gradient oracle. The loss callback is evaluated
// in double precision (the templated forward paths make that possible) so
// the oracle stays trustworthy while production training runs in float.

#include <cmath>
#include <functional>
#include <vector>

#include "logbal/errors.hpp"
#include "logbal/matrix.hpp"
#include "logbal/nn.hpp"

namespace logbal {

/// Max over coordinates of |g_analytic - g_fd| / max(|g_analytic|, |g_fd|, 1e-8).
inline double grad_rel_error(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

/// Central differences of f at `point`, one coordinate at a time.
inline std::vector<double> finite_differences(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> point,
    double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_differences: step must be positive");
    std::vector<double> fd(point.size());
    for (size_t i = 0; i < point.size(); ++i) {
        const double orig = point[i];
        point[i] = orig + step;
        const double up = f(point);
        point[i] = orig - step;
        const double down = f(point);
        point[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("finite_differences: non-finite loss");
        fd[i] = (up - down) / (2.0 * step);
    }
    return fd;
}

/// Checks one parameter tensor: f maps the (double-cast) value matrix to a
/// scalar loss; the analytic gradient is taken from param.grad.
inline double grad_check(const std::function<double(const Matd&)>& f, const ParamTensor& param,
                         double step) {
    std::vector<double> point(param.value.size());
    for (size_t i = 0; i < point.size(); ++i) point[i] = param.value.values[i];
    auto wrapped = [&](const std::vector<double>& flat) {
        Matd m(param.value.rows, param.value.cols);
        m.values = flat;
        return f(m);
    };
    const auto fd = finite_differences(wrapped, point, step);
    std::vector<double> analytic(param.grad.size());
    for (size_t i = 0; i < analytic.size(); ++i) analytic[i] = param.grad.values[i];
    return grad_rel_error(analytic, fd);
}

/// Checks several tensors at once against a loss over the flattened values.
/// Flattening order follows the order of `params`.
inline double grad_check_many(const std::function<double(const std::vector<double>&)>& f,
                              const std::vector<const ParamTensor*>& params, double step) {
    std::vector<double> point;
    std::vector<double> analytic;
    for (const auto* p : params) {
        for (float v : p->value.values) point.push_back(v);
        for (float g : p->grad.values) analytic.push_back(g);
    }
    const auto fd = finite_differences(f, point, step);
    return grad_rel_error(analytic, fd);
}

/// Copies a flat double vector back into tensors shaped like `params`.
template <class ParamList>
std::vector<Matd> unflatten(const std::vector<double>& flat, const ParamList& params) {
    std::vector<Matd> out;
    size_t pos = 0;
    for (const auto* p : params) {
        Matd m(p->value.rows, p->value.cols);
        for (auto& v : m.values) v = flat[pos++];
        out.push_back(std::move(m));
    }
    return out;
}

} // namespace logbal
