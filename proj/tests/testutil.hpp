#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pdvmrnn/rng.hpp"
#include "pdvmrnn/tensor.hpp"

namespace testutil {

inline pdvmrnn::TensorT<double> rand_tensor(std::vector<int> shape, pdvmrnn::Rng& rng,
                                            double scale = 1.0) {
    pdvmrnn::TensorT<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

// Central finite difference of a scalar-valued function wrt one element.
inline double fd_partial(pdvmrnn::TensorT<double>& x, size_t i,
                         const std::function<double()>& loss, double eps = 1e-5) {
    const double orig = x.data[i];
    x.data[i] = orig + eps;
    const double lp = loss();
    x.data[i] = orig - eps;
    const double lm = loss();
    x.data[i] = orig;
    return (lp - lm) / (2.0 * eps);
}

struct GradCheckResult {
    double max_rel = 0.0;
    size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double fd_at_worst = 0.0;
    bool ok = true;
};

// Compares an analytic gradient tensor against finite differences of `loss`
// for every element of x. rel error uses max(|a|,|fd|,floor) as denominator.
inline GradCheckResult check_grad(pdvmrnn::TensorT<double>& x,
                                  const pdvmrnn::TensorT<double>& analytic,
                                  const std::function<double()>& loss,
                                  double rel_tol, double eps = 1e-5,
                                  double denom_floor = 1e-3) {
    GradCheckResult r;
    for (size_t i = 0; i < x.numel(); ++i) {
        const double fd = fd_partial(x, i, loss, eps);
        const double a = analytic.data[i];
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), denom_floor});
        if (rel > r.max_rel) {
            r.max_rel = rel;
            r.worst_index = i;
            r.analytic_at_worst = a;
            r.fd_at_worst = fd;
        }
    }
    r.ok = r.max_rel < rel_tol;
    if (!r.ok) {
        std::fprintf(stderr, "grad check failed: max rel %.3g at index %zu (analytic %.8g vs fd %.8g)\n",
                     r.max_rel, r.worst_index, r.analytic_at_worst, r.fd_at_worst);
    }
    return r;
}

// Unique scratch directory under the system temp dir; removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("pdvmrnn_test_" + tag + "_" + std::to_string(++counter) + "_" +
                std::to_string(uint64_t(getpid())));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

} // namespace testutil
