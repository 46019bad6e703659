#include "toolforge/kernels.hpp"

namespace toolforge::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        lane[0] += a[i + 0] * b[i + 0];
        lane[1] += a[i + 1] * b[i + 1];
        lane[2] += a[i + 2] * b[i + 2];
        lane[3] += a[i + 3] * b[i + 3];
    }
    double sum = (lane[0] + lane[2]) + (lane[1] + lane[3]);
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

double squared_norm(const double* a, std::size_t n) {
    return dot(a, a, n);
}

} // namespace toolforge::kernels::scalar
