#include "htd/kernels.hpp"

#include <algorithm>

#include <omp.h>

namespace htd::kernels::parallel {

namespace {

// Below this many multiply-adds a fork/join costs more than it saves.
constexpr std::size_t kMinParallelWork = 1 << 15;

} // namespace

int max_threads() { return omp_get_max_threads(); }

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t k,
            std::size_t n)
{
#pragma omp parallel for schedule(static) if (m * k * n >= kMinParallelWork)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            for (std::size_t j = 0; j < n; ++j)
                c[i * n + j] += aip * b[p * n + j];
        }
}

void matmul_at(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n)
{
#pragma omp parallel for schedule(static) if (m * k * n >= kMinParallelWork)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double api = a[p * m + i];
            for (std::size_t j = 0; j < n; ++j)
                c[i * n + j] += api * b[p * n + j];
        }
}

void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n)
{
#pragma omp parallel for schedule(static) if (m * k * n >= kMinParallelWork)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = c[i * n + j];
            for (std::size_t p = 0; p < k; ++p)
                acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] = acc;
        }
}

void conv1d_forward(std::span<const double> input, std::span<const double> kernels, std::span<const double> bias,
                    std::span<double> out, const ConvShape& s)
{
    const std::size_t T = s.out_length(), E = s.channels, F = s.filters, w = s.width;
#pragma omp parallel for schedule(static) if (T * F * w * E >= kMinParallelWork)
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) {
            double acc = out[t * F + f] + bias[f];
            const double* kf = kernels.data() + f * w * E;
            const double* win = input.data() + t * E;
            for (std::size_t q = 0; q < w * E; ++q)
                acc += kf[q] * win[q];
            out[t * F + f] = acc;
        }
}

// Gathers per input row instead of scattering per output row, so that no two
// threads write the same element. Contributions still arrive in (t, f) order.
void conv1d_backward_input(std::span<const double> kernels, std::span<const double> dout, std::span<double> dinput,
                           const ConvShape& s)
{
    const std::size_t L = s.length, T = s.out_length(), E = s.channels, F = s.filters, w = s.width;
#pragma omp parallel for schedule(static) if (T * F * w * E >= kMinParallelWork)
    for (std::size_t row = 0; row < L; ++row) {
        const std::size_t t_lo = row + 1 >= w ? row + 1 - w : 0;
        const std::size_t t_hi = std::min(row, T - 1);
        for (std::size_t t = t_lo; t <= t_hi; ++t) {
            const std::size_t shift = row - t;
            for (std::size_t f = 0; f < F; ++f) {
                const double g = dout[t * F + f];
                const double* kf = kernels.data() + f * w * E + shift * E;
                double* di = dinput.data() + row * E;
                for (std::size_t e = 0; e < E; ++e)
                    di[e] += g * kf[e];
            }
        }
    }
}

void conv1d_backward_params(std::span<const double> input, std::span<const double> dout, std::span<double> dkernels,
                            std::span<double> dbias, const ConvShape& s)
{
    const std::size_t T = s.out_length(), E = s.channels, F = s.filters, w = s.width;
#pragma omp parallel for schedule(static) if (T * F * w * E >= kMinParallelWork)
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < T; ++t) {
            const double g = dout[t * F + f];
            dbias[f] += g;
            double* dk = dkernels.data() + f * w * E;
            const double* win = input.data() + t * E;
            for (std::size_t q = 0; q < w * E; ++q)
                dk[q] += g * win[q];
        }
}

} // namespace htd::kernels::parallel
