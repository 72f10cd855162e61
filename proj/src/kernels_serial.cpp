#include "htd/kernels.hpp"

namespace htd::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t k,
            std::size_t n)
{
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

void conv1d_backward_input(std::span<const double> kernels, std::span<const double> dout, std::span<double> dinput,
                           const ConvShape& s)
{
    const std::size_t T = s.out_length(), E = s.channels, F = s.filters, w = s.width;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) {
            const double g = dout[t * F + f];
            for (std::size_t q = 0; q < w * E; ++q)
                dinput[t * E + q] += g * kernels[f * w * E + q];
        }
}

void conv1d_backward_params(std::span<const double> input, std::span<const double> dout, std::span<double> dkernels,
                            std::span<double> dbias, const ConvShape& s)
{
    const std::size_t T = s.out_length(), E = s.channels, F = s.filters, w = s.width;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) {
            const double g = dout[t * F + f];
            dbias[f] += g;
            for (std::size_t q = 0; q < w * E; ++q)
                dkernels[f * w * E + q] += g * input[t * E + q];
        }
}

} // namespace htd::kernels::serial
