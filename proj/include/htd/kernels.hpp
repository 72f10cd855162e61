#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels used by the autodiff ops. Two implementations share
// one interface: `serial` is the plain reference, `parallel` spreads the
// outer loop over OpenMP threads. Every output element is accumulated in the
// same order by both, so their results are bit-identical regardless of the
// thread count. All kernels accumulate into their outputs (out += ...).
//
// Layouts (row-major):
//   matmul     c[m,n] += a[m,k] * b[k,n]
//   matmul_at  c[m,n] += a[k,m]^T * b[k,n]
//   matmul_bt  c[m,n] += a[m,k] * b[n,k]^T
//   conv1d     input[L,E], kernels[F,w,E], bias[F], out[L-w+1,F]; valid padding, stride 1

namespace htd::kernels {

struct ConvShape {
    std::size_t length;   // L
    std::size_t channels; // E
    std::size_t filters;  // F
    std::size_t width;    // w
    std::size_t out_length() const { return length - width + 1; }
};

#define HTD_KERNEL_DECLS                                                                                             \
    void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,            \
                std::size_t k, std::size_t n);                                                                       \
    void matmul_at(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,         \
                   std::size_t k, std::size_t n);                                                                    \
    void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,         \
                   std::size_t k, std::size_t n);                                                                    \
    void conv1d_forward(std::span<const double> input, std::span<const double> kernels,                             \
                        std::span<const double> bias, std::span<double> out, const ConvShape& s);                   \
    void conv1d_backward_input(std::span<const double> kernels, std::span<const double> dout,                       \
                               std::span<double> dinput, const ConvShape& s);                                       \
    void conv1d_backward_params(std::span<const double> input, std::span<const double> dout,                        \
                                std::span<double> dkernels, std::span<double> dbias, const ConvShape& s);

namespace serial {
HTD_KERNEL_DECLS
}

namespace parallel {
HTD_KERNEL_DECLS

// Threads the parallel kernels would use for a large problem.
int max_threads();
} // namespace parallel

#undef HTD_KERNEL_DECLS

} // namespace htd::kernels
