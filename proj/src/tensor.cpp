#include "htd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace htd {

std::size_t element_count(const Tensor::Dims& dims)
{
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string dims_to_string(const Tensor::Dims& dims)
{
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i)
            s += ',';
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

Tensor::Tensor(Dims dims, double fill) : dims_(std::move(dims)), data_(element_count(dims_), fill)
{
    if (std::find(dims_.begin(), dims_.end(), std::size_t{0}) != dims_.end() || dims_.empty())
        throw std::invalid_argument("tensor dims must be non-empty and positive: " + dims_to_string(dims_));
}

Tensor::Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data))
{
    if (std::find(dims_.begin(), dims_.end(), std::size_t{0}) != dims_.end() || dims_.empty())
        throw std::invalid_argument("tensor dims must be non-empty and positive: " + dims_to_string(dims_));
    if (data_.size() != element_count(dims_))
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                                    dims_to_string(dims_));
}

Tensor Tensor::vector(std::vector<double> v)
{
    const auto n = v.size();
    return Tensor({n}, std::move(v));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Dims dims)
{
    if (element_count(dims) != data_.size())
        throw std::invalid_argument("cannot reshape " + dims_to_string(dims_) + " to " + dims_to_string(dims));
    dims_ = std::move(dims);
}

bool Tensor::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

} // namespace htd
