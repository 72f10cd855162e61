#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace htd {

// Dense row-major array of doubles.
class Tensor {
public:
    using Dims = std::vector<std::size_t>;

    Tensor() = default;
    explicit Tensor(Dims dims, double fill = 0.0);
    Tensor(Dims dims, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
    static Tensor vector(std::vector<double> v);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Rank-2 element access.
    double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

    // Same dims, data zeroed.
    Tensor zeros_like() const { return Tensor(dims_); }
    void fill(double v);
    void reshape(Dims dims);
    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

private:
    Dims dims_;
    std::vector<double> data_;
};

std::size_t element_count(const Tensor::Dims& dims);
std::string dims_to_string(const Tensor::Dims& dims);

} // namespace htd
