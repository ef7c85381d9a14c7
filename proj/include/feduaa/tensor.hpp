#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace feduaa {

// Dense row-major matrix of doubles.
struct Tensor2 {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(int rows, int cols);                             // zero-filled
    Tensor2(int rows, int cols, std::vector<double> values); // checked

    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }

    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }

    std::vector<double> row_vec(int r) const {
        return std::vector<double>(row(r), row(r) + cols);
    }

    bool operator==(const Tensor2&) const = default;
};

// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor2& t, const std::string& what);
void require_finite(const std::vector<double>& v, const std::string& what);

Tensor2 gather_rows(const Tensor2& src, const std::vector<int>& indices);

}  // namespace feduaa
