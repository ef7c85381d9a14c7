#include "feduaa/tensor.hpp"

#include <cmath>

#include "feduaa/errors.hpp"

namespace feduaa {

Tensor2::Tensor2(int r, int c) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw ShapeError("Tensor2: negative dimension");
    data.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
}

Tensor2::Tensor2(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (r < 0 || c < 0) throw ShapeError("Tensor2: negative dimension");
    if (data.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c)) {
        throw ShapeError("Tensor2: data length " + std::to_string(data.size()) + " does not match " +
                         std::to_string(r) + "x" + std::to_string(c));
    }
    require_finite(*this, "Tensor2 payload");
}

void require_finite(const Tensor2& t, const std::string& what) {
    require_finite(t.data, what);
}

void require_finite(const std::vector<double>& v, const std::string& what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw NumericError(what + ": non-finite value at index " + std::to_string(i));
        }
    }
}

Tensor2 gather_rows(const Tensor2& src, const std::vector<int>& indices) {
    Tensor2 out(static_cast<int>(indices.size()), src.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int r = indices[i];
        if (r < 0 || r >= src.rows) {
            throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range [0, " +
                             std::to_string(src.rows) + ")");
        }
        for (int c = 0; c < src.cols; ++c) out.at(static_cast<int>(i), c) = src.at(r, c);
    }
    return out;
}

}  // namespace feduaa
