#include "perturb_lab/matrix.hpp"

#include <cmath>

namespace perturb_lab {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols()) throw std::invalid_argument("Matrix::from_rows: ragged rows");
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
    }
    return m;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("hadamard: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
    Matrix out(a.rows(), a.cols());
    auto o = out.values();
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
    return out;
}

double frobenius_norm(const Matrix& m) {
    double sum = 0.0;
    for (double v : m.values()) sum += v * v;
    return std::sqrt(sum);
}

bool all_finite(std::span<const double> values) noexcept {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace perturb_lab
