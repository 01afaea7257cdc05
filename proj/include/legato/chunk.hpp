#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace legato {

// H x Da action matrix, row-major. Rows index the chunk horizon, columns
// the action dimensions.
class Chunk {
public:
    Chunk() = default;
    Chunk(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Chunk from_rows(std::size_t rows, std::size_t cols, std::vector<double> values) {
        if (values.size() != rows * cols)
            throw std::invalid_argument("Chunk::from_rows: value count does not match shape");
        Chunk c;
        c.rows_ = rows;
        c.cols_ = cols;
        c.data_ = std::move(values);
        return c;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Chunk& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool operator==(const Chunk& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](double v) { return std::isfinite(v); });
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Chunk& a, const Chunk& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

// Largest absolute elementwise difference; shapes must already agree.
inline double max_abs_diff(const Chunk& a, const Chunk& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace legato
