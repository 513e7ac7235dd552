#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace hml {

// One sample's node bits for a single category.
using BitVec = std::vector<std::uint8_t>;

// Batch of bit-strings, one sample per row.
using BitMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline BitVec row_bits(const BitMatrix& m, Eigen::Index row) {
    BitVec out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(row, j);
    return out;
}

inline void set_row_bits(BitMatrix& m, Eigen::Index row, const BitVec& bits) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(row, j) = bits[static_cast<std::size_t>(j)];
}

}  // namespace hml
