#pragma once

#include <complex>

#include "airgap/errors.hpp"
#include "airgap/linalg.hpp"

namespace airgap {

// S x N block of complex channel symbols, stored as one S x 2N real matrix
// with layout [re_0 .. re_{N-1} | im_0 .. im_{N-1}] per row. Row i is the
// symbol vector for example i.
struct ComplexBlock {
    Mat data;

    ComplexBlock() = default;
    explicit ComplexBlock(Mat m) : data(std::move(m)) {
        if (data.cols() % 2 != 0) throw ConfigError("ComplexBlock needs an even column count");
    }

    static ComplexBlock zeros(Index rows, Index symbols) {
        ComplexBlock b;
        b.data = Mat::Zero(rows, 2 * symbols);
        return b;
    }

    Index rows() const { return data.rows(); }
    Index symbols() const { return data.cols() / 2; }

    std::complex<double> at(Index row, Index sym) const {
        return {data(row, sym), data(row, symbols() + sym)};
    }
    void set(Index row, Index sym, std::complex<double> z) {
        data(row, sym) = z.real();
        data(row, symbols() + sym) = z.imag();
    }

    double row_energy(Index row) const { return data.row(row).squaredNorm(); }
};

}  // namespace airgap
