// SPDX-License-Identifier: Apache-2.0
//
// bflab - beamforming laboratory for weighted sum-rate precoding and learned beamformers
// Copyright (C) 2026 The bflab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef BFLAB_NUMERICS_HPP
#define BFLAB_NUMERICS_HPP

#include "bflab/errors.hpp"

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace bflab
{
    using cplx = std::complex<double>;

    // Dense complex matrix, row-major, double precision.
    // Constructors taking external data reject NaN/Inf; results of arithmetic are not re-checked.
    class CMat
    {
    public:
        CMat() = default;
        CMat(std::size_t rows, std::size_t cols); // zero-filled
        CMat(std::size_t rows, std::size_t cols, std::vector<cplx> data);
        CMat(std::initializer_list<std::initializer_list<cplx>> rows);

        static CMat identity(std::size_t n);
        static CMat zeros(std::size_t rows, std::size_t cols) { return CMat(rows, cols); }

        std::size_t rows() const { return rows_; }
        std::size_t cols() const { return cols_; }
        std::size_t size() const { return data_.size(); }
        bool empty() const { return data_.empty(); }
        bool is_square() const { return rows_ == cols_; }

        cplx &operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
        const cplx &operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

        std::span<cplx> data() { return data_; }
        std::span<const cplx> data() const { return data_; }

        CMat adjoint() const;

        // Contiguous row/column slices [first, first + count)
        CMat row_block(std::size_t first, std::size_t count) const;
        CMat col_block(std::size_t first, std::size_t count) const;
        void set_row_block(std::size_t first, const CMat &block);
        void set_col_block(std::size_t first, const CMat &block);

        CMat &operator+=(const CMat &other);
        CMat &operator-=(const CMat &other);
        CMat &operator*=(cplx scale);
        CMat &operator*=(double scale);

        // Adds scale * other in place
        CMat &add_scaled(const CMat &other, cplx scale);

        double frobenius_norm2() const;
        double max_abs() const;
        bool all_zero() const;
        bool all_finite() const;

    private:
        std::size_t rows_ = 0;
        std::size_t cols_ = 0;
        std::vector<cplx> data_;
    };

    CMat operator*(const CMat &a, const CMat &b);
    CMat operator+(CMat a, const CMat &b);
    CMat operator-(CMat a, const CMat &b);
    CMat operator*(CMat a, cplx scale);
    CMat operator*(cplx scale, CMat a);
    CMat operator*(CMat a, double scale);
    CMat operator*(double scale, CMat a);

    CMat adjoint_times(const CMat &a, const CMat &b); // a^H * b
    CMat times_adjoint(const CMat &a, const CMat &b); // a * b^H

    // H * H^H; Hermitian with a real non-negative diagonal
    CMat gram(const CMat &h);

    // (A + A^H) / 2
    CMat hermitian_part(const CMat &a);
    bool is_hermitian(const CMat &a, double tol);

    // Real part of the trace. Throws NotSquare.
    double trace_real(const CMat &a);

    // Sum of Re(conj(a_ij) * b_ij), the real Frobenius inner product
    double inner_real(const CMat &a, const CMat &b);

    // Cholesky factorization A = L L^H of the Hermitian part of A.
    // Factor once, solve many right-hand sides.
    class Cholesky
    {
    public:
        // Throws NotSquare, or NotPositiveDefinite on a non-positive (or non-finite) pivot
        explicit Cholesky(const CMat &a);

        std::size_t dim() const { return l_.rows(); }
        const CMat &lower() const { return l_; }

        CMat solve(const CMat &b) const;
        CMat inverse() const;

        // Natural log of det(A)
        double logdet() const;

    private:
        CMat l_;
    };

    // Solves A X = B for Hermitian positive definite A without forming A^{-1}
    CMat herm_solve(const CMat &a, const CMat &b);

    // ln det(A) in nats for Hermitian positive definite A
    double logdet_hpd(const CMat &a);
}

#endif
