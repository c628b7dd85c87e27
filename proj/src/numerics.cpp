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

#include "bflab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bflab
{
    namespace
    {
        void require_same_shape(const CMat &a, const CMat &b, const char *what)
        {
            if (a.rows() != b.rows() || a.cols() != b.cols())
                throw ShapeMismatch(std::string(what) + ": shapes " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + " differ");
        }

        void require_square(const CMat &a, const char *what)
        {
            if (!a.is_square())
                throw NotSquare(std::string(what) + ": matrix is " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()));
        }
    }

    CMat::CMat(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, cplx(0.0, 0.0))
    {
    }

    CMat::CMat(std::size_t rows, std::size_t cols, std::vector<cplx> data)
        : rows_(rows), cols_(cols), data_(std::move(data))
    {
        if (data_.size() != rows * cols)
            throw ShapeMismatch("CMat: data length " + std::to_string(data_.size()) + " does not match " +
                                std::to_string(rows) + "x" + std::to_string(cols));
        if (!all_finite())
            throw NonFiniteValue("CMat: non-finite entry");
    }

    CMat::CMat(std::initializer_list<std::initializer_list<cplx>> rows)
    {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto &row : rows)
        {
            if (row.size() != cols_)
                throw ShapeMismatch("CMat: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
        if (!all_finite())
            throw NonFiniteValue("CMat: non-finite entry");
    }

    CMat CMat::identity(std::size_t n)
    {
        CMat out(n, n);
        for (std::size_t i = 0; i < n; ++i)
            out(i, i) = 1.0;
        return out;
    }

    CMat CMat::adjoint() const
    {
        CMat out(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                out(j, i) = std::conj((*this)(i, j));
        return out;
    }

    CMat CMat::row_block(std::size_t first, std::size_t count) const
    {
        if (first + count > rows_)
            throw ShapeMismatch("CMat::row_block: out of range");
        CMat out(count, cols_);
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_, out.data_.begin());
        return out;
    }

    CMat CMat::col_block(std::size_t first, std::size_t count) const
    {
        if (first + count > cols_)
            throw ShapeMismatch("CMat::col_block: out of range");
        CMat out(rows_, count);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < count; ++j)
                out(i, j) = (*this)(i, first + j);
        return out;
    }

    void CMat::set_row_block(std::size_t first, const CMat &block)
    {
        if (block.cols_ != cols_ || first + block.rows_ > rows_)
            throw ShapeMismatch("CMat::set_row_block: out of range");
        std::copy(block.data_.begin(), block.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(first * cols_));
    }

    void CMat::set_col_block(std::size_t first, const CMat &block)
    {
        if (block.rows_ != rows_ || first + block.cols_ > cols_)
            throw ShapeMismatch("CMat::set_col_block: out of range");
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < block.cols_; ++j)
                (*this)(i, first + j) = block(i, j);
    }

    CMat &CMat::operator+=(const CMat &other)
    {
        require_same_shape(*this, other, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] += other.data_[i];
        return *this;
    }

    CMat &CMat::operator-=(const CMat &other)
    {
        require_same_shape(*this, other, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] -= other.data_[i];
        return *this;
    }

    CMat &CMat::operator*=(cplx scale)
    {
        for (auto &x : data_)
            x *= scale;
        return *this;
    }

    CMat &CMat::operator*=(double scale)
    {
        for (auto &x : data_)
            x *= scale;
        return *this;
    }

    CMat &CMat::add_scaled(const CMat &other, cplx scale)
    {
        require_same_shape(*this, other, "add_scaled");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] += scale * other.data_[i];
        return *this;
    }

    double CMat::frobenius_norm2() const
    {
        double acc = 0.0;
        for (const auto &x : data_)
            acc += std::norm(x);
        return acc;
    }

    double CMat::max_abs() const
    {
        double m = 0.0;
        for (const auto &x : data_)
            m = std::max(m, std::abs(x));
        return m;
    }

    bool CMat::all_zero() const
    {
        return std::all_of(data_.begin(), data_.end(), [](const cplx &x) { return x == cplx(0.0, 0.0); });
    }

    bool CMat::all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(),
                           [](const cplx &x) { return std::isfinite(x.real()) && std::isfinite(x.imag()); });
    }

    CMat operator*(const CMat &a, const CMat &b)
    {
        if (a.cols() != b.rows())
            throw ShapeMismatch("operator*: inner dimensions " + std::to_string(a.cols()) + " and " +
                                std::to_string(b.rows()) + " differ");
        const std::size_t n = a.rows(), m = b.cols(), p = a.cols();
        CMat out(n, m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < p; ++l)
            {
                const cplx ail = a(i, l);
                if (ail == cplx(0.0, 0.0))
                    continue;
                for (std::size_t j = 0; j < m; ++j)
                    out(i, j) += ail * b(l, j);
            }
        return out;
    }

    CMat operator+(CMat a, const CMat &b) { return a += b; }
    CMat operator-(CMat a, const CMat &b) { return a -= b; }
    CMat operator*(CMat a, cplx scale) { return a *= scale; }
    CMat operator*(cplx scale, CMat a) { return a *= scale; }
    CMat operator*(CMat a, double scale) { return a *= scale; }
    CMat operator*(double scale, CMat a) { return a *= scale; }

    CMat adjoint_times(const CMat &a, const CMat &b)
    {
        if (a.rows() != b.rows())
            throw ShapeMismatch("adjoint_times: row counts differ");
        const std::size_t n = a.cols(), m = b.cols();
        CMat out(n, m);
        for (std::size_t l = 0; l < a.rows(); ++l)
            for (std::size_t i = 0; i < n; ++i)
            {
                const cplx ali = std::conj(a(l, i));
                for (std::size_t j = 0; j < m; ++j)
                    out(i, j) += ali * b(l, j);
            }
        return out;
    }

    CMat times_adjoint(const CMat &a, const CMat &b)
    {
        if (a.cols() != b.cols())
            throw ShapeMismatch("times_adjoint: column counts differ");
        const std::size_t n = a.rows(), m = b.rows(), p = a.cols();
        CMat out(n, m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j)
            {
                cplx acc = 0.0;
                for (std::size_t l = 0; l < p; ++l)
                    acc += a(i, l) * std::conj(b(j, l));
                out(i, j) = acc;
            }
        return out;
    }

    CMat gram(const CMat &h)
    {
        const std::size_t n = h.rows(), p = h.cols();
        CMat out(n, n);
        for (std::size_t i = 0; i < n; ++i)
        {
            double diag = 0.0;
            for (std::size_t l = 0; l < p; ++l)
                diag += std::norm(h(i, l));
            out(i, i) = diag;
            for (std::size_t j = i + 1; j < n; ++j)
            {
                cplx acc = 0.0;
                for (std::size_t l = 0; l < p; ++l)
                    acc += h(i, l) * std::conj(h(j, l));
                out(i, j) = acc;
                out(j, i) = std::conj(acc);
            }
        }
        return out;
    }

    CMat hermitian_part(const CMat &a)
    {
        require_square(a, "hermitian_part");
        CMat out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
        {
            out(i, i) = a(i, i).real();
            for (std::size_t j = i + 1; j < a.cols(); ++j)
            {
                const cplx s = 0.5 * (a(i, j) + std::conj(a(j, i)));
                out(i, j) = s;
                out(j, i) = std::conj(s);
            }
        }
        return out;
    }

    bool is_hermitian(const CMat &a, double tol)
    {
        if (!a.is_square())
            return false;
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = i; j < a.cols(); ++j)
                if (std::abs(a(i, j) - std::conj(a(j, i))) > tol)
                    return false;
        return true;
    }

    double trace_real(const CMat &a)
    {
        require_square(a, "trace_real");
        double acc = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i)
            acc += a(i, i).real();
        return acc;
    }

    double inner_real(const CMat &a, const CMat &b)
    {
        require_same_shape(a, b, "inner_real");
        double acc = 0.0;
        const auto da = a.data();
        const auto db = b.data();
        for (std::size_t i = 0; i < da.size(); ++i)
            acc += da[i].real() * db[i].real() + da[i].imag() * db[i].imag();
        return acc;
    }

    Cholesky::Cholesky(const CMat &a)
    {
        require_square(a, "Cholesky");
        const std::size_t n = a.rows();
        l_ = CMat(n, n);
        for (std::size_t j = 0; j < n; ++j)
        {
            // Only the lower triangle of the Hermitian part is read
            double d = a(j, j).real();
            for (std::size_t k = 0; k < j; ++k)
                d -= std::norm(l_(j, k));
            if (!(d > 0.0) || !std::isfinite(d))
                throw NotPositiveDefinite("Cholesky: non-positive pivot " + std::to_string(d) + " at index " +
                                          std::to_string(j));
            const double ljj = std::sqrt(d);
            l_(j, j) = ljj;
            for (std::size_t i = j + 1; i < n; ++i)
            {
                cplx s = 0.5 * (a(i, j) + std::conj(a(j, i)));
                for (std::size_t k = 0; k < j; ++k)
                    s -= l_(i, k) * std::conj(l_(j, k));
                l_(i, j) = s / ljj;
            }
        }
    }

    CMat Cholesky::solve(const CMat &b) const
    {
        const std::size_t n = dim();
        if (b.rows() != n)
            throw ShapeMismatch("Cholesky::solve: right-hand side has " + std::to_string(b.rows()) +
                                " rows, expected " + std::to_string(n));
        CMat x = b;
        const std::size_t m = b.cols();
        // Forward: L y = b
        for (std::size_t i = 0; i < n; ++i)
        {
            for (std::size_t k = 0; k < i; ++k)
            {
                const cplx lik = l_(i, k);
                for (std::size_t c = 0; c < m; ++c)
                    x(i, c) -= lik * x(k, c);
            }
            const double inv = 1.0 / l_(i, i).real();
            for (std::size_t c = 0; c < m; ++c)
                x(i, c) *= inv;
        }
        // Backward: L^H x = y
        for (std::size_t ii = n; ii-- > 0;)
        {
            for (std::size_t k = ii + 1; k < n; ++k)
            {
                const cplx lki = std::conj(l_(k, ii));
                for (std::size_t c = 0; c < m; ++c)
                    x(ii, c) -= lki * x(k, c);
            }
            const double inv = 1.0 / l_(ii, ii).real();
            for (std::size_t c = 0; c < m; ++c)
                x(ii, c) *= inv;
        }
        return x;
    }

    CMat Cholesky::inverse() const
    {
        return hermitian_part(solve(CMat::identity(dim())));
    }

    double Cholesky::logdet() const
    {
        double acc = 0.0;
        for (std::size_t i = 0; i < dim(); ++i)
            acc += std::log(l_(i, i).real());
        return 2.0 * acc;
    }

    CMat herm_solve(const CMat &a, const CMat &b)
    {
        return Cholesky(a).solve(b);
    }

    double logdet_hpd(const CMat &a)
    {
        return Cholesky(a).logdet();
    }
}
