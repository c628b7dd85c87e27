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

#include <catch_amalgamated.hpp>

#include "bflab/numerics.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace bflab;
using namespace bflab::test;
using Catch::Approx;

TEST_CASE("CMat - construction rejects bad data")
{
    CHECK_THROWS_AS(CMat(2, 2, std::vector<cplx>(3)), ShapeMismatch);
    CHECK_THROWS_AS(CMat(1, 1, std::vector<cplx>{cplx(NAN, 0.0)}), NonFiniteValue);
    CHECK_THROWS_AS((CMat{{1.0, 2.0}, {3.0}}), ShapeMismatch);
    const CMat m{{1.0, 2.0}, {3.0, cplx(0.0, 4.0)}};
    CHECK(m.rows() == 2);
    CHECK(m(1, 1) == cplx(0.0, 4.0));
    CHECK_THROWS_AS(m * CMat(3, 1), ShapeMismatch);
}

TEST_CASE("gram - examples")
{
    CHECK(max_abs_diff(gram(CMat::identity(2)), CMat::identity(2)) == 0.0);

    const CMat h{{cplx(0.0, 1.0), 0.0}};
    const CMat g = gram(h);
    REQUIRE(g.rows() == 1);
    CHECK(g(0, 0) == cplx(1.0, 0.0));

    // Entrywise against the definition sum_l H[i,l] conj(H[j,l])
    std::mt19937_64 rng(11);
    const CMat r = random_cmat(4, 6, rng);
    const CMat gr = gram(r);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
        {
            cplx ref = 0.0;
            for (std::size_t l = 0; l < 6; ++l)
                ref += r(i, l) * std::conj(r(j, l));
            CHECK(std::abs(gr(i, j) - ref) < 1e-12);
            CHECK(std::abs(gr(i, j) - std::conj(gr(j, i))) < 1e-12);
        }
    for (std::size_t i = 0; i < 4; ++i)
    {
        CHECK(gr(i, i).imag() == 0.0);
        CHECK(gr(i, i).real() >= 0.0);
    }
}

TEST_CASE("gram - positive semidefinite on random inputs")
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial)
    {
        const CMat h = random_cmat(1 + trial % 6, 1 + (trial * 7) % 5, rng);
        CHECK(hermitian_eigenvalues(gram(h)).minCoeff() >= -1e-10);
    }
}

TEST_CASE("herm_solve - examples")
{
    std::mt19937_64 rng(13);
    const CMat b = random_cmat(3, 2, rng);
    CHECK(max_abs_diff(herm_solve(CMat::identity(3), b), b) < 1e-15);

    const CMat half = herm_solve(CMat::identity(3) * 2.0, CMat::identity(3));
    CHECK(max_abs_diff(half, CMat::identity(3) * 0.5) < 1e-15);

    for (int trial = 0; trial < 20; ++trial)
    {
        const CMat a = random_hpd(4, rng);
        const CMat rhs = random_cmat(4, 3, rng);
        const CMat x = herm_solve(a, rhs);
        const CMat residual = a * x - rhs;
        CHECK(std::sqrt(residual.frobenius_norm2() / rhs.frobenius_norm2()) < 1e-10);
    }
}

TEST_CASE("herm_solve - recovers a known solution")
{
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial)
    {
        const CMat a = random_hpd(5, rng);
        const CMat x0 = random_cmat(5, 2, rng);
        const CMat x = herm_solve(a, a * x0);
        CHECK(std::sqrt((x - x0).frobenius_norm2() / x0.frobenius_norm2()) < 1e-9);
    }
}

TEST_CASE("herm_solve - errors")
{
    CHECK_THROWS_AS(herm_solve(CMat(2, 3), CMat(2, 1)), NotSquare);
    CHECK_THROWS_AS(herm_solve(CMat::identity(2), CMat(3, 1)), ShapeMismatch);
    const CMat indefinite{{1.0, 0.0}, {0.0, -1.0}};
    CHECK_THROWS_AS(herm_solve(indefinite, CMat::identity(2)), NotPositiveDefinite);
    CHECK_THROWS_AS(herm_solve(CMat(2, 2), CMat::identity(2)), NotPositiveDefinite);
}

TEST_CASE("herm_solve - absorbs roundoff asymmetry")
{
    std::mt19937_64 rng(15);
    CMat a = random_hpd(4, rng);
    a(0, 1) += cplx(1e-14, -1e-14);
    const CMat x = herm_solve(a, CMat::identity(4));
    CHECK(max_abs_diff(hermitian_part(a) * x, CMat::identity(4)) < 1e-10);
}

TEST_CASE("logdet_hpd - examples")
{
    CHECK(logdet_hpd(CMat::identity(3)) == 0.0);
    const CMat d{{2.0, 0.0}, {0.0, 2.0}};
    CHECK(logdet_hpd(d) == Approx(2.0 * std::log(2.0)).epsilon(1e-15));
    CHECK(logdet_hpd(d) == Approx(1.386294).margin(1e-6));
    CHECK_THROWS_AS(logdet_hpd(CMat{{-1.0}}), NotPositiveDefinite);

    // Sum of log eigenvalues from an independent eigensolver
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 20; ++trial)
    {
        const CMat a = random_hpd(5, rng);
        const double ref = hermitian_eigenvalues(a).array().log().sum();
        CHECK(rel_diff(logdet_hpd(a), ref) < 1e-9);
    }
}

TEST_CASE("logdet_hpd - scaling law")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(0.1, 10.0);
    for (int trial = 0; trial < 20; ++trial)
    {
        const CMat a = random_hpd(4, rng);
        const double c = unif(rng);
        CHECK(logdet_hpd(a * c) == Approx(logdet_hpd(a) + 4.0 * std::log(c)).epsilon(1e-12));
    }
}

TEST_CASE("trace_real - examples")
{
    CHECK(trace_real(CMat::identity(4)) == 4.0);
    const CMat h{{1.0, cplx(0.0, 1.0)}};
    CHECK(trace_real(gram(h)) == Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(trace_real(CMat(2, 3)), NotSquare);

    std::mt19937_64 rng(18);
    const CMat v = random_cmat(5, 3, rng);
    double ref = 0.0;
    for (const auto &x : v.data())
        ref += std::norm(x);
    CHECK(std::abs(trace_real(gram(v)) - ref) < 1e-12);
}

TEST_CASE("products - adjoint helpers agree with explicit adjoints")
{
    std::mt19937_64 rng(19);
    const CMat a = random_cmat(4, 3, rng);
    const CMat b = random_cmat(4, 2, rng);
    const CMat c = random_cmat(5, 3, rng);
    CHECK(max_abs_diff(adjoint_times(a, b), a.adjoint() * b) < 1e-13);
    CHECK(max_abs_diff(times_adjoint(a, c), a * c.adjoint()) < 1e-13);
    CHECK(inner_real(a, a) == Approx(a.frobenius_norm2()).epsilon(1e-14));
}

TEST_CASE("Cholesky - inverse and blocks")
{
    std::mt19937_64 rng(20);
    const CMat a = random_hpd(4, rng);
    const Cholesky chol(a);
    CHECK(max_abs_diff(a * chol.inverse(), CMat::identity(4)) < 1e-10);
    CHECK(max_abs_diff(chol.lower() * chol.lower().adjoint(), a) < 1e-10);

    CMat m(4, 4);
    m.set_row_block(1, a.row_block(0, 2));
    CHECK(max_abs_diff(m.row_block(1, 2), a.row_block(0, 2)) == 0.0);
    m.set_col_block(2, a.col_block(1, 2));
    CHECK(max_abs_diff(m.col_block(2, 2), a.col_block(1, 2)) == 0.0);
}
