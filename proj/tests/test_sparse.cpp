#include <doctest.h>

#include <sstream>

#include "cse/rng.hpp"
#include "cse/sparse.hpp"
#include "oracles.hpp"

using cse::Complex;
using cse::SparseComplexMatrix;
using cse::Triplet;

namespace {

SparseComplexMatrix random_sparse(cse::Rng& rng, int n, double density,
                                  double diag_boost) {
    std::vector<Triplet> t;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i == j || rng.uniform() < density)
                t.push_back({i, j,
                             Complex{rng.uniform(-1, 1), rng.uniform(-1, 1)} +
                                 (i == j ? Complex{diag_boost, 0} : Complex{})});
    return SparseComplexMatrix::from_triplets(n, n, t);
}

}  // namespace

TEST_CASE("from_triplets sorts, merges duplicates, drops exact zeros") {
    std::vector<Triplet> t{
        {2, 0, {1, 0}}, {0, 0, {2, 0}}, {2, 0, {3, 1}},   // duplicate (2,0)
        {1, 1, {1, 0}}, {1, 1, {-1, 0}},                  // cancels to zero
        {0, 1, {0, 5}},
    };
    auto m = SparseComplexMatrix::from_triplets(3, 2, t);
    CHECK(m.nnz() == 3);
    CHECK(m.at(0, 0) == Complex{2, 0});
    CHECK(m.at(2, 0) == Complex{4, 1});
    CHECK(m.at(1, 1) == Complex{});
    CHECK(m.at(0, 1) == Complex{0, 5});
    // sorted pattern within columns
    for (int j = 0; j < m.cols(); ++j)
        for (int p = m.col_ptr()[j] + 1; p < m.col_ptr()[j + 1]; ++p)
            CHECK(m.row_idx()[p - 1] < m.row_idx()[p]);
}

TEST_CASE("multiply matches dense product") {
    cse::Rng rng(5);
    auto m = random_sparse(rng, 12, 0.3, 0.0);
    std::vector<Complex> x(12);
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto y = m.multiply(x);
    auto d = oracle::to_dense(m);
    for (int i = 0; i < 12; ++i) {
        Complex want{};
        for (int j = 0; j < 12; ++j) want += d[i][j] * x[j];
        CHECK(std::abs(y[i] - want) < 1e-13);
    }
}

TEST_CASE("min_degree_ordering returns a permutation") {
    cse::Rng rng(17);
    auto m = random_sparse(rng, 40, 0.08, 4.0);
    auto order = cse::min_degree_ordering(m);
    REQUIRE(order.size() == 40);
    std::vector<char> seen(40, 0);
    for (int v : order) {
        REQUIRE(v >= 0);
        REQUIRE(v < 40);
        CHECK(!seen[v]);
        seen[v] = 1;
    }
}

TEST_CASE("LU solves random well-conditioned systems against the dense oracle") {
    cse::Rng rng(23);
    for (int trial = 0; trial < 25; ++trial) {
        int n = 4 + trial % 30;
        auto a = random_sparse(rng, n, 0.25, 3.0);
        std::vector<Complex> b(n);
        for (auto& v : b) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        auto rep = cse::lu_solve_refined(a, b);
        auto want = oracle::dense_solve(oracle::to_dense(a), b);
        for (int i = 0; i < n; ++i) CHECK(std::abs(rep.x[i] - want[i]) <= 1e-10);
        CHECK(rep.residual_inf <= 1e-10 * std::max(1.0, rep.rhs_inf));
    }
}

TEST_CASE("LU handles a zero diagonal through pivoting") {
    // [0 1; 1 0] x = [2; 3]  ->  x = [3; 2]
    auto a = SparseComplexMatrix::from_triplets(
        2, 2, {{0, 1, {1, 0}}, {1, 0, {1, 0}}});
    std::vector<Complex> b{{2, 0}, {3, 0}};
    auto rep = cse::lu_solve_refined(a, b);
    CHECK(std::abs(rep.x[0] - Complex{3, 0}) < 1e-14);
    CHECK(std::abs(rep.x[1] - Complex{2, 0}) < 1e-14);
}

TEST_CASE("LU reports singularity with the pivot index") {
    // Two identical rows.
    auto a = SparseComplexMatrix::from_triplets(3, 3,
                                                {{0, 0, {1, 0}},
                                                 {0, 1, {2, 0}},
                                                 {1, 0, {1, 0}},
                                                 {1, 1, {2, 0}},
                                                 {2, 2, {1, 0}}});
    std::vector<Complex> b{{1, 0}, {1, 0}, {1, 0}};
    bool threw = false;
    try {
        cse::lu_solve_refined(a, b);
    } catch (const cse::SingularMatrixError& e) {
        threw = true;
        CHECK(e.pivot_index >= 0);
        CHECK(e.pivot_index < 3);
    }
    CHECK(threw);
}

TEST_CASE("LU with min-degree ordering matches natural order solutions") {
    cse::Rng rng(31);
    auto a = random_sparse(rng, 60, 0.05, 5.0);
    std::vector<Complex> b(60);
    for (auto& v : b) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    cse::LuOptions natural;
    natural.column_order.resize(60);
    for (int i = 0; i < 60; ++i) natural.column_order[i] = i;
    auto r1 = cse::lu_solve_refined(a, b, natural);
    auto r2 = cse::lu_solve_refined(a, b);  // min-degree
    for (int i = 0; i < 60; ++i) CHECK(std::abs(r1.x[i] - r2.x[i]) <= 1e-10);
}

TEST_CASE("upper_triangle_nnz counts the reporting convention") {
    auto a = SparseComplexMatrix::from_triplets(
        3, 3,
        {{0, 0, {1, 0}}, {1, 0, {1, 0}}, {0, 1, {1, 0}}, {2, 2, {1, 0}}, {1, 2, {1, 0}},
         {2, 1, {1, 0}}});
    // upper incl diagonal: (0,0) (0,1) (1,2) (2,2)
    CHECK(a.upper_triangle_nnz() == 4);
}

TEST_CASE("coordinate dump emits one line per entry") {
    auto a = SparseComplexMatrix::from_triplets(2, 2,
                                                {{0, 0, {1.5, -2.5}}, {1, 1, {3, 4}}});
    std::ostringstream os;
    a.dump_coordinate(os);
    CHECK(os.str() == "0 0 1.5 -2.5\n1 1 3 4\n");
}
