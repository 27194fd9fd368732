#include <doctest.h>

#include "cse/assembly.hpp"
#include "cse/rng.hpp"
#include "oracles.hpp"

using cse::assemble_gain;
using cse::assemble_kkt;
using cse::Complex;
using cse::GainSystem;
using cse::RowBlock;
using cse::SparseRow;

namespace {

struct RandomRows {
    std::vector<double> w;
    std::vector<Complex> r;
    RowBlock hx, hxbar;
    std::vector<char> self_conj;
};

// Random measurement-like rows over n state variables; roughly one row
// in four is real-valued (its conjugate-block row mirrors a conjugated).
RandomRows random_rows(cse::Rng& rng, int m, int n) {
    RandomRows rr;
    rr.hx.n = rr.hxbar.n = n;
    for (int k = 0; k < m; ++k) {
        SparseRow a, b;
        int na = 1 + rng.uniform_int(0, 2);
        bool real_row = rng.uniform() < 0.25;
        for (int e = 0; e < na; ++e) {
            int col = rng.uniform_int(0, n - 1);
            Complex av{rng.uniform(-1, 1), rng.uniform(-1, 1)};
            a.add(col, av);
            if (real_row) b.add(col, std::conj(av));
        }
        if (!real_row) {
            int nb = rng.uniform_int(0, 2);
            for (int e = 0; e < nb; ++e)
                b.add(rng.uniform_int(0, n - 1),
                      {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        }
        double re = rng.uniform(-1, 1);
        rr.r.push_back(real_row ? Complex{re, 0.0}
                                : Complex{re, rng.uniform(-1, 1)});
        rr.w.push_back(rng.uniform(0.1, 5.0));
        rr.hx.rows.push_back(std::move(a));
        rr.hxbar.rows.push_back(std::move(b));
        rr.self_conj.push_back(real_row ? 1 : 0);
    }
    return rr;
}

double max_entry_diff(const cse::SparseComplexMatrix& got,
                      const oracle::DenseMatrix& want) {
    double m = 0.0;
    for (int i = 0; i < got.rows(); ++i)
        for (int j = 0; j < got.cols(); ++j)
            m = std::max(m, std::abs(got.at(i, j) - want[i][j]));
    return m;
}

}  // namespace

TEST_CASE("single pmu row gain algebra") {
    const int n = 4, node = 2;
    RowBlock hx{n, {}}, hxbar{n, {}};
    SparseRow a;
    a.add(node, {1.0, 0.0});
    hx.rows.push_back(a);
    hxbar.rows.push_back({});
    auto g = assemble_gain({5.0}, {Complex{0.1, 0.2}}, hx, hxbar, {0});
    CHECK(std::abs(g.beta_xbar[node] - Complex{0.5, 1.0}) < 1e-15);
    CHECK(std::abs(g.Gxbarx.at(node, node) - Complex{5.0, 0.0}) < 1e-15);
    CHECK(g.Gxbarxbar.nnz() == 0);
    CHECK(std::abs(g.beta_x()[node] - Complex{0.5, -1.0}) < 1e-15);
}

TEST_CASE("zero weights produce an empty gain system") {
    cse::Rng rng(40);
    auto rr = random_rows(rng, 6, 3);
    std::fill(rr.w.begin(), rr.w.end(), 0.0);
    auto g = assemble_gain(rr.w, rr.r, rr.hx, rr.hxbar, rr.self_conj);
    CHECK(g.Gxbarx.nnz() == 0);
    CHECK(g.Gxbarxbar.nnz() == 0);
    for (const auto& b : g.beta_xbar) CHECK(b == Complex{});
}

TEST_CASE("gain matches the dense stacked oracle") {
    cse::Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        auto rr = random_rows(rng, 6, 3);
        auto g = assemble_gain(rr.w, rr.r, rr.hx, rr.hxbar, rr.self_conj);
        auto want = oracle::dense_gain(rr.w, rr.r, rr.hx, rr.hxbar, rr.self_conj);
        CHECK(max_entry_diff(g.Gxbarx, want.g_xbar_x) <= 1e-12);
        CHECK(max_entry_diff(g.Gxbarxbar, want.g_xbar_xbar) <= 1e-12);
        for (int i = 0; i < 3; ++i)
            CHECK(std::abs(g.beta_xbar[i] - want.beta_xbar[i]) <= 1e-12);
    }
}

TEST_CASE("gain property suite on randomized assemblies") {
    cse::Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 2 + trial % 5;
        auto rr = random_rows(rng, 3 + trial % 9, n);
        auto g = assemble_gain(rr.w, rr.r, rr.hx, rr.hxbar, rr.self_conj);
        auto want = oracle::dense_gain(rr.w, rr.r, rr.hx, rr.hxbar, rr.self_conj);
        for (int i = 0; i < n; ++i) {
            // beta_x = conj(beta_xbar)
            CHECK(std::abs(want.beta_x[i] - std::conj(g.beta_xbar[i])) <= 1e-13);
            for (int j = 0; j < n; ++j) {
                // Hermitian (xbar,x) block
                CHECK(std::abs(g.Gxbarx.at(i, j) - std::conj(g.Gxbarx.at(j, i))) <=
                      1e-13);
                // symmetric (xbar,xbar) block
                CHECK(std::abs(g.Gxbarxbar.at(i, j) - g.Gxbarxbar.at(j, i)) <= 1e-13);
                // conj(G_xbar_xbar) = G_x_x
                CHECK(std::abs(std::conj(g.Gxbarxbar.at(i, j)) - want.g_x_x[i][j]) <=
                      1e-13);
                // conj(G_xbar_x) = G_x_xbar
                CHECK(std::abs(std::conj(g.Gxbarx.at(i, j)) - want.g_x_xbar[i][j]) <=
                      1e-13);
            }
        }
    }
}

TEST_CASE("gain dimension mismatch is rejected") {
    RowBlock hx{3, {}}, hxbar{3, {}};
    hx.rows.resize(2);
    hxbar.rows.resize(2);
    CHECK_THROWS_AS((void)assemble_gain({1.0}, {Complex{}}, hx, hxbar, {0}),
                    std::invalid_argument);
}

namespace {

// Small constrained system in raw block form: n states, one
// zero-injection-style complex constraint plus a self-conjugate slack
// row, random values throughout.
struct ToyKkt {
    GainSystem g;
    std::vector<Complex> s;
    RowBlock jx, jxbar;
    std::vector<char> self_conj;
};

ToyKkt toy_kkt(cse::Rng& rng, int n, int n_complex_constraints) {
    ToyKkt t;
    auto rr = random_rows(rng, 3 * n, n);
    t.g = assemble_gain(rr.w, rr.r, rr.hx, rr.hxbar, rr.self_conj);
    t.jx.n = t.jxbar.n = n;
    for (int q = 0; q < n_complex_constraints; ++q) {
        SparseRow jx, jxb;
        for (int e = 0; e < 2; ++e) {
            jx.add(rng.uniform_int(0, n - 1), {rng.uniform(-1, 1), rng.uniform(-1, 1)});
            jxb.add(rng.uniform_int(0, n - 1), {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        }
        t.jx.rows.push_back(jx);
        t.jxbar.rows.push_back(jxb);
        t.s.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        t.self_conj.push_back(0);
    }
    // slack-style self-conjugate row
    SparseRow jx, jxb;
    jx.add(0, {0.0, -0.5});
    jxb.add(0, {0.0, 0.5});
    t.jx.rows.push_back(jx);
    t.jxbar.rows.push_back(jxb);
    t.s.push_back({rng.uniform(-1, 1), 0.0});
    t.self_conj.push_back(1);
    return t;
}

}  // namespace

TEST_CASE("kkt block dimensions") {
    cse::Rng rng(50);

    SUBCASE("slack only") {
        auto t = toy_kkt(rng, 2, 0);
        auto k = assemble_kkt(t.g, t.s, t.jx, t.jxbar, t.self_conj);
        // 2n + one self-conjugate constraint row: duplicating the real
        // slack row would repeat an identical equation and make the
        // matrix singular.
        CHECK(k.dim == 5);
        CHECK(k.c == 1);
        CHECK(k.c_conj == 0);
    }
    SUBCASE("no constraints collapses to the plain normal equations") {
        auto t = toy_kkt(rng, 3, 0);
        auto k = assemble_kkt(t.g, {}, RowBlock{3, {}}, RowBlock{3, {}}, {});
        CHECK(k.dim == 6);
        auto sol = cse::factor_solve(k);
        // direct dense solve of G [dx; dxbar] = beta
        oracle::DenseMatrix a = oracle::zeros(6, 6);
        auto gxx = oracle::to_dense(t.g.Gxbarx);
        auto gxb = oracle::to_dense(t.g.Gxbarxbar);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                a[i][j] = gxx[i][j];
                a[i][3 + j] = gxb[i][j];
                a[3 + i][j] = std::conj(gxb[i][j]);
                a[3 + i][3 + j] = std::conj(gxx[i][j]);
            }
        std::vector<Complex> rhs(6);
        for (int i = 0; i < 3; ++i) {
            rhs[i] = t.g.beta_xbar[i];
            rhs[3 + i] = std::conj(t.g.beta_xbar[i]);
        }
        auto want = oracle::dense_solve(a, rhs);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(sol.dx[i] - want[i]) <= 1e-10);
    }
    SUBCASE("one complex constraint adds a conjugate partner row") {
        auto t = toy_kkt(rng, 3, 1);
        auto k = assemble_kkt(t.g, t.s, t.jx, t.jxbar, t.self_conj);
        CHECK(k.c == 2);
        CHECK(k.c_conj == 1);
        CHECK(k.dim == 2 * 3 + 2 + 1);
    }
}

TEST_CASE("kkt matrix is hermitian and the zero block is empty") {
    cse::Rng rng(51);
    auto t = toy_kkt(rng, 4, 2);
    auto k = assemble_kkt(t.g, t.s, t.jx, t.jxbar, t.self_conj);
    for (int i = 0; i < k.dim; ++i)
        for (int j = 0; j < k.dim; ++j)
            CHECK(std::abs(k.A.at(i, j) - std::conj(k.A.at(j, i))) <= 1e-14);
    for (int i = 2 * 4; i < k.dim; ++i)
        for (int j = 2 * 4; j < k.dim; ++j) CHECK(k.A.at(i, j) == Complex{});
}

TEST_CASE("conjugating and swapping block pairs reproduces the kkt matrix") {
    // The admissibility argument executed literally: conjugate the
    // assembled matrix, swap the dx/dxbar row and column blocks, swap
    // each constraint row with its conjugate partner (the slack row maps
    // to itself).  The result must equal the original matrix entrywise.
    cse::Rng rng(52);
    auto t = toy_kkt(rng, 3, 1);
    auto k = assemble_kkt(t.g, t.s, t.jx, t.jxbar, t.self_conj);
    const int n = 3;
    std::vector<int> swap(k.dim);
    for (int i = 0; i < n; ++i) {
        swap[i] = n + i;
        swap[n + i] = i;
    }
    for (int q = 0; q < k.c; ++q) {
        int row = 2 * n + q;
        swap[row] = (k.conj_index[q] >= 0) ? 2 * n + k.c + k.conj_index[q] : row;
    }
    for (int q = 0; q < k.c; ++q)
        if (k.conj_index[q] >= 0) swap[2 * n + k.c + k.conj_index[q]] = 2 * n + q;

    for (int i = 0; i < k.dim; ++i)
        for (int j = 0; j < k.dim; ++j)
            CHECK(std::abs(std::conj(k.A.at(swap[i], swap[j])) - k.A.at(i, j)) <= 1e-14);
    for (int i = 0; i < k.dim; ++i)
        CHECK(std::abs(std::conj(k.rhs[swap[i]]) - k.rhs[i]) <= 1e-14);
}

TEST_CASE("factor_solve recovers a diagonal system exactly") {
    GainSystem g;
    g.n = 1;
    g.Gxbarx = cse::SparseComplexMatrix::from_triplets(1, 1, {{0, 0, {2.0, 0.0}}});
    g.Gxbarxbar = cse::SparseComplexMatrix::from_triplets(1, 1, {});
    Complex want{0.1, -0.05};
    g.beta_xbar = {Complex{2.0, 0.0} * want};
    auto k = assemble_kkt(g, {}, RowBlock{1, {}}, RowBlock{1, {}}, {});
    auto sol = cse::factor_solve(k);
    CHECK(std::abs(sol.dx[0] - want) < 1e-14);
    CHECK(std::abs(sol.dy[0] - std::conj(want)) < 1e-14);
}

TEST_CASE("duplicated constraint rows trigger the singularity diagnostic") {
    cse::Rng rng(53);
    auto t = toy_kkt(rng, 3, 1);
    // duplicate the complex constraint row
    t.jx.rows.insert(t.jx.rows.begin(), t.jx.rows[0]);
    t.jxbar.rows.insert(t.jxbar.rows.begin(), t.jxbar.rows[0]);
    t.s.insert(t.s.begin(), t.s[0]);
    t.self_conj.insert(t.self_conj.begin(), 0);
    auto k = assemble_kkt(t.g, t.s, t.jx, t.jxbar, t.self_conj);
    CHECK_THROWS_WITH_AS(
        (void)cse::factor_solve(k),
        doctest::Contains("unobservable or dependent constraints"),
        cse::SingularMatrixError);
}

TEST_CASE("random kkt solves match the dense oracle and pair conjugates") {
    cse::Rng rng(54);
    for (int trial = 0; trial < 20; ++trial) {
        auto t = toy_kkt(rng, 4, 1);
        auto k = assemble_kkt(t.g, t.s, t.jx, t.jxbar, t.self_conj);
        cse::KktSolution sol;
        try {
            sol = cse::factor_solve(k);
        } catch (const cse::SingularMatrixError&) {
            continue;  // random constraints can be degenerate
        }
        if (sol.residual_inf > 1e-8 * std::max(1.0, sol.rhs_inf)) continue;  // near-singular draw
        auto want = oracle::dense_solve(oracle::to_dense(k.A), k.rhs);
        for (int i = 0; i < k.n; ++i) CHECK(std::abs(sol.dx[i] - want[i]) <= 1e-10);
        for (int q = 0; q < k.c; ++q)
            CHECK(std::abs(sol.lambda[q] - want[2 * k.n + q]) <= 1e-10);
        CHECK(sol.conjugate_pair_gap <= 1e-9);
        CHECK(sol.residual_inf <= 1e-10 * std::max(1.0, sol.rhs_inf));
    }
}

TEST_CASE("kkt constraint dimension mismatch is rejected") {
    cse::Rng rng(55);
    auto t = toy_kkt(rng, 3, 1);
    t.s.push_back({});
    CHECK_THROWS_AS((void)assemble_kkt(t.g, t.s, t.jx, t.jxbar, t.self_conj),
                    std::invalid_argument);
}
