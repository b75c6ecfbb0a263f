#include <doctest.h>

#include <cmath>
#include <sstream>

#include <hsclt/linalg.hpp>
#include <hsclt/rng.hpp>

using namespace hsclt;

namespace {

HilbertOperator random_operator(int dim, RngStream& rng) {
    HilbertOperator op(dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) op(i, j) = rng.next_gaussian();
    return op;
}

}  // namespace

TEST_CASE("hs_norm basics") {
    CHECK(hs_norm(HilbertOperator(5)) == 0.0);
    CHECK(hs_norm(HilbertOperator::identity(4)) == doctest::Approx(2.0).epsilon(1e-14));
    HilbertOperator d = HilbertOperator::diagonal({1.0, 0.5, 0.25});
    CHECK(hs_norm(d) == doctest::Approx(std::sqrt(1.3125)).epsilon(1e-14));
}

TEST_CASE("trace_norm basics") {
    CHECK(trace_norm(HilbertOperator::identity(4)) == doctest::Approx(4.0).epsilon(1e-12));
    HilbertOperator d = HilbertOperator::diagonal({1.0, 0.5, 0.25});
    CHECK(trace_norm(d) == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("hs_norm <= trace_norm, equality on rank one") {
    RngStream rng(11);
    for (int rep = 0; rep < 1000; ++rep) {
        const int dim = 2 + static_cast<int>(rng.next_u64() % 5);
        HilbertOperator op = random_operator(dim, rng);
        CHECK(hs_norm(op) <= trace_norm(op) + 1e-10);
    }
    // rank-one operators: the single nonzero singular value equals both norms
    for (int rep = 0; rep < 50; ++rep) {
        const int dim = 2 + static_cast<int>(rng.next_u64() % 5);
        HilbertVector x(dim), y(dim);
        for (int i = 0; i < dim; ++i) {
            x[i] = rng.next_gaussian();
            y[i] = rng.next_gaussian();
        }
        HilbertOperator op = outer_product(x, y);
        CHECK(trace_norm(op) == doctest::Approx(hs_norm(op)).epsilon(1e-9));
    }
}

TEST_CASE("tensor_hs_norm matches materialized Kronecker norm") {
    // ||I_D||_HS = sqrt(D), so identity factors give sqrt(Da * Db)
    CHECK(tensor_hs_norm(HilbertOperator::identity(2), HilbertOperator::identity(2)) ==
          doctest::Approx(2.0));
    CHECK(tensor_hs_norm(HilbertOperator::identity(4), HilbertOperator::identity(4)) ==
          doctest::Approx(4.0));
    CHECK(tensor_hs_norm(HilbertOperator(3), HilbertOperator::identity(3)) == 0.0);

    RngStream rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        TensorOperator t{random_operator(8, rng), random_operator(8, rng)};
        const double factored = hs_norm(t);
        const double materialized = hs_norm(t.materialize());
        CHECK(factored == doctest::Approx(materialized).epsilon(1e-12));
    }
}

TEST_CASE("outer product") {
    HilbertVector e1(2), e2(2);
    e1[0] = 1.0;
    e2[1] = 1.0;
    HilbertOperator op = outer_product(e1, e2);
    CHECK(op(0, 1) == 1.0);
    CHECK(op(0, 0) == 0.0);
    CHECK(op(1, 0) == 0.0);
    CHECK(op(1, 1) == 0.0);

    RngStream rng(3);
    HilbertVector x(6), y(6);
    for (int i = 0; i < 6; ++i) {
        x[i] = rng.next_gaussian();
        y[i] = rng.next_gaussian();
    }
    CHECK(outer_product(x, x).trace() == doctest::Approx(x.squared_norm()).epsilon(1e-14));
    CHECK(hs_norm(outer_product(x, y)) == doctest::Approx(x.norm() * y.norm()).epsilon(1e-13));

    HilbertVector z(3);
    CHECK_THROWS_AS(outer_product(x, z), std::invalid_argument);
}

TEST_CASE("symmetric eigendecomposition") {
    // spectrum of [[2,1],[1,2]] is {3,1} with known eigenvectors
    HilbertOperator a(2);
    a(0, 0) = 2.0;
    a(0, 1) = 1.0;
    a(1, 0) = 1.0;
    a(1, 1) = 2.0;
    SymmetricEigen eig = symmetric_eigen(a);
    REQUIRE(eig.values.size() == 2);
    CHECK(eig.values[0] == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(eig.values[1] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(eig.vectors[0][0]) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));

    // reconstruction A = V diag(w) V^t on a random symmetric matrix
    RngStream rng(19);
    HilbertOperator b = random_operator(6, rng).symmetrized();
    SymmetricEigen be = symmetric_eigen(b);
    HilbertOperator recon(6);
    for (int k = 0; k < 6; ++k)
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                recon(i, j) += be.values[k] * be.vectors[k][i] * be.vectors[k][j];
    CHECK(hs_distance(recon, b) < 1e-11);
}

TEST_CASE("operator serialization round trip") {
    RngStream rng(23);
    HilbertOperator op = random_operator(5, rng);

    std::stringstream csv;
    write_csv(op, csv);
    HilbertOperator from_csv = read_csv_operator(csv);
    CHECK(hs_distance(op, from_csv) == 0.0);

    HilbertOperator from_json = operator_from_json(to_json(op));
    CHECK(hs_distance(op, from_json) == 0.0);

    std::stringstream bad("not a header\n1,2\n3,4\n");
    CHECK_THROWS_AS(read_csv_operator(bad), std::runtime_error);
}
