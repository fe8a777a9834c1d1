#include <doctest.h>

#include "gradcheck.hpp"

using namespace semo::testutil;

TEST_CASE("encoder input gradient matches central differences") {
    CHECK(gradcheck_encoder() < 1e-4);
}

TEST_CASE("transfer block input gradient matches central differences") {
    CHECK(gradcheck_transfer() < 1e-4);
}

TEST_CASE("temporal align input gradient matches central differences") {
    CHECK(gradcheck_temporal_align() < 1e-4);
}

TEST_CASE("generator input gradient matches central differences") {
    CHECK(gradcheck_generator() < 1e-4);
}
