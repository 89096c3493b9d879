#include <set>
#include <stdexcept>

#include "doctest.h"

#include "cloneforge/rng.hpp"

using cloneforge::Rng;

TEST_SUITE("rng") {
  TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("raw stream is mt19937_64") {
    Rng r(5489);
    std::mt19937_64 ref(5489);
    for (int i = 0; i < 10; ++i) CHECK(r.next_u64() == ref());
  }

  TEST_CASE("uniform stays in range") {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
      const double u = r.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      const double v = r.uniform(-2.0, 3.0);
      CHECK(v >= -2.0);
      CHECK(v < 3.0);
    }
  }

  TEST_CASE("below covers [0, n) and rejects zero") {
    Rng r(3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
      const auto v = r.below(7);
      CHECK(v < 7);
      seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK_THROWS_AS(r.below(0), std::invalid_argument);
  }

  TEST_CASE("derived streams differ by label and index but are reproducible") {
    const auto a = Rng::derive_seed(7, "clone", 0);
    CHECK(a == Rng::derive_seed(7, "clone", 0));
    CHECK(a != Rng::derive_seed(7, "clone", 1));
    CHECK(a != Rng::derive_seed(7, "shuffle", 0));
    CHECK(a != Rng::derive_seed(8, "clone", 0));
  }

  TEST_CASE("shuffle is a seeded permutation") {
    std::vector<int> v(50), w(50);
    std::iota(v.begin(), v.end(), 0);
    w = v;
    Rng a(9), b(9);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  }

  TEST_CASE("fnv1a64 matches the published test vector") {
    CHECK(cloneforge::fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(cloneforge::fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  }
}
