#include <doctest.h>

#include <cstdlib>

#include "corsa/common.hpp"

using namespace corsa;

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.0, 0.5, 1.0 / 3.0, -2.75, 1e-17, 6.02214076e23, 0.296, -190.0, 1e308}) {
    const std::string s = format_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
}

TEST_CASE("format_double emits the shortest form") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(-190.0) == "-190");
}

TEST_CASE("fnv1a matches the published test vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a").size() == 16);
}
