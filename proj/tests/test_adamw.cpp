#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fskd/adamw.hpp"
#include "fskd/param_set.hpp"

using namespace fskd;

TEST_CASE("adamw leaves parameters unchanged under zero grad and zero decay") {
  ParamSet ps;
  ps["w"] = param({3}, {1.0, -2.0, 0.5});
  AdamW opt({.lr = 0.1, .weight_decay = 0.0});
  opt.step(ps);
  CHECK(ps["w"]->v == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw single step matches the hand-computed update") {
  // p=1, g=1, lr=0.1, wd=0: m=0.1, v=1e-3, bias-corrected to 1 and 1,
  // so p' = 1 - 0.1 * 1/(1 + 1e-8).
  ParamSet ps;
  ps["p"] = param({1}, {1.0});
  ps["p"]->g[0] = 1.0;
  AdamW opt({.lr = 0.1, .weight_decay = 0.0});
  opt.step(ps);
  const double expect = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
  CHECK(ps["p"]->v[0] == Catch::Approx(expect).margin(1e-15));
  CHECK(ps["p"]->v[0] == Catch::Approx(0.9).margin(1e-8));
  CHECK(ps["p"]->g[0] == 0.0);  // grads cleared
}

TEST_CASE("adamw applies pure decoupled decay when grad is zero") {
  ParamSet ps;
  ps["p"] = param({2}, {4.0, -4.0});
  AdamW opt({.lr = 0.01, .weight_decay = 0.5});
  opt.step(ps);
  CHECK(ps["p"]->v[0] == Catch::Approx(4.0 * (1.0 - 0.01 * 0.5)).margin(1e-15));
  CHECK(ps["p"]->v[1] == Catch::Approx(-4.0 * (1.0 - 0.01 * 0.5)).margin(1e-15));
}

TEST_CASE("adamw rejects parameters without gradient buffers") {
  ParamSet ps;
  ps["frozen"] = tensor({2}, {1.0, 2.0});
  AdamW opt;
  REQUIRE_THROWS_MATCHES(opt.step(ps), std::runtime_error,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("frozen")));
}

TEST_CASE("adamw moment buffers track parameter shapes across steps") {
  ParamSet ps;
  ps["a"] = param({2, 2}, {1, 2, 3, 4});
  AdamW opt({.lr = 1e-3});
  for (int i = 0; i < 5; ++i) {
    for (auto& x : ps["a"]->g) x = 0.25;
    opt.step(ps);
  }
  CHECK(opt.step_count() == 5);
  for (double x : ps["a"]->v) CHECK(std::isfinite(x));
}
