#include <doctest.h>

#include <cmath>
#include <sstream>

#include "softbci/error.hpp"
#include "softbci/signal_source.hpp"
#include "unit/oracles.hpp"

using namespace softbci;

namespace {

std::vector<EegSample> take(SyntheticEeg& gen, std::size_t n) {
  std::vector<EegSample> out(n);
  for (auto& s : out) s = gen.next_sample();
  return out;
}

double rms(const std::vector<EegSample>& s, std::size_t from, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = from; i < from + n; ++i) acc += s[i].v * s[i].v;
  return std::sqrt(acc / static_cast<double>(n));
}

ReplaySource replay_of(const std::string& text) {
  return ReplaySource(std::make_unique<std::istringstream>(text));
}

}  // namespace

TEST_SUITE("signal_source") {

TEST_CASE("default scenario is 70 s alternating from open") {
  const auto sc = default_scenario();
  CHECK(total_duration(sc) == 70.0);
  REQUIRE(sc.size() == 5);
  for (std::size_t i = 0; i < sc.size(); ++i) {
    CHECK(sc[i].eyes == (i % 2 == 0 ? Eyes::Open : Eyes::Closed));
  }
}

TEST_CASE("custom single closed segment") {
  const Scenario sc{{Eyes::Closed, 5.0}};
  CHECK_NOTHROW(validate(sc));
  CHECK(total_duration(sc) == 5.0);
  CHECK(eyes_at(sc, 100.0) == Eyes::Closed);
}

TEST_CASE("scenario validation and parsing") {
  CHECK_THROWS_AS(validate(Scenario{}), ConfigError);
  CHECK_THROWS_AS(validate(Scenario{{Eyes::Open, 0.0}}), ConfigError);
  std::istringstream in("# protocol\nopen,3\n\nclosed, 4.5\n");
  const auto sc = parse_scenario(in);
  REQUIRE(sc.size() == 2);
  CHECK(sc[1].eyes == Eyes::Closed);
  CHECK(sc[1].duration == 4.5);
  std::istringstream bad("open,3\nsleepy,2\n");
  CHECK_THROWS_AS(parse_scenario(bad), ConfigError);
}

TEST_CASE("exhausted scenario holds the last state") {
  const auto sc = default_scenario();
  CHECK(eyes_at(sc, 69.99) == Eyes::Open);
  CHECK(eyes_at(sc, 500.0) == Eyes::Open);
  CHECK(segment_index_at(sc, 15.0) == 1);
  CHECK(segment_index_at(sc, 500.0) == 4);
}

TEST_CASE("sample cadence is exact") {
  SyntheticEeg gen({}, default_scenario());
  const auto s = take(gen, 5000);
  for (std::size_t n : {2u, 250u, 2500u, 5000u}) {
    CHECK(s[n - 1].t - s[0].t == doctest::Approx(static_cast<double>(n - 1) / 250.0).epsilon(1e-14));
  }
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].t == static_cast<double>(i) / 250.0);
}

TEST_CASE("closed eyes raise the RMS without noise") {
  SynthParams p;
  p.noise_amp = 0.0;
  for (double closed : {5.0, 20.0, 40.0}) {
    p.alpha_amp_closed = closed;
    SyntheticEeg gen(p, {{Eyes::Open, 6.0}, {Eyes::Closed, 6.0}});
    const auto s = take(gen, 3000);
    // Steady state: last 2 s of each segment.
    const double open_rms = rms(s, 1000, 500);
    const double closed_rms = rms(s, 2500, 500);
    CHECK(closed_rms > open_rms);
    CHECK(open_rms == doctest::Approx(p.alpha_amp_open / std::sqrt(2.0)).epsilon(0.01));
    CHECK(closed_rms == doctest::Approx(closed / std::sqrt(2.0)).epsilon(0.01));
  }
}

TEST_CASE("same seed gives bit-identical streams") {
  SynthParams p;
  p.rng_seed = 42;
  SyntheticEeg a(p, default_scenario()), b(p, default_scenario());
  for (int i = 0; i < 10000; ++i) {
    const auto x = a.next_sample(), y = b.next_sample();
    REQUIRE(x.v == y.v);
  }
  p.rng_seed = 43;
  SyntheticEeg c(p, default_scenario());
  SyntheticEeg d(SynthParams{.rng_seed = 42}, default_scenario());
  bool differs = false;
  for (int i = 0; i < 100; ++i) differs |= c.next_sample().v != d.next_sample().v;
  CHECK(differs);
}

TEST_CASE("pink noise has unit variance and a falling spectrum") {
  PinkNoise pn(3);
  const std::size_t n = 1 << 16;
  std::vector<double> x(n);
  for (auto& v : x) v = pn.next();
  CHECK(oracle::mean_square(x) == doctest::Approx(1.0).epsilon(0.1));
  // Lag-1 autocorrelation of 1/f noise is strongly positive, white noise ~0.
  double num = 0.0;
  for (std::size_t i = 1; i < n; ++i) num += x[i] * x[i - 1];
  CHECK(num / static_cast<double>(n - 1) > 0.3);
}

TEST_CASE("eyes override steers the generator") {
  SynthParams p;
  p.noise_amp = 0.0;
  SyntheticEeg gen(p, {{Eyes::Open, 100.0}});
  CHECK(gen.current_eyes() == Eyes::Open);
  gen.set_eyes_override(Eyes::Closed);
  CHECK(gen.current_eyes() == Eyes::Closed);
  const auto s = take(gen, 1500);
  CHECK(rms(s, 1000, 500) == doctest::Approx(20.0 / std::sqrt(2.0)).epsilon(0.01));
  gen.clear_eyes_override();
  CHECK(gen.current_eyes() == Eyes::Open);
}

TEST_CASE("synth params validation") {
  SynthParams p;
  p.alpha_amp_open = -1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.transition_tau = -0.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("replay of three rows") {
  auto src = replay_of("t_s,eeg_uV\n0.000,1.0\n0.004,2.0\n0.008,3.0\n");
  const double expect_t[] = {0.0, 0.004, 0.008};
  for (int i = 0; i < 3; ++i) {
    const auto s = src.replay_next();
    REQUIRE(s);
    CHECK(s->t == expect_t[i]);
    CHECK(s->v == static_cast<double>(i + 1));
  }
  CHECK_FALSE(src.replay_next());
}

TEST_CASE("replay of an empty data section ends immediately") {
  auto src = replay_of("t_s,eeg_uV\n");
  CHECK_FALSE(src.replay_next());
}

TEST_CASE("replay parse error names the line") {
  auto src = replay_of("t_s,eeg_uV\n0.000,1\n0.004,2\n0.008,3\nabc\n");
  for (int i = 0; i < 3; ++i) REQUIRE(src.replay_next());
  try {
    src.replay_next();
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
}

TEST_CASE("replay header and rate checks") {
  CHECK_THROWS_AS(replay_of("time,value\n0,1\n"), ConfigError);
  CHECK_THROWS_AS(replay_of("# fs_hz=500\nt_s,eeg_uV\n"), ConfigError);
  CHECK_NOTHROW(replay_of("# fs_hz=250\nt_s,eeg_uV\n"));
  auto off_grid = replay_of("t_s,eeg_uV\n0.0,1\n0.1,2\n");
  REQUIRE(off_grid.replay_next());
  CHECK_THROWS_AS(off_grid.replay_next(), ConfigError);
  auto nan_row = replay_of("t_s,eeg_uV\n0.0,nan\n");
  CHECK_THROWS_AS(nan_row.replay_next(), ParseError);
}

}  // TEST_SUITE
