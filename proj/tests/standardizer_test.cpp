// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <complex>
#include <thread>

#include <fftw3.h>
#include <gtest/gtest.h>
#include <httplib.h>

#include "sepforge/random.hpp"
#include "sepforge/resampler.hpp"
#include "sepforge/standardizer.hpp"
#include "sepforge/util.hpp"
#include "sepforge/wav.hpp"
#include "test_support.hpp"

namespace sepforge::standardizer {
namespace {

using testing::db;
using testing::mono;
using testing::sine;
using testing::tone_amplitude;

// Power spectrum of x under a 4-term Blackman-Harris window.
std::vector<double> power_spectrum(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> in(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1);
    const double w = 0.35875 - 0.48829 * std::cos(t) + 0.14128 * std::cos(2 * t) -
                     0.01168 * std::cos(3 * t);
    in[i] = w * x[i];
  }
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                        reinterpret_cast<fftw_complex*>(out.data()),
                                        FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  std::vector<double> p(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) p[k] = std::norm(out[k]);
  return p;
}

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = 0.1 * rng.normal();
  return x;
}

TEST(Route, DecisionFollowsDeclaredRate) {
  EXPECT_EQ(route(mono({0.0}, 48000)).decision, Decision::kDownsample);
  EXPECT_EQ(route(mono({0.0}, 44100)).decision, Decision::kPassthrough);
  EXPECT_EQ(route(mono({0.0}, 16000)).decision, Decision::kBandwidthExtend);
  EXPECT_EQ(route(mono({0.0}, 16000)).target_rate, 44100);
  EXPECT_EQ(to_string(Decision::kBandwidthExtend), "bandwidth_extend");
}

TEST(Resampler, ReducedRatioAndLength) {
  PolyphaseResampler r(48000, 44100);
  EXPECT_EQ(r.up(), 147);
  EXPECT_EQ(r.down(), 160);
  for (std::size_t n : {0u, 1u, 999u, 48000u, 123457u}) {
    EXPECT_EQ(r.output_length(n), static_cast<std::size_t>(std::llround(n * 44100.0 / 48000.0)));
  }
  EXPECT_EQ(cached_resampler(48000, 44100).get(), cached_resampler(48000, 44100).get());
}

TEST(Downsample, OneKilohertzAmplitudeWithinTenthDb) {
  const auto in = sine(1000.0, 48000, 48000 * 2, 0.5);
  const auto out = downsample_antialias(mono(in, 48000), 44100);
  EXPECT_EQ(out.sample_rate, 44100);
  EXPECT_EQ(out.frames(), 88200u);
  const double a = tone_amplitude(out.samples, 44100, 1000.0, 4410, out.samples.size() - 4410);
  EXPECT_LE(std::abs(db(a / 0.5)), 0.1);
}

TEST(Downsample, PassbandRippleWithinTenthDb) {
  for (double f : {50.0, 3000.0, 9000.0, 15000.0, 19000.0}) {
    const auto in = sine(f, 48000, 48000, 0.5);
    const auto out = downsample_antialias(mono(in, 48000), 44100);
    const double a = tone_amplitude(out.samples, 44100, f, 4410, out.samples.size() - 4410);
    EXPECT_LE(std::abs(db(a / 0.5)), 0.1) << f;
  }
}

TEST(Downsample, OutOfBandToneAttenuated60Db) {
  const auto in = sine(23000.0, 48000, 48000 * 2, 0.5);
  const auto out = downsample_antialias(mono(in, 48000), 44100);
  const std::vector<double> mid(out.samples.begin() + 4410, out.samples.end() - 4410);
  EXPECT_LE(db(rms(mid) / rms(in)), -60.0);
  // Where the alias would land.
  const double alias = tone_amplitude(out.samples, 44100, 44100.0 - 23000.0, 4410,
                                      out.samples.size() - 4410);
  EXPECT_LE(db(alias / 0.5), -60.0);
}

TEST(Downsample, ZeroInZeroOutAndErrors) {
  const auto out = downsample_antialias(mono(std::vector<double>(4800, 0.0), 48000), 44100);
  EXPECT_EQ(out.frames(), 4410u);
  for (double v : out.samples) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(downsample_antialias(mono({0.0}, 48000), 0), std::invalid_argument);
  EXPECT_THROW(downsample_antialias(mono({0.0}, 16000), 44100), std::invalid_argument);
}

TEST(Upsample, NoImagesAboveSourceNyquist) {
  const auto in = white_noise(16000 * 3, 9);
  const auto out = resample(mono(in, 16000), 44100);
  ASSERT_EQ(out.frames(), 132300u);
  const std::vector<double> mid(out.samples.begin() + 8192, out.samples.begin() + 8192 + 65536);
  const auto p = power_spectrum(mid);
  const double bin_hz = 44100.0 / 65536.0;
  double in_band = 0.0;
  double images = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f < 7000.0) in_band += p[k];
    if (f > 8050.0) images += p[k];
  }
  EXPECT_LE(10.0 * std::log10(images / in_band), -60.0);
}

// Band-limited content survives a down/up round trip.
TEST(RoundTrip, ResidualBelowMinus50Db) {
  for (auto [hi, lo, fmax] : {std::tuple{48000, 44100, 18000.0}, {44100, 16000, 6500.0}}) {
    Rng rng(static_cast<std::uint64_t>(hi + lo));
    std::vector<double> x(static_cast<std::size_t>(hi) * 2, 0.0);
    for (int k = 0; k < 12; ++k) {
      const auto s = sine(rng.uniform(50.0, fmax), hi, x.size(), 0.05, rng.uniform(0, 6.28));
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += s[i];
    }
    PolyphaseResampler down(hi, lo);
    PolyphaseResampler up(lo, hi);
    const auto back = up.process(down.process(x));
    ASSERT_EQ(back.size(), x.size());
    const std::size_t edge = static_cast<std::size_t>(hi) / 10;
    double err = 0.0;
    double sig = 0.0;
    for (std::size_t i = edge; i < x.size() - edge; ++i) {
      err += (back[i] - x[i]) * (back[i] - x[i]);
      sig += x[i] * x[i];
    }
    EXPECT_LE(10.0 * std::log10(err / sig), -50.0) << hi << "->" << lo;
  }
}

TEST(RoundTrip, DurationDriftUnderOneSample) {
  for (int rate : {8000, 11025, 16000, 22050, 32000, 48000, 96000}) {
    for (std::size_t n : {1u, 7u, 16001u, 480000u}) {
      const std::size_t m = cached_resampler(rate, 44100)->output_length(n);
      EXPECT_LT(std::abs(static_cast<double>(m) / 44100.0 - static_cast<double>(n) / rate),
                1.0 / 44100.0);
    }
  }
}

class FakeExtender : public BandwidthExtender {
 public:
  enum class Mode { kGood, kOutage, kWrongRate, kLongByOne };
  Mode mode = Mode::kGood;
  AudioBuffer extend(const AudioBuffer& b, int target) override {
    if (mode == Mode::kOutage) throw TransportError("down");
    AudioBuffer out = resample(b, target);
    for (auto& v : out.samples) v *= 0.5;  // distinguishable from the fallback
    if (mode == Mode::kWrongRate) out.sample_rate = 48000;
    if (mode == Mode::kLongByOne) out.samples.push_back(0.25);
    return out;
  }
};

TEST(Extend, ServiceResultAndFallbacks) {
  const auto in = mono(sine(440, 16000, 16000, 0.5), 16000);
  const auto plain = resample(in, 44100);

  const auto none = bandwidth_extend(in, nullptr);
  EXPECT_FALSE(none.extended);
  EXPECT_FALSE(none.warning);
  EXPECT_EQ(none.audio.sample_rate, 44100);
  EXPECT_EQ(none.audio.samples, plain.samples);

  FakeExtender svc;
  auto good = bandwidth_extend(in, &svc);
  EXPECT_TRUE(good.extended);
  EXPECT_EQ(good.audio.samples[1000], 0.5 * plain.samples[1000]);

  svc.mode = FakeExtender::Mode::kLongByOne;
  good = bandwidth_extend(in, &svc);
  EXPECT_TRUE(good.extended);
  EXPECT_EQ(good.audio.frames(), plain.frames());

  for (auto mode : {FakeExtender::Mode::kOutage, FakeExtender::Mode::kWrongRate}) {
    svc.mode = mode;
    const auto fb = bandwidth_extend(in, &svc);
    EXPECT_FALSE(fb.extended);
    ASSERT_TRUE(fb.warning);
    EXPECT_EQ(fb.audio.samples, plain.samples);
  }
  EXPECT_THROW(bandwidth_extend(mono({0.0}, 44100), nullptr), std::invalid_argument);
}

TEST(Standardize, PassthroughIsIdentity) {
  const auto in = mono(white_noise(4410, 1), 44100);
  const auto s = standardize(in, nullptr);
  EXPECT_EQ(s.route.decision, Decision::kPassthrough);
  EXPECT_EQ(s.audio.samples, in.samples);
}

TEST(Standardize, HttpExtenderProtocol) {
  httplib::Server server;
  nlohmann::json seen;
  server.Post("/extend", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    const auto audio = wav::decode(util::base64_decode(seen["audio"].get<std::string>()));
    const auto up = resample(audio, seen["target_rate"].get<int>());
    res.set_content(nlohmann::json{{"audio", util::base64_encode(wav::encode(up))}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBandwidthExtender ext("http://127.0.0.1:" + std::to_string(port) + "/extend");
  const auto in = mono(sine(440, 22050, 22050, 0.5), 22050);
  const auto s = standardize(in, &ext);
  server.stop();
  t.join();
  EXPECT_EQ(s.route.decision, Decision::kBandwidthExtend);
  EXPECT_TRUE(s.extended);
  EXPECT_EQ(seen["target_rate"], 44100);
  EXPECT_EQ(s.audio.frames(), 44100u);
  EXPECT_EQ(s.audio.sample_rate, 44100);
}

}  // namespace
}  // namespace sepforge::standardizer
