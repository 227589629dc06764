// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/resampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace sepforge {
namespace {

// Zeroth-order modified Bessel function of the first kind (power series).
double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double kaiser_beta(double atten_db) {
  if (atten_db > 50.0) return 0.1102 * (atten_db - 8.7);
  if (atten_db >= 21.0) {
    return 0.5842 * std::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0);
  }
  return 0.0;
}

}  // namespace

PolyphaseResampler::PolyphaseResampler(int input_rate, int output_rate)
    : PolyphaseResampler(input_rate, output_rate, Design{}) {}

PolyphaseResampler::PolyphaseResampler(int input_rate, int output_rate,
                                       Design design) {
  if (input_rate <= 0 || output_rate <= 0) {
    throw std::invalid_argument("sample rates must be positive");
  }
  if (!(design.passband_fraction > 0.0 && design.passband_fraction < 1.0)) {
    throw std::invalid_argument("passband fraction must lie in (0, 1)");
  }
  const int g = std::gcd(input_rate, output_rate);
  up_ = output_rate / g;
  down_ = input_rate / g;

  const double proto_rate = static_cast<double>(up_) * input_rate;
  const double nyquist = 0.5 * std::min(input_rate, output_rate);
  const double pass_edge = design.passband_fraction * nyquist;
  const double transition = (nyquist - pass_edge) / proto_rate;
  const double cutoff = 0.5 * (pass_edge + nyquist) / proto_rate;

  // Kaiser's length estimate, forced odd so the delay is a whole sample.
  auto n = static_cast<std::size_t>(
      std::ceil((design.stopband_db - 7.95) / (14.36 * transition))) + 1;
  if (n % 2 == 0) ++n;
  delay_ = (n - 1) / 2;

  const double beta = kaiser_beta(design.stopband_db);
  const double i0_beta = bessel_i0(beta);
  filter_.resize(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double m = static_cast<double>(k) - static_cast<double>(delay_);
    const double arg = 2.0 * cutoff * m;
    const double sinc =
        m == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = m / static_cast<double>(delay_);
    const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    filter_[k] = 2.0 * cutoff * sinc * window;
    sum += filter_[k];
  }
  const double scale = static_cast<double>(up_) / sum;
  for (double& h : filter_) h *= scale;
}

std::size_t PolyphaseResampler::output_length(std::size_t n) const {
  // round(n * up / down) in integer arithmetic, halves rounding up.
  const auto num = static_cast<unsigned long long>(n) * up_;
  return static_cast<std::size_t>((2 * num + down_) / (2ull * down_));
}

std::vector<double> PolyphaseResampler::process(std::span<const double> input) const {
  const std::size_t out_len = output_length(input.size());
  std::vector<double> out(out_len, 0.0);
  if (input.empty()) return out;
  const auto taps = static_cast<long long>(filter_.size());
  const long long up = up_;
  const auto last = static_cast<long long>(input.size()) - 1;
  for (std::size_t n = 0; n < out_len; ++n) {
    // Position of output n on the prototype's time axis, delay-compensated.
    const long long center = static_cast<long long>(n) * down_ + static_cast<long long>(delay_);
    long long i_hi = center / up;
    long long i_lo = center - (taps - 1) <= 0 ? 0 : (center - (taps - 1) + up - 1) / up;
    i_hi = std::min(i_hi, last);
    double acc = 0.0;
    for (long long i = i_lo; i <= i_hi; ++i) {
      acc += input[static_cast<std::size_t>(i)] *
             filter_[static_cast<std::size_t>(center - i * up)];
    }
    out[n] = acc;
  }
  return out;
}

std::shared_ptr<const PolyphaseResampler> cached_resampler(int input_rate,
                                                           int output_rate) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const PolyphaseResampler>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{input_rate, output_rate}];
  if (!slot) slot = std::make_shared<const PolyphaseResampler>(input_rate, output_rate);
  return slot;
}

}  // namespace sepforge
