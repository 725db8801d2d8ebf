#pragma once

// Short-Time Objective Intelligibility, computed from scratch:
//   1. resample both signals 16 kHz -> 10 kHz (polyphase windowed sinc,
//      cutoff at 0.8x the output Nyquist),
//   2. Hann-windowed frames of 256 samples at 50% overlap, 512-point FFT,
//   3. drop frames whose clean-signal energy is 40 dB below the loudest,
//   4. 15 one-third-octave band envelopes, centers 150 * 2^(k/3) Hz,
//   5. per band and 30-frame segment, normalize, clip at -15 dB SDR and
//      correlate clean against processed,
//   6. average the correlations over bands and segments.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "unetgan/wav.hpp"

namespace unetgan {

struct StoiConfig {
  std::uint32_t input_rate = 16000;
  std::uint32_t analysis_rate = 10000;
  std::size_t frame_len = 256;
  std::size_t fft_len = 512;
  std::size_t bands = 15;
  double band_base_hz = 150.0;
  std::size_t segment_frames = 30;  // N, 384 ms at 10 kHz
  double dyn_range_db = 40.0;       // silence-removal threshold
  double clip_db = -15.0;           // SDR clipping bound
};

namespace detail {

// Iterative radix-2 complex FFT, in place. Length must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.141592653589793238462643 / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Rational-rate resampler, out_rate/in_rate = up/down after reduction.
inline std::vector<double> resample(const std::vector<double>& x, std::uint32_t in_rate,
                                    std::uint32_t out_rate) {
  if (in_rate == out_rate) return x;
  std::size_t up = out_rate, down = in_rate;
  const std::size_t g = std::size_t(std::gcd(up, down));
  up /= g;
  down /= g;
  // Low-pass at 0.8x the tighter Nyquist, in the upsampled domain.
  const double cutoff = 0.8 * 0.5 / double(std::max(up, down));
  const std::size_t half = 16 * std::max(up, down);
  const std::size_t taps = 2 * half + 1;
  std::vector<double> h(taps);
  for (std::size_t i = 0; i < taps; ++i) {
    const double m = double(i) - double(half);
    const double sinc = m == 0.0 ? 2.0 * cutoff
                                 : std::sin(2.0 * 3.141592653589793 * cutoff * m) /
                                       (3.141592653589793 * m);
    const double win = 0.5 - 0.5 * std::cos(2.0 * 3.141592653589793 * double(i) / double(taps - 1));
    h[i] = sinc * win * double(up);
  }
  const std::size_t n_out = (x.size() * up) / down;
  std::vector<double> y(n_out, 0.0);
  for (std::size_t m = 0; m < n_out; ++m) {
    // output sample m sits at position m*down in the up-sampled grid
    const std::ptrdiff_t center = std::ptrdiff_t(m * down);
    // x[k] contributes via h[center - k*up + half]
    const std::ptrdiff_t kmin =
        std::max<std::ptrdiff_t>(0, (center - std::ptrdiff_t(half) + std::ptrdiff_t(up) - 1) /
                                        std::ptrdiff_t(up));
    const std::ptrdiff_t kmax =
        std::min<std::ptrdiff_t>(std::ptrdiff_t(x.size()) - 1,
                                 (center + std::ptrdiff_t(half)) / std::ptrdiff_t(up));
    double acc = 0;
    for (std::ptrdiff_t k = kmin; k <= kmax; ++k)
      acc += x[std::size_t(k)] * h[std::size_t(center - k * std::ptrdiff_t(up) +
                                               std::ptrdiff_t(half))];
    y[m] = acc;
  }
  return y;
}

}  // namespace detail

// One-third-octave band envelopes of retained frames; rows are frames.
struct BandEnvelopes {
  std::size_t frames = 0;
  std::size_t bands = 0;
  std::vector<double> e;  // [frames x bands]
  double& at(std::size_t f, std::size_t b) { return e[f * bands + b]; }
  double at(std::size_t f, std::size_t b) const { return e[f * bands + b]; }
};

inline double stoi(const Waveform& clean, const Waveform& processed,
                   const StoiConfig& cfg = {}) {
  if (clean.samples.size() != processed.samples.size())
    throw DataError("stoi: signals must have equal length");
  require_rate(clean, cfg.input_rate, "stoi clean input");
  require_rate(processed, cfg.input_rate, "stoi processed input");

  auto x = detail::resample(clean.samples, cfg.input_rate, cfg.analysis_rate);
  auto y = detail::resample(processed.samples, cfg.input_rate, cfg.analysis_rate);

  const std::size_t flen = cfg.frame_len;
  const std::size_t hop = flen / 2;
  if (x.size() < flen) throw DataError("stoi: input shorter than one analysis frame");
  const std::size_t n_frames = (x.size() - flen) / hop + 1;

  std::vector<double> window(flen);
  for (std::size_t i = 0; i < flen; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * 3.141592653589793 * double(i) / double(flen - 1));

  // Silence removal keyed on the clean signal's framewise energy.
  std::vector<double> energy_db(n_frames);
  double max_db = -1e300;
  for (std::size_t f = 0; f < n_frames; ++f) {
    double e = 0;
    for (std::size_t i = 0; i < flen; ++i) {
      const double v = x[f * hop + i] * window[i];
      e += v * v;
    }
    energy_db[f] = 10.0 * std::log10(e + 1e-300);
    max_db = std::max(max_db, energy_db[f]);
  }
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < n_frames; ++f)
    if (energy_db[f] > max_db - cfg.dyn_range_db) kept.push_back(f);
  if (kept.size() < cfg.segment_frames)
    throw DataError("stoi: fewer than " + std::to_string(cfg.segment_frames) +
                    " non-silent frames (" + std::to_string(kept.size()) + ")");

  // Third-octave band edges, clipped to Nyquist.
  const double bin_hz = double(cfg.analysis_rate) / double(cfg.fft_len);
  const std::size_t n_bins = cfg.fft_len / 2 + 1;
  std::vector<std::pair<std::size_t, std::size_t>> band_bins;  // [lo, hi)
  for (std::size_t b = 0; b < cfg.bands; ++b) {
    const double cf = cfg.band_base_hz * std::pow(2.0, double(b) / 3.0);
    const double f_lo = cf / std::pow(2.0, 1.0 / 6.0);
    const double f_hi = std::min(cf * std::pow(2.0, 1.0 / 6.0),
                                 double(cfg.analysis_rate) / 2.0);
    std::size_t lo = std::size_t(std::ceil(f_lo / bin_hz));
    std::size_t hi = std::min(n_bins, std::size_t(std::ceil(f_hi / bin_hz)));
    if (hi <= lo) hi = lo + 1;
    band_bins.emplace_back(lo, std::min(hi, n_bins));
  }

  auto envelopes = [&](const std::vector<double>& sig) {
    BandEnvelopes env;
    env.frames = kept.size();
    env.bands = cfg.bands;
    env.e.assign(env.frames * env.bands, 0.0);
    std::vector<std::complex<double>> buf(cfg.fft_len);
    for (std::size_t fi = 0; fi < kept.size(); ++fi) {
      const std::size_t f = kept[fi];
      for (std::size_t i = 0; i < cfg.fft_len; ++i)
        buf[i] = i < flen ? sig[f * hop + i] * window[i] : 0.0;
      detail::fft(buf);
      for (std::size_t b = 0; b < cfg.bands; ++b) {
        double acc = 0;
        for (std::size_t k = band_bins[b].first; k < band_bins[b].second; ++k)
          acc += std::norm(buf[k]);
        env.at(fi, b) = std::sqrt(acc);
      }
    }
    return env;
  };

  const BandEnvelopes ex = envelopes(x);
  const BandEnvelopes ey = envelopes(y);

  const std::size_t N = cfg.segment_frames;
  const double clip_gain = 1.0 + std::pow(10.0, -cfg.clip_db / 20.0);
  double acc = 0;
  std::size_t count = 0;
  std::vector<double> xs(N), ys(N);
  for (std::size_t m = N - 1; m < ex.frames; ++m) {
    for (std::size_t b = 0; b < cfg.bands; ++b) {
      double nx = 0, ny = 0;
      for (std::size_t i = 0; i < N; ++i) {
        xs[i] = ex.at(m - N + 1 + i, b);
        ys[i] = ey.at(m - N + 1 + i, b);
        nx += xs[i] * xs[i];
        ny += ys[i] * ys[i];
      }
      const double alpha = ny > 0 ? std::sqrt(nx / ny) : 0.0;
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < N; ++i) {
        ys[i] = std::min(alpha * ys[i], clip_gain * xs[i]);
        mx += xs[i];
        my += ys[i];
      }
      mx /= double(N);
      my /= double(N);
      double cxy = 0, cxx = 0, cyy = 0;
      for (std::size_t i = 0; i < N; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        cxy += dx * dy;
        cxx += dx * dx;
        cyy += dy * dy;
      }
      if (cxx > 0 && cyy > 0) acc += cxy / std::sqrt(cxx * cyy);
      ++count;
    }
  }
  return acc / double(count);
}

}  // namespace unetgan
