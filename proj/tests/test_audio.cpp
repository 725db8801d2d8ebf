#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "unetgan/dataset.hpp"

using namespace unetgan;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Waveform sine(std::size_t n, double freq, double amp, std::uint32_t rate = 16000) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * 3.141592653589793 * freq * double(i) / double(rate));
  return w;
}

Waveform white(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = rng.uniform(-amp, amp);
  return w;
}

double achieved_snr_db(const SamplePair& p) {
  const std::size_t n = p.clean.samples.size();
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = p.mixture.samples[i] - p.clean.samples[i];
  return 10.0 * std::log10(mean_power(p.clean.samples.data(), n) / mean_power(resid.data(), n));
}

}  // namespace

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

TEST_CASE("float32 wav round-trips bit-exactly") {
  auto dir = tmp_dir("unetgan_wav_f32");
  Waveform w = white(1000, 1, 0.9);
  w.sample_rate = 16000;
  for (auto& s : w.samples) s = double(float(s));
  write_wav((dir / "a.wav").string(), w, WavEncoding::float32);
  Waveform r = read_wav((dir / "a.wav").string());
  CHECK(r.sample_rate == 16000);
  CHECK(r.samples == w.samples);
  fs::remove_all(dir);
}

TEST_CASE("pcm16 wav round-trips within one quantization step") {
  auto dir = tmp_dir("unetgan_wav_pcm");
  Waveform w = white(800, 2, 0.99);
  write_wav((dir / "a.wav").string(), w, WavEncoding::pcm16);
  Waveform r = read_wav((dir / "a.wav").string());
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) <= 1.0 / 32768.0);
  fs::remove_all(dir);
}

TEST_CASE("wav reader skips unknown chunks") {
  auto dir = tmp_dir("unetgan_wav_chunks");
  Waveform w = white(16, 3);
  for (auto& s : w.samples) s = double(float(s));
  write_wav((dir / "a.wav").string(), w, WavEncoding::float32);
  // Splice a LIST chunk between fmt and data.
  std::ifstream is(dir / "a.wav", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), {});
  is.close();
  std::vector<char> extra = {'L', 'I', 'S', 'T', 4, 0, 0, 0, 'x', 'x', 'x', 'x'};
  bytes.insert(bytes.begin() + 36, extra.begin(), extra.end());
  std::uint32_t riff_size;
  std::memcpy(&riff_size, bytes.data() + 4, 4);
  riff_size += std::uint32_t(extra.size());
  std::memcpy(bytes.data() + 4, &riff_size, 4);
  std::ofstream os(dir / "b.wav", std::ios::binary);
  os.write(bytes.data(), std::streamsize(bytes.size()));
  os.close();
  CHECK(read_wav((dir / "b.wav").string()).samples == w.samples);
  fs::remove_all(dir);
}

TEST_CASE("wav reader rejects bad input") {
  auto dir = tmp_dir("unetgan_wav_bad");
  CHECK_THROWS_AS(read_wav((dir / "missing.wav").string()), FormatError);

  std::ofstream(dir / "junk.wav") << "not a wav at all";
  CHECK_THROWS_AS(read_wav((dir / "junk.wav").string()), FormatError);

  Waveform w = white(64, 4);
  write_wav((dir / "ok.wav").string(), w, WavEncoding::pcm16);
  {
    std::ifstream is(dir / "ok.wav", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), {});
    is.close();
    bytes.resize(bytes.size() - 10);
    std::ofstream os(dir / "trunc.wav", std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(read_wav((dir / "trunc.wav").string()), FormatError);

  {
    std::ifstream is(dir / "ok.wav", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), {});
    is.close();
    std::uint16_t two = 2;  // channel count lives at offset 22
    std::memcpy(bytes.data() + 22, &two, 2);
    std::ofstream os(dir / "stereo.wav", std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_MATCHES(read_wav((dir / "stereo.wav").string()), FormatError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("mono")));
  fs::remove_all(dir);
}

TEST_CASE("write_wav rejects out-of-range samples and require_rate catches mismatch") {
  auto dir = tmp_dir("unetgan_wav_range");
  Waveform w;
  w.samples = {0.5, 1.5};
  CHECK_THROWS_AS(write_wav((dir / "bad.wav").string(), w), DataError);
  Waveform ok = white(8, 5);
  ok.sample_rate = 8000;
  CHECK_THROWS_AS(require_rate(ok, 16000, "test"), DataError);
  CHECK_NOTHROW(require_rate(ok, 8000, "test"));
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Mixing
// ---------------------------------------------------------------------------

TEST_CASE("equal-power signals mix with unit gain at 0 dB") {
  Waveform clean = sine(4000, 200, 0.4);
  Waveform noise = sine(4000, 1300, 0.4);
  auto p = mix_at_snr(clean, noise, 0.0, 0);
  // P_clean == P_noise, so g == 1 and mixture == clean + noise.
  for (std::size_t i = 0; i < 50; ++i)
    CHECK(p.mixture.samples[i] ==
          Approx(p.norm_scale * (clean.samples[i] + noise.samples[i])).margin(1e-12));
}

TEST_CASE("equal-power signals at -20 dB get noise gain 10") {
  Waveform clean = sine(4000, 200, 0.05);
  Waveform noise = sine(4000, 1300, 0.05);
  auto p = mix_at_snr(clean, noise, -20.0, 0);
  CHECK(p.mixture.samples[10] ==
        Approx(p.norm_scale * (clean.samples[10] + 10.0 * noise.samples[10])).margin(1e-12));
}

TEST_CASE("achieved snr is exact across the grid") {
  Waveform clean = white(8000, 10, 0.3);
  Waveform noise = white(20000, 11, 0.3);
  for (double snr : {0.0, -3.0, -5.0, -7.0, -10.0, -12.0, -15.0, -17.0, -20.0, 5.0}) {
    auto p = mix_at_snr(clean, noise, snr, 137);
    CHECK(std::abs(achieved_snr_db(p) - snr) < 1e-9);
  }
}

TEST_CASE("normalization keeps the mixture in range and preserves snr") {
  Waveform clean = sine(4000, 150, 0.9);
  Waveform noise = white(4000, 12, 0.9);
  auto p = mix_at_snr(clean, noise, -15.0, 0);
  CHECK(p.norm_scale < 1.0);
  double peak = 0;
  for (double s : p.mixture.samples) peak = std::max(peak, std::abs(s));
  CHECK(peak <= 1.0 + 1e-12);
  CHECK(std::abs(achieved_snr_db(p) + 15.0) < 1e-9);
}

TEST_CASE("mix_at_snr input validation") {
  Waveform clean = sine(100, 200, 0.4);
  Waveform noise = white(150, 13);
  CHECK_THROWS_AS(mix_at_snr(clean, noise, 0.0, 60), DataError);  // segment past the end
  Waveform silent;
  silent.samples.assign(100, 0.0);
  CHECK_THROWS_AS(mix_at_snr(silent, noise, 0.0, 0), DataError);
  CHECK_THROWS_AS(mix_at_snr(clean, silent, 0.0, 0), DataError);
  Waveform slow = noise;
  slow.sample_rate = 8000;
  CHECK_THROWS_AS(mix_at_snr(clean, slow, 0.0, 0), DataError);
}

// ---------------------------------------------------------------------------
// Manifest planning
// ---------------------------------------------------------------------------

namespace {

// 4 clean files, 3 noise files, short enough to plan quickly.
fs::path small_corpus(const char* name, std::size_t clean_n = 4, std::size_t noise_n = 3) {
  auto dir = tmp_dir(name);
  FixtureSpec spec;
  spec.clean_files = clean_n;
  spec.noise_files = noise_n;
  spec.seconds = 0.25;
  make_fixture_corpus(dir.string(), 7, spec);
  return dir;
}

}  // namespace

TEST_CASE("manifest pair counts follow the cross products") {
  auto dir = small_corpus("unetgan_manifest_counts");
  BuildSpec spec;
  spec.train_utterances = 2;
  spec.val_utterances = 1;
  spec.test_utterances = 1;
  spec.train_snrs = {0, -5, -10, -15};
  spec.eval_snrs = {0, -10};
  spec.unseen_noises = 1;
  auto m = build_manifest((dir / "clean").string(), (dir / "noise").string(), spec);

  // train: 2 utts x 2 train noises x 4 snrs = 16
  // validation: 1 x 3 x 2 = 6, test: 1 x 3 x 2 = 6
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  for (const auto& r : m.pairs) {
    if (r.split == Split::train) ++n_train;
    if (r.split == Split::validation) ++n_val;
    if (r.split == Split::test) ++n_test;
  }
  CHECK(n_train == 16);
  CHECK(n_val == 6);
  CHECK(n_test == 6);
  CHECK(m.train_noises == std::vector<std::string>{"noise_00", "noise_01"});
  fs::remove_all(dir);
}

TEST_CASE("train pairs never use the unseen noise or eval noise sections") {
  auto dir = small_corpus("unetgan_manifest_sections");
  BuildSpec spec;
  spec.train_utterances = 2;
  spec.val_utterances = 1;
  spec.test_utterances = 1;
  auto m = build_manifest((dir / "clean").string(), (dir / "noise").string(), spec);

  const std::size_t noise_len = read_wav((dir / "noise" / "noise_00.wav").string()).samples.size();
  const std::size_t half = noise_len / 2;
  const std::size_t ulen = read_wav((dir / "clean" / "clean_00.wav").string()).samples.size();
  for (const auto& r : m.pairs) {
    if (r.split == Split::train) {
      CHECK(r.noise_id != "noise_02");
      CHECK(r.noise_offset + ulen <= half);
    } else {
      CHECK(r.noise_offset >= half);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("utterances are split disjointly across train/validation/test") {
  auto dir = small_corpus("unetgan_manifest_disjoint");
  BuildSpec spec;
  spec.train_utterances = 2;
  spec.val_utterances = 1;
  spec.test_utterances = 1;
  auto m = build_manifest((dir / "clean").string(), (dir / "noise").string(), spec);
  std::map<std::string, std::set<Split>> seen;
  for (const auto& r : m.pairs) seen[r.utterance_id].insert(r.split);
  CHECK(seen.size() == 4);
  for (const auto& [utt, splits] : seen) CHECK(splits.size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("manifest planning is seed-deterministic") {
  auto dir = small_corpus("unetgan_manifest_det");
  BuildSpec spec;
  spec.train_utterances = 2;
  spec.val_utterances = 1;
  spec.test_utterances = 1;
  spec.seed = 42;
  auto a = build_manifest((dir / "clean").string(), (dir / "noise").string(), spec);
  auto b = build_manifest((dir / "clean").string(), (dir / "noise").string(), spec);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].utterance_id == b.pairs[i].utterance_id);
    CHECK(a.pairs[i].noise_offset == b.pairs[i].noise_offset);
  }
  spec.seed = 43;
  auto c = build_manifest((dir / "clean").string(), (dir / "noise").string(), spec);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i)
    any_diff = any_diff || a.pairs[i].utterance_id != c.pairs[i].utterance_id ||
               a.pairs[i].noise_offset != c.pairs[i].noise_offset;
  CHECK(any_diff);
  fs::remove_all(dir);
}

TEST_CASE("build_manifest rejects impossible splits") {
  auto dir = small_corpus("unetgan_manifest_reject");
  BuildSpec spec;
  spec.train_utterances = 10;
  CHECK_THROWS_AS(build_manifest((dir / "clean").string(), (dir / "noise").string(), spec),
                  DataError);
  spec = BuildSpec{};
  spec.unseen_noises = 3;
  CHECK_THROWS_AS(build_manifest((dir / "clean").string(), (dir / "noise").string(), spec),
                  ConfigError);
  CHECK_THROWS_AS(build_manifest((dir / "nope").string(), (dir / "noise").string(), BuildSpec{}),
                  DataError);
  fs::remove_all(dir);
}

TEST_CASE("synthesized pairs hit their planned snr and round-trip the manifest") {
  auto dir = small_corpus("unetgan_manifest_synth");
  BuildSpec spec;
  spec.train_utterances = 1;
  spec.val_utterances = 1;
  spec.test_utterances = 1;
  spec.train_snrs = {0, -10};
  spec.eval_snrs = {-5};
  auto m = build_manifest((dir / "clean").string(), (dir / "noise").string(), spec);
  synthesize_manifest(m, (dir / "out").string());

  for (const auto& r : m.pairs) {
    Waveform mix = read_wav(r.mixture_path);
    Waveform cln = read_wav(r.clean_path);
    REQUIRE(mix.samples.size() == cln.samples.size());
    SamplePair p;
    p.mixture = mix;
    p.clean = cln;
    // float32 storage costs a little precision on the achieved snr
    CHECK(std::abs(achieved_snr_db(p) - r.snr_db) < 1e-4);
  }

  write_manifest((dir / "manifest.tsv").string(), m);
  auto r2 = read_manifest((dir / "manifest.tsv").string());
  REQUIRE(r2.pairs.size() == m.pairs.size());
  CHECK(r2.seed == m.seed);
  CHECK(r2.train_snrs == m.train_snrs);
  CHECK(r2.eval_snrs == m.eval_snrs);
  CHECK(r2.train_noises == m.train_noises);
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    CHECK(r2.pairs[i].mixture_path == m.pairs[i].mixture_path);
    CHECK(r2.pairs[i].snr_db == m.pairs[i].snr_db);
    CHECK(r2.pairs[i].split == m.pairs[i].split);
    CHECK(r2.pairs[i].noise_offset == m.pairs[i].noise_offset);
    CHECK(r2.pairs[i].norm_scale == Approx(m.pairs[i].norm_scale).margin(1e-15));
  }
  fs::remove_all(dir);
}

TEST_CASE("read_manifest rejects malformed records") {
  auto dir = tmp_dir("unetgan_manifest_bad");
  std::ofstream(dir / "bad.tsv") << "# unetgan-manifest 1\nonly\tthree\tfields\n";
  CHECK_THROWS_AS(read_manifest((dir / "bad.tsv").string()), FormatError);
  CHECK_THROWS_AS(read_manifest((dir / "missing.tsv").string()), FormatError);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Fixture corpus
// ---------------------------------------------------------------------------

TEST_CASE("fixture corpus is deterministic and well-formed") {
  auto a = tmp_dir("unetgan_fix_a");
  auto b = tmp_dir("unetgan_fix_b");
  FixtureSpec spec;
  spec.clean_files = 3;
  spec.noise_files = 2;
  spec.seconds = 0.5;
  make_fixture_corpus(a.string(), 9, spec);
  make_fixture_corpus(b.string(), 9, spec);

  auto cleans = list_wavs((a / "clean").string());
  auto noises = list_wavs((a / "noise").string());
  CHECK(cleans.size() == 3);
  CHECK(noises.size() == 2);
  for (const auto& p : cleans) {
    Waveform w = read_wav(p.string());
    Waveform w2 = read_wav((b / "clean" / p.filename()).string());
    CHECK(w.samples == w2.samples);
    CHECK(w.sample_rate == 16000);
    CHECK(w.samples.size() == 8000);
    // every 256-sample window keeps nonzero power
    for (std::size_t off = 0; off + 256 <= w.samples.size(); off += 256)
      CHECK(mean_power(w.samples.data() + off, 256) > 1e-8);
    double peak = 0;
    for (double s : w.samples) peak = std::max(peak, std::abs(s));
    CHECK(peak == Approx(0.5).margin(1e-6));
  }
  for (const auto& p : noises) {
    Waveform w = read_wav(p.string());
    CHECK(w.samples.size() >= 2 * 8000);  // room for disjoint train/eval halves
    for (std::size_t off = 0; off + 256 <= w.samples.size(); off += 256)
      CHECK(mean_power(w.samples.data() + off, 256) > 1e-8);
  }

  auto c = tmp_dir("unetgan_fix_c");
  make_fixture_corpus(c.string(), 10, spec);
  CHECK(read_wav((c / "clean" / "clean_00.wav").string()).samples !=
        read_wav((a / "clean" / "clean_00.wav").string()).samples);
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("high-pass fixture noise has little low-frequency energy") {
  auto dir = tmp_dir("unetgan_fix_hp");
  FixtureSpec spec;
  spec.clean_files = 1;
  spec.noise_files = 2;
  spec.seconds = 0.5;
  make_fixture_corpus(dir.string(), 11, spec);
  Waveform hp = read_wav((dir / "noise" / "noise_00.wav").string());
  // lag-1 autocorrelation of a first-difference process is strongly negative
  double num = 0, den = 0;
  for (std::size_t i = 1; i < hp.samples.size(); ++i) {
    num += hp.samples[i] * hp.samples[i - 1];
    den += hp.samples[i] * hp.samples[i];
  }
  CHECK(num / den < -0.2);
  fs::remove_all(dir);
}
