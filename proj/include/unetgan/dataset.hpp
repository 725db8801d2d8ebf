#pragma once

// Dataset synthesis: exact-SNR mixing of clean/noise corpora, split
// bookkeeping with disjoint noise sections (first half for training, second
// half for validation/test), and a deterministic synthetic fixture corpus so
// everything runs without licensed speech data.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "unetgan/rng.hpp"
#include "unetgan/wav.hpp"

namespace unetgan {

enum class Split { train, validation, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    default: return "test";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw FormatError("manifest: unknown split '" + s + "'");
}

struct SamplePair {
  Waveform mixture;
  Waveform clean;
  std::string utterance_id;
  std::string noise_id;
  double snr_db = 0.0;
  Split split = Split::train;
  double norm_scale = 1.0;  // joint scale applied to avoid clipping (<= 1)
};

struct PairRecord {
  // Serialized manifest fields, in file order.
  std::string mixture_path;
  std::string clean_path;
  std::string utterance_id;
  std::string noise_id;
  double snr_db = 0.0;
  Split split = Split::train;
  std::size_t noise_offset = 0;
  double norm_scale = 1.0;
  // Planning-only source paths, filled by build_manifest and consumed by
  // synthesize_manifest; not written to the manifest file.
  std::string clean_src;
  std::string noise_src;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<double> train_snrs;
  std::vector<double> eval_snrs;
  std::vector<std::string> train_noises;  // noises seen during training
  std::vector<PairRecord> pairs;
};

inline double mean_power(const double* x, std::size_t n) {
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc / double(n);
}

// Scales the noise segment so the mixture hits snr_db exactly:
//   g = sqrt(P_clean / (P_noise * 10^(snr/10))),  mixture = clean + g * noise.
// If the mixture leaves [-1,1] the pair is peak-normalized jointly and the
// scale recorded, which preserves the achieved SNR.
inline SamplePair mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db,
                             std::size_t offset) {
  clean.validate();
  if (noise.samples.empty()) throw DataError("mix: empty noise");
  if (noise.sample_rate != clean.sample_rate)
    throw DataError("mix: clean at " + std::to_string(clean.sample_rate) + " Hz but noise at " +
                    std::to_string(noise.sample_rate) + " Hz");
  const std::size_t n = clean.samples.size();
  if (offset + n > noise.samples.size())
    throw DataError("mix: noise segment [" + std::to_string(offset) + ", " +
                    std::to_string(offset + n) + ") out of range (noise length " +
                    std::to_string(noise.samples.size()) + ")");
  const double p_clean = mean_power(clean.samples.data(), n);
  const double p_noise = mean_power(noise.samples.data() + offset, n);
  if (p_clean <= 0.0) throw DataError("mix: clean signal has zero power");
  if (p_noise <= 0.0) throw DataError("mix: noise segment has zero power");
  const double g = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));

  SamplePair pair;
  pair.clean = clean;
  pair.mixture.sample_rate = clean.sample_rate;
  pair.mixture.samples.resize(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pair.mixture.samples[i] = clean.samples[i] + g * noise.samples[offset + i];
    peak = std::max(peak, std::abs(pair.mixture.samples[i]));
  }
  pair.snr_db = snr_db;
  if (peak > 1.0) {
    pair.norm_scale = 1.0 / peak;
    for (std::size_t i = 0; i < n; ++i) {
      pair.mixture.samples[i] *= pair.norm_scale;
      pair.clean.samples[i] *= pair.norm_scale;
    }
  }
  return pair;
}

// ---------------------------------------------------------------------------
// Manifest construction
// ---------------------------------------------------------------------------

struct BuildSpec {
  std::size_t train_utterances = 0;  // 0 = derive from corpus (80/7/13-ish split)
  std::size_t val_utterances = 0;
  std::size_t test_utterances = 0;
  std::vector<double> train_snrs = {0, -5, -10, -15};
  std::vector<double> eval_snrs = {0, -3, -5, -7, -10, -12, -15, -17, -20};
  std::size_t unseen_noises = 1;  // last N noise files reserved for eval only
  std::uint64_t seed = 0;
};

inline std::vector<std::filesystem::path> list_wavs(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("empty corpus: no .wav files in " + dir);
  return out;
}

// Plans every (utterance, noise, SNR) pair per split. Training pairs draw
// noise offsets from the first half of each noise file, validation/test from
// the second half, so evaluation noise is never heard in training.
inline DatasetManifest build_manifest(const std::string& clean_dir, const std::string& noise_dir,
                                      const BuildSpec& spec) {
  auto cleans = list_wavs(clean_dir);
  auto noises = list_wavs(noise_dir);
  if (spec.unseen_noises >= noises.size())
    throw ConfigError("build_manifest: unseen_noises must leave at least one training noise");

  std::size_t n_train = spec.train_utterances, n_val = spec.val_utterances,
              n_test = spec.test_utterances;
  if (n_train + n_val + n_test == 0) {
    n_test = std::max<std::size_t>(1, cleans.size() / 6);
    n_val = std::max<std::size_t>(1, cleans.size() / 12);
    if (n_test + n_val >= cleans.size())
      throw DataError("build_manifest: corpus too small to split (" +
                      std::to_string(cleans.size()) + " utterances)");
    n_train = cleans.size() - n_val - n_test;
  }
  if (n_train + n_val + n_test > cleans.size())
    throw DataError("build_manifest: split needs " + std::to_string(n_train + n_val + n_test) +
                    " utterances but corpus has " + std::to_string(cleans.size()));
  if (n_train == 0) throw DataError("build_manifest: empty training split");

  // Deterministic shuffle of utterances, then contiguous split.
  std::vector<std::size_t> order(cleans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(Rng::derive(spec.seed, 0x5417));
  for (std::size_t i = order.size(); i-- > 1;)
    std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

  // Noise lengths, for offset planning.
  std::map<std::string, std::size_t> noise_len;
  for (const auto& p : noises) noise_len[p.string()] = read_wav(p.string()).samples.size();
  std::map<std::string, std::size_t> clean_len;

  DatasetManifest m;
  m.seed = spec.seed;
  m.train_snrs = spec.train_snrs;
  m.eval_snrs = spec.eval_snrs;
  const std::size_t n_train_noise = noises.size() - spec.unseen_noises;
  for (std::size_t i = 0; i < n_train_noise; ++i)
    m.train_noises.push_back(noises[i].stem().string());

  auto plan_split = [&](Split split, std::size_t begin, std::size_t count,
                        const std::vector<double>& snrs, std::size_t noise_count) {
    for (std::size_t u = 0; u < count; ++u) {
      const auto& clean_path = cleans[order[begin + u]];
      auto cit = clean_len.find(clean_path.string());
      if (cit == clean_len.end())
        cit = clean_len.emplace(clean_path.string(),
                                read_wav(clean_path.string()).samples.size()).first;
      const std::size_t ulen = cit->second;
      for (std::size_t ni = 0; ni < noise_count; ++ni) {
        const std::size_t nlen = noise_len[noises[ni].string()];
        const std::size_t half = nlen / 2;
        // train: [0, half); validation/test: [half, nlen)
        const std::size_t sec_begin = split == Split::train ? 0 : half;
        const std::size_t sec_len = split == Split::train ? half : nlen - half;
        if (sec_len < ulen)
          throw DataError("build_manifest: noise section of '" + noises[ni].stem().string() +
                          "' (" + std::to_string(sec_len) + " samples) shorter than utterance '" +
                          clean_path.stem().string() + "' (" + std::to_string(ulen) + ")");
        for (double snr : snrs) {
          PairRecord r;
          r.clean_src = clean_path.string();
          r.noise_src = noises[ni].string();
          r.utterance_id = clean_path.stem().string();
          r.noise_id = noises[ni].stem().string();
          r.snr_db = snr;
          r.split = split;
          std::uint64_t pair_salt = Rng::hash_str(r.utterance_id + "|" + r.noise_id + "|" +
                                                  std::to_string(snr) + "|" + split_name(split));
          Rng pair_rng(Rng::derive(spec.seed, pair_salt));
          r.noise_offset = sec_begin + pair_rng.uniform_int(sec_len - ulen + 1);
          m.pairs.push_back(std::move(r));
        }
      }
    }
  };

  plan_split(Split::train, 0, n_train, spec.train_snrs, n_train_noise);
  plan_split(Split::validation, n_train, n_val, spec.eval_snrs, noises.size());
  plan_split(Split::test, n_train + n_val, n_test, spec.eval_snrs, noises.size());
  return m;
}

// Renders every planned pair to WAV files under out_dir and fills in
// mixture/clean paths and norm scales.
inline void synthesize_manifest(DatasetManifest& m, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::map<std::string, Waveform> cache;
  auto load = [&](const std::string& p) -> const Waveform& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, read_wav(p)).first;
    return it->second;
  };
  for (auto& r : m.pairs) {
    fs::path dir = fs::path(out_dir) / split_name(r.split);
    fs::create_directories(dir);
    const Waveform& clean = load(r.clean_src);
    const Waveform& noise = load(r.noise_src);
    SamplePair pair = mix_at_snr(clean, noise, r.snr_db, r.noise_offset);
    std::ostringstream snr_tag;
    snr_tag << r.snr_db;
    std::string stem = r.utterance_id + "__" + r.noise_id + "__" + snr_tag.str() + "dB";
    fs::path mix_path = dir / (stem + "_mix.wav");
    fs::path clean_path = dir / (stem + "_clean.wav");
    write_wav(mix_path.string(), pair.mixture);
    write_wav(clean_path.string(), pair.clean);
    r.mixture_path = mix_path.string();
    r.clean_path = clean_path.string();
    r.norm_scale = pair.norm_scale;
  }
}

// ---------------------------------------------------------------------------
// Manifest file format
// ---------------------------------------------------------------------------
// Header: '#'-prefixed key/value lines (version, seed, SNR grids, train
// noises). Records: one tab-separated line per pair, field order
//   mixture_path  clean_path  utterance_id  noise_id  snr_db  split
//   noise_offset  norm_scale

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

inline std::string join_strings(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

inline std::vector<std::string> split_strings(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

}  // namespace detail

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("manifest: cannot open for writing: " + path);
  os << "# unetgan-manifest 1\n";
  os << "# seed " << m.seed << "\n";
  os << "# train_snrs " << detail::join_doubles(m.train_snrs) << "\n";
  os << "# eval_snrs " << detail::join_doubles(m.eval_snrs) << "\n";
  os << "# train_noises " << detail::join_strings(m.train_noises) << "\n";
  os.precision(17);
  for (const auto& r : m.pairs) {
    os << r.mixture_path << '\t' << r.clean_path << '\t' << r.utterance_id << '\t' << r.noise_id
       << '\t' << r.snr_db << '\t' << split_name(r.split) << '\t' << r.noise_offset << '\t'
       << r.norm_scale << '\n';
  }
  if (!os) throw FormatError("manifest: write failed: " + path);
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("manifest: cannot open: " + path);
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::stringstream ss(line.substr(1));
      std::string key;
      ss >> key;
      std::string rest;
      std::getline(ss, rest);
      while (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
      if (key == "seed") m.seed = std::stoull(rest);
      else if (key == "train_snrs") m.train_snrs = detail::split_doubles(rest);
      else if (key == "eval_snrs") m.eval_snrs = detail::split_doubles(rest);
      else if (key == "train_noises") m.train_noises = detail::split_strings(rest);
      continue;
    }
    std::stringstream ss(line);
    PairRecord r;
    std::string split_s, snr_s, off_s, scale_s;
    if (!std::getline(ss, r.mixture_path, '\t') || !std::getline(ss, r.clean_path, '\t') ||
        !std::getline(ss, r.utterance_id, '\t') || !std::getline(ss, r.noise_id, '\t') ||
        !std::getline(ss, snr_s, '\t') || !std::getline(ss, split_s, '\t') ||
        !std::getline(ss, off_s, '\t') || !std::getline(ss, scale_s))
      throw FormatError("manifest: malformed record at " + path + ":" + std::to_string(lineno));
    r.snr_db = std::stod(snr_s);
    r.split = split_from_name(split_s);
    r.noise_offset = std::stoull(off_s);
    r.norm_scale = std::stod(scale_s);
    m.pairs.push_back(std::move(r));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Fixture corpus
// ---------------------------------------------------------------------------

struct FixtureSpec {
  std::size_t clean_files = 12;
  std::size_t noise_files = 3;
  double seconds = 4.5;
  std::uint32_t sample_rate = 16000;
};

// Synthetic stand-in corpus: "speech" is harmonic tone complexes with slow
// amplitude envelopes and a wandering fundamental (energy below ~1.5 kHz);
// "noise" is high-pass filtered or amplitude-modulated white noise, so a
// denoiser can separate the two by spectral shape. The modulation floor keeps
// every analysis window at nonzero power.
inline void make_fixture_corpus(const std::string& out_dir, std::uint64_t seed,
                                const FixtureSpec& spec = {}) {
  namespace fs = std::filesystem;
  fs::path clean_dir = fs::path(out_dir) / "clean";
  fs::path noise_dir = fs::path(out_dir) / "noise";
  fs::create_directories(clean_dir);
  fs::create_directories(noise_dir);
  const std::size_t n = std::size_t(spec.seconds * spec.sample_rate);
  const double rate = double(spec.sample_rate);

  for (std::size_t f = 0; f < spec.clean_files; ++f) {
    Rng rng(Rng::derive(seed, 1000 + f));
    Waveform w;
    w.sample_rate = spec.sample_rate;
    w.samples.resize(n);
    const double f0 = rng.uniform(110.0, 280.0);
    const double vibrato = rng.uniform(2.0, 5.0);
    const double env_rate = rng.uniform(1.5, 4.0);
    const int harmonics = 3 + int(rng.uniform_int(3));
    std::vector<double> amp((std::size_t(harmonics)));
    for (auto& a : amp) a = rng.uniform(0.3, 1.0);
    double phase = rng.uniform(0.0, 6.283185307179586);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = double(i) / rate;
      const double inst_f0 = f0 * (1.0 + 0.02 * std::sin(6.283185307179586 * vibrato * t));
      phase += 6.283185307179586 * inst_f0 / rate;
      double s = 0;
      for (int h = 0; h < harmonics; ++h) s += amp[std::size_t(h)] * std::sin(double(h + 1) * phase);
      // envelope stays above a floor so no window is silent
      const double env = 0.35 + 0.3 * (1.0 + std::sin(6.283185307179586 * env_rate * t));
      w.samples[i] = 0.10 * env * s;
    }
    double peak = 0;
    for (double s : w.samples) peak = std::max(peak, std::abs(s));
    for (auto& s : w.samples) s *= 0.5 / peak;
    std::string name = "clean_" + std::string(f < 10 ? "0" : "") + std::to_string(f) + ".wav";
    write_wav((clean_dir / name).string(), w);
  }

  // Noise files run longer than the utterances so both the training and the
  // evaluation half of each file can hold any utterance at any offset.
  const std::size_t n_noise = std::size_t(2.5 * spec.seconds * spec.sample_rate);
  for (std::size_t f = 0; f < spec.noise_files; ++f) {
    Rng rng(Rng::derive(seed, 2000 + f));
    Waveform w;
    w.sample_rate = spec.sample_rate;
    w.samples.resize(n_noise);
    const double mod_rate = rng.uniform(0.5, 2.0);
    double prev = rng.normal();
    for (std::size_t i = 0; i < n_noise; ++i) {
      const double t = double(i) / rate;
      const double white = rng.normal();
      double s;
      if (f % 2 == 0) {
        // first-difference high-pass: energy concentrated above ~2 kHz
        s = (white - prev) * 0.5;
      } else {
        s = white;
      }
      prev = white;
      const double mod = 0.6 + 0.4 * std::sin(6.283185307179586 * mod_rate * t);
      w.samples[i] = s * mod;
    }
    double peak = 0;
    for (double s : w.samples) peak = std::max(peak, std::abs(s));
    for (auto& s : w.samples) s *= 0.5 / peak;
    std::string name = "noise_" + std::string(f < 10 ? "0" : "") + std::to_string(f) + ".wav";
    write_wav((noise_dir / name).string(), w);
  }
}

}  // namespace unetgan
