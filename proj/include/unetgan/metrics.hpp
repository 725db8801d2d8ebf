#pragma once

// Objective scoring over a dataset manifest: STOI for intelligibility and
// scale-invariant SNR as the quality proxy, reported per pair and aggregated
// by (noise, SNR, target).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "unetgan/dataset.hpp"
#include "unetgan/stoi.hpp"

namespace unetgan {

// Cap reported when the residual is (numerically) zero, e.g. si_snr(x, x).
inline constexpr double kSiSnrCapDb = 100.0;

// Scale-invariant SNR in dB: mean-removed inputs, processed projected onto
// clean, 10*log10(|target|^2 / |residual|^2).
inline double si_snr(const Waveform& clean, const Waveform& processed) {
  if (clean.samples.size() != processed.samples.size())
    throw DataError("si_snr: signals must have equal length");
  const std::size_t n = clean.samples.size();
  if (n == 0) throw DataError("si_snr: empty input");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += clean.samples[i];
    my += processed.samples[i];
  }
  mx /= double(n);
  my /= double(n);
  double xx = 0, xy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = clean.samples[i] - mx;
    const double y = processed.samples[i] - my;
    xx += x * x;
    xy += x * y;
  }
  if (xx <= 0.0) throw DataError("si_snr: clean signal has zero power");
  const double a = xy / xx;  // projection coefficient
  double tt = 0, rr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = a * (clean.samples[i] - mx);
    const double r = (processed.samples[i] - my) - t;
    tt += t * t;
    rr += r * r;
  }
  if (rr <= 0.0 || tt / rr >= std::pow(10.0, kSiSnrCapDb / 10.0)) return kSiSnrCapDb;
  return 10.0 * std::log10(tt / rr);
}

struct ScoreRow {
  std::string utterance_id;
  std::string noise_id;
  double snr_db = 0;
  Split split = Split::train;
  bool seen_snr = false;
  bool seen_noise = false;
  double stoi_mixture = 0;
  double si_snr_mixture = 0;
  std::optional<double> stoi_enhanced;
  std::optional<double> si_snr_enhanced;
};

struct GroupKey {
  std::string noise_id;
  double snr_db;
  bool operator<(const GroupKey& o) const {
    if (noise_id != o.noise_id) return noise_id < o.noise_id;
    return snr_db > o.snr_db;  // descending SNR, matching the table layout
  }
};

struct GroupStats {
  std::size_t count = 0;
  double stoi_mixture = 0;
  double si_snr_mixture = 0;
  double stoi_enhanced = 0;
  double si_snr_enhanced = 0;
  bool has_enhanced = false;
};

struct ScoreReport {
  std::vector<ScoreRow> rows;
  std::map<GroupKey, GroupStats> groups;  // means over member rows
};

// enhance may be empty (mixture-only scoring), a directory of enhanced WAVs
// (matched by mixture filename), or any callable producing enhanced audio.
using EnhanceFn = std::function<Waveform(const Waveform& mixture)>;

inline ScoreReport score_manifest(const DatasetManifest& m, Split split,
                                  const EnhanceFn& enhance = {},
                                  const std::string& enhanced_dir = {}) {
  namespace fs = std::filesystem;
  std::vector<const PairRecord*> selected;
  for (const auto& r : m.pairs)
    if (r.split == split) selected.push_back(&r);
  if (selected.empty())
    throw DataError(std::string("score_manifest: no pairs in split '") + split_name(split) + "'");

  // Surface every missing file at once before doing any work.
  std::vector<std::string> missing;
  auto enhanced_path = [&](const PairRecord& r) {
    return (fs::path(enhanced_dir) / fs::path(r.mixture_path).filename()).string();
  };
  for (const auto* r : selected) {
    if (!fs::exists(r->mixture_path)) missing.push_back(r->mixture_path);
    if (!fs::exists(r->clean_path)) missing.push_back(r->clean_path);
    if (!enhanced_dir.empty() && !fs::exists(enhanced_path(*r)))
      missing.push_back(enhanced_path(*r));
  }
  if (!missing.empty()) {
    std::string msg = "score_manifest: missing files:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw DataError(msg);
  }

  auto seen_snr = [&](double snr) {
    return std::find(m.train_snrs.begin(), m.train_snrs.end(), snr) != m.train_snrs.end();
  };
  auto seen_noise = [&](const std::string& id) {
    return std::find(m.train_noises.begin(), m.train_noises.end(), id) != m.train_noises.end();
  };

  ScoreReport report;
  for (const auto* r : selected) {
    Waveform mixture = read_wav(r->mixture_path);
    Waveform clean = read_wav(r->clean_path);
    ScoreRow row;
    row.utterance_id = r->utterance_id;
    row.noise_id = r->noise_id;
    row.snr_db = r->snr_db;
    row.split = r->split;
    row.seen_snr = seen_snr(r->snr_db);
    row.seen_noise = seen_noise(r->noise_id);
    row.stoi_mixture = stoi(clean, mixture);
    row.si_snr_mixture = si_snr(clean, mixture);
    if (!enhanced_dir.empty()) {
      Waveform enh = read_wav(enhanced_path(*r));
      row.stoi_enhanced = stoi(clean, enh);
      row.si_snr_enhanced = si_snr(clean, enh);
    } else if (enhance) {
      Waveform enh = enhance(mixture);
      row.stoi_enhanced = stoi(clean, enh);
      row.si_snr_enhanced = si_snr(clean, enh);
    }
    report.rows.push_back(std::move(row));
  }

  for (const auto& row : report.rows) {
    auto& g = report.groups[{row.noise_id, row.snr_db}];
    ++g.count;
    g.stoi_mixture += row.stoi_mixture;
    g.si_snr_mixture += row.si_snr_mixture;
    if (row.stoi_enhanced) {
      g.stoi_enhanced += *row.stoi_enhanced;
      g.si_snr_enhanced += *row.si_snr_enhanced;
      g.has_enhanced = true;
    }
  }
  for (auto& [key, g] : report.groups) {
    g.stoi_mixture /= double(g.count);
    g.si_snr_mixture /= double(g.count);
    if (g.has_enhanced) {
      g.stoi_enhanced /= double(g.count);
      g.si_snr_enhanced /= double(g.count);
    }
  }
  return report;
}

inline void write_score_csv(const std::string& path, const ScoreReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("score csv: cannot open for writing: " + path);
  os << "utterance_id,noise_id,snr_db,split,seen_snr,seen_noise,"
        "stoi_mixture,si_snr_mixture,stoi_enhanced,si_snr_enhanced\n";
  os << std::setprecision(9);
  for (const auto& r : report.rows) {
    os << r.utterance_id << ',' << r.noise_id << ',' << r.snr_db << ',' << split_name(r.split)
       << ',' << (r.seen_snr ? "seen" : "unseen") << ',' << (r.seen_noise ? "seen" : "unseen")
       << ',' << r.stoi_mixture << ',' << r.si_snr_mixture << ',';
    if (r.stoi_enhanced) os << *r.stoi_enhanced;
    os << ',';
    if (r.si_snr_enhanced) os << *r.si_snr_enhanced;
    os << '\n';
  }
}

// Grouped table: one row pair (Mixture / Enhanced) per noise, one column per
// SNR, highest SNR first.
inline std::string format_group_table(const ScoreReport& report) {
  std::vector<double> snrs;
  std::vector<std::string> noises;
  for (const auto& [key, g] : report.groups) {
    if (std::find(snrs.begin(), snrs.end(), key.snr_db) == snrs.end()) snrs.push_back(key.snr_db);
    if (std::find(noises.begin(), noises.end(), key.noise_id) == noises.end())
      noises.push_back(key.noise_id);
  }
  std::sort(snrs.rbegin(), snrs.rend());
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  auto header = [&](const char* metric) {
    os << metric << "\n" << std::setw(14) << "Noise" << std::setw(10) << "Target";
    for (double s : snrs) {
      std::ostringstream c;
      c << s << "dB";
      os << std::setw(10) << c.str();
    }
    os << "\n";
  };
  auto emit = [&](const char* metric, auto mix_of, auto enh_of) {
    header(metric);
    for (const auto& n : noises) {
      bool any_enh = false;
      os << std::setw(14) << n << std::setw(10) << "Mixture";
      for (double s : snrs) {
        auto it = report.groups.find({n, s});
        if (it == report.groups.end()) {
          os << std::setw(10) << "-";
        } else {
          os << std::setw(10) << mix_of(it->second);
          any_enh = any_enh || it->second.has_enhanced;
        }
      }
      os << "\n";
      if (any_enh) {
        os << std::setw(14) << "" << std::setw(10) << "Enhanced";
        for (double s : snrs) {
          auto it = report.groups.find({n, s});
          if (it == report.groups.end() || !it->second.has_enhanced)
            os << std::setw(10) << "-";
          else
            os << std::setw(10) << enh_of(it->second);
        }
        os << "\n";
      }
    }
    os << "\n";
  };
  emit("STOI", [](const GroupStats& g) { return g.stoi_mixture; },
       [](const GroupStats& g) { return g.stoi_enhanced; });
  emit("SI-SNR (dB)", [](const GroupStats& g) { return g.si_snr_mixture; },
       [](const GroupStats& g) { return g.si_snr_enhanced; });
  return os.str();
}

}  // namespace unetgan
