#pragma once

// Adversarial training loop: alternating gradient descent on the generator
// and discriminator. Generator loss is mean log(1 - D(x, G(x))) plus
// lambda * MSE(y, G(x)); discriminator loss is
// -mean log(1 - D(x, G(x))) - mean log D(x, y). Probabilities are clamped
// away from {0,1} before the logs so both losses stay finite.

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <string>
#include <vector>

#include "unetgan/dataset.hpp"
#include "unetgan/model.hpp"

namespace unetgan {

struct TrainConfig {
  double lambda_mse = 20.0;
  double lr = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 8;
  std::size_t segment_length = 16384;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::size_t d_steps_per_g_step = 1;
  double logit_clamp_eps = 1e-7;
  std::size_t checkpoint_every = 1;  // epochs

  void validate() const {
    if (lambda_mse < 0) throw ConfigError("train config: lambda_mse must be >= 0");
    if (!(logit_clamp_eps > 0 && logit_clamp_eps < 0.5))
      throw ConfigError("train config: logit_clamp_eps must lie in (0, 0.5)");
    if (batch_size == 0) throw ConfigError("train config: batch_size must be >= 1");
    if (segment_length == 0) throw ConfigError("train config: segment_length must be >= 1");
    if (d_steps_per_g_step == 0) throw ConfigError("train config: d_steps_per_g_step must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> clamped_log(const Tensor<T>& p, T eps) {
  return log_op(clamp(p, eps, T(1) - eps));
}

// mean log(1 - D(x, G(x))) + lambda * mean((y - G(x))^2)
template <class T>
Tensor<T> loss_generator(const Tensor<T>& d_fake, const Tensor<T>& y, const Tensor<T>& y_hat,
                         T lambda_mse, T eps = T(1e-7)) {
  Tensor<T> one_minus = add_scalar(scale(d_fake, T(-1)), T(1));
  Tensor<T> adv = mean(clamped_log(one_minus, eps));
  Tensor<T> diff = sub(y, y_hat);
  Tensor<T> mse = mean(mul(diff, diff));
  return add(adv, scale(mse, lambda_mse));
}

// -mean log(1 - D(x, G(x))) - mean log D(x, y)
template <class T>
Tensor<T> loss_discriminator(const Tensor<T>& d_real, const Tensor<T>& d_fake, T eps = T(1e-7)) {
  Tensor<T> one_minus_fake = add_scalar(scale(d_fake, T(-1)), T(1));
  Tensor<T> fake_term = scale(mean(clamped_log(one_minus_fake, eps)), T(-1));
  Tensor<T> real_term = scale(mean(clamped_log(d_real, eps)), T(-1));
  return add(fake_term, real_term);
}

// ---------------------------------------------------------------------------
// Segment sampling
// ---------------------------------------------------------------------------

struct Segment {
  std::vector<double> mixture;
  std::vector<double> clean;
  std::size_t offset = 0;
  std::size_t pad = 0;  // zero samples appended when the pair is short
};

// One random window, same offset for mixture and clean so the pair stays
// aligned; short pairs are zero-padded at the tail.
inline Segment sample_segment(const Waveform& mixture, const Waveform& clean,
                              std::size_t segment_length, Rng& rng) {
  if (mixture.samples.empty() || clean.samples.empty())
    throw DataError("sample_segment: empty waveform");
  if (mixture.samples.size() != clean.samples.size())
    throw DataError("sample_segment: mixture/clean length mismatch");
  const std::size_t n = mixture.samples.size();
  Segment s;
  s.mixture.assign(segment_length, 0.0);
  s.clean.assign(segment_length, 0.0);
  if (n >= segment_length) {
    s.offset = std::size_t(rng.uniform_int(n - segment_length + 1));
    std::copy_n(mixture.samples.begin() + std::ptrdiff_t(s.offset), segment_length,
                s.mixture.begin());
    std::copy_n(clean.samples.begin() + std::ptrdiff_t(s.offset), segment_length,
                s.clean.begin());
  } else {
    s.pad = segment_length - n;
    std::copy(mixture.samples.begin(), mixture.samples.end(), s.mixture.begin());
    std::copy(clean.samples.begin(), clean.samples.end(), s.clean.begin());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Train state
// ---------------------------------------------------------------------------

template <class T>
struct StepLosses {
  T loss_d = 0;
  T loss_g = 0;
  T mse_term = 0;  // the raw MSE component of the generator loss
};

template <class T = float>
struct TrainState {
  GeneratorConfig gcfg;
  DiscriminatorConfig dcfg;
  Generator<T> generator;
  Discriminator<T> discriminator;
  std::vector<Tensor<T>> g_params;
  std::vector<Tensor<T>> d_params;
  AdamState<T> adam_g;
  AdamState<T> adam_d;
  std::uint64_t epoch = 0;
  Rng rng{0};
  std::vector<std::array<T, 2>> history;  // per-epoch (mean L_G, mean L_D)
  std::vector<double> history_wall;

  static TrainState init(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                         const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.gcfg = gcfg;
    st.dcfg = dcfg;
    st.generator = Generator<T>::build(gcfg, cfg.seed);
    st.discriminator = Discriminator<T>::build(dcfg, cfg.seed);
    st.cache_params();
    for (auto* a : {&st.adam_g, &st.adam_d}) {
      a->lr = T(cfg.lr);
      a->beta1 = T(cfg.beta1);
      a->beta2 = T(cfg.beta2);
    }
    st.adam_g.init(st.g_params);
    st.adam_d.init(st.d_params);
    st.rng = Rng(Rng::derive(cfg.seed, 0x7121));
    return st;
  }

  void cache_params() {
    g_params.clear();
    d_params.clear();
    for (auto& [name, t] : generator.named_tensors().params) g_params.push_back(t);
    for (auto& [name, t] : discriminator.named_tensors().params) d_params.push_back(t);
  }

  void zero_grads() {
    for (auto& p : g_params) p.zero_grad();
    for (auto& p : d_params) p.zero_grad();
  }

  void save(const std::string& path) {
    std::vector<ArrayRecord> recs;
    auto gnt = generator.named_tensors();
    auto dnt = discriminator.named_tensors();
    append_records(recs, gnt);
    append_records(recs, dnt);
    auto moments = [&](const char* net, AdamState<T>& a,
                       std::vector<std::pair<std::string, Tensor<T>>>& params) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (auto [tag, vecs] : {std::pair{"m", &a.m}, std::pair{"v", &a.v}}) {
          ArrayRecord r;
          r.name = std::string("adam/") + net + "/" + tag + "/" + params[i].first;
          r.shape = {(*vecs)[i].size()};
          r.data.resize((*vecs)[i].size());
          for (std::size_t k = 0; k < r.data.size(); ++k) r.data[k] = float((*vecs)[i][k]);
          recs.push_back(std::move(r));
        }
      }
    };
    moments("g", adam_g, gnt.params);
    moments("d", adam_d, dnt.params);
    recs.push_back(pack_u64("meta/epoch", epoch));
    recs.push_back(pack_u64("meta/adam_g_t", adam_g.t));
    recs.push_back(pack_u64("meta/adam_d_t", adam_d.t));
    recs.push_back(pack_u64("meta/rng", rng.state()));
    ArrayRecord hist{"meta/history", {history.size(), 2}, {}};
    hist.data.reserve(history.size() * 2);
    for (auto& h : history) {
      hist.data.push_back(float(h[0]));
      hist.data.push_back(float(h[1]));
    }
    recs.push_back(std::move(hist));
    ArrayRecord wall{"meta/history_wall", {history_wall.size()}, {}};
    for (double w : history_wall) wall.data.push_back(float(w));
    recs.push_back(std::move(wall));
    // Model configs ride along so a checkpoint is self-describing.
    recs.push_back(pack_u64("cfg/g/levels", gcfg.levels));
    recs.push_back(pack_u64("cfg/g/channel_step", gcfg.channel_step));
    recs.push_back(pack_u64("cfg/g/ds_kernel", gcfg.ds_kernel));
    recs.push_back(pack_u64("cfg/g/us_kernel", gcfg.us_kernel));
    recs.push_back(pack_u64("cfg/g/bottleneck_kernel", gcfg.bottleneck_kernel));
    recs.push_back(pack_u64("cfg/g/input_length", gcfg.input_length));
    ArrayRecord dil{"cfg/g/bottleneck_dilations", {gcfg.bottleneck_dilations.size()}, {}};
    for (auto r : gcfg.bottleneck_dilations) dil.data.push_back(float(r));
    recs.push_back(std::move(dil));
    recs.push_back({"cfg/g/leaky_slope", {1}, {float(gcfg.leaky_slope)}});
    ArrayRecord dch{"cfg/d/block_channels", {dcfg.block_channels.size()}, {}};
    for (auto c : dcfg.block_channels) dch.data.push_back(float(c));
    recs.push_back(std::move(dch));
    recs.push_back(pack_u64("cfg/d/kernel", dcfg.kernel));
    recs.push_back(pack_u64("cfg/d/stride", dcfg.stride));
    recs.push_back({"cfg/d/leaky_slope", {1}, {float(dcfg.leaky_slope)}});
    save_checkpoint(path, recs);
  }

  static GeneratorConfig generator_config_from(const std::map<std::string, ArrayRecord>& idx) {
    auto u64 = [&](const std::string& k) {
      auto it = idx.find(k);
      if (it == idx.end()) throw FormatError("checkpoint: missing record '" + k + "'");
      return unpack_u64(it->second);
    };
    GeneratorConfig g;
    g.levels = u64("cfg/g/levels");
    g.channel_step = u64("cfg/g/channel_step");
    g.ds_kernel = u64("cfg/g/ds_kernel");
    g.us_kernel = u64("cfg/g/us_kernel");
    g.bottleneck_kernel = u64("cfg/g/bottleneck_kernel");
    g.input_length = u64("cfg/g/input_length");
    g.bottleneck_dilations.clear();
    for (float r : idx.at("cfg/g/bottleneck_dilations").data)
      g.bottleneck_dilations.push_back(std::size_t(r));
    g.leaky_slope = double(idx.at("cfg/g/leaky_slope").data.at(0));
    return g;
  }

  static DiscriminatorConfig discriminator_config_from(
      const std::map<std::string, ArrayRecord>& idx) {
    DiscriminatorConfig d;
    d.block_channels.clear();
    auto it = idx.find("cfg/d/block_channels");
    if (it == idx.end()) throw FormatError("checkpoint: missing record 'cfg/d/block_channels'");
    for (float c : it->second.data) d.block_channels.push_back(std::size_t(c));
    d.kernel = unpack_u64(idx.at("cfg/d/kernel"));
    d.stride = unpack_u64(idx.at("cfg/d/stride"));
    d.leaky_slope = double(idx.at("cfg/d/leaky_slope").data.at(0));
    return d;
  }

  static TrainState load(const std::string& path, const TrainConfig& cfg) {
    cfg.validate();
    auto idx = checkpoint_index(load_checkpoint(path));
    TrainState st;
    st.gcfg = generator_config_from(idx);
    st.dcfg = discriminator_config_from(idx);
    st.generator = Generator<T>::build(st.gcfg, cfg.seed);
    st.discriminator = Discriminator<T>::build(st.dcfg, cfg.seed);
    auto gnt = st.generator.named_tensors();
    auto dnt = st.discriminator.named_tensors();
    restore_records(idx, gnt);
    restore_records(idx, dnt);
    st.cache_params();
    for (auto* a : {&st.adam_g, &st.adam_d}) {
      a->lr = T(cfg.lr);
      a->beta1 = T(cfg.beta1);
      a->beta2 = T(cfg.beta2);
    }
    st.adam_g.init(st.g_params);
    st.adam_d.init(st.d_params);
    auto load_moments = [&](const char* net, AdamState<T>& a,
                            std::vector<std::pair<std::string, Tensor<T>>>& params) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (auto [tag, vecs] : {std::pair{"m", &a.m}, std::pair{"v", &a.v}}) {
          std::string key = std::string("adam/") + net + "/" + tag + "/" + params[i].first;
          auto it = idx.find(key);
          if (it == idx.end()) throw FormatError("checkpoint: missing record '" + key + "'");
          if (it->second.data.size() != (*vecs)[i].size())
            throw FormatError("checkpoint: record '" + key + "' size mismatch");
          for (std::size_t k = 0; k < (*vecs)[i].size(); ++k)
            (*vecs)[i][k] = T(it->second.data[k]);
        }
      }
    };
    load_moments("g", st.adam_g, gnt.params);
    load_moments("d", st.adam_d, dnt.params);
    st.epoch = unpack_u64(idx.at("meta/epoch"));
    st.adam_g.t = unpack_u64(idx.at("meta/adam_g_t"));
    st.adam_d.t = unpack_u64(idx.at("meta/adam_d_t"));
    st.rng.set_state(unpack_u64(idx.at("meta/rng")));
    const auto& hist = idx.at("meta/history");
    for (std::size_t i = 0; 2 * i + 1 < hist.data.size(); ++i)
      st.history.push_back({T(hist.data[2 * i]), T(hist.data[2 * i + 1])});
    for (float w : idx.at("meta/history_wall").data) st.history_wall.push_back(double(w));
    return st;
  }
};

// ---------------------------------------------------------------------------
// Train step
// ---------------------------------------------------------------------------

template <class T>
struct SegmentBatch {
  Tensor<T> mixture;  // [B,1,L]
  Tensor<T> clean;    // [B,1,L]
};

template <class T>
SegmentBatch<T> stack_segments(const std::vector<Segment>& segs) {
  if (segs.empty()) throw DataError("stack_segments: empty batch");
  const std::size_t B = segs.size(), L = segs[0].mixture.size();
  std::vector<T> mix(B * L), cln(B * L);
  for (std::size_t b = 0; b < B; ++b) {
    if (segs[b].mixture.size() != L) throw ShapeError("stack_segments: ragged batch");
    for (std::size_t i = 0; i < L; ++i) {
      mix[b * L + i] = T(segs[b].mixture[i]);
      cln[b * L + i] = T(segs[b].clean[i]);
    }
  }
  return {Tensor<T>::from({B, 1, L}, std::move(mix)), Tensor<T>::from({B, 1, L}, std::move(cln))};
}

// One alternating update: discriminator first on a detached generator output,
// then the generator through a fresh discriminator pass.
template <class T>
StepLosses<T> train_step(TrainState<T>& state, const SegmentBatch<T>& batch,
                         const TrainConfig& cfg) {
  const T eps = T(cfg.logit_clamp_eps);
  StepLosses<T> out;
  for (std::size_t k = 0; k < cfg.d_steps_per_g_step; ++k) {
    Tensor<T> y_hat = state.generator.forward(batch.mixture, BnMode::training).detach();
    Tensor<T> d_real = state.discriminator.forward(batch.mixture, batch.clean, BnMode::training);
    Tensor<T> d_fake = state.discriminator.forward(batch.mixture, y_hat, BnMode::training);
    Tensor<T> l_d = loss_discriminator(d_real, d_fake, eps);
    backward(l_d);
    state.adam_d.step(state.d_params);
    state.zero_grads();
    out.loss_d = l_d.item();
  }
  Tensor<T> y_hat = state.generator.forward(batch.mixture, BnMode::training);
  Tensor<T> d_fake = state.discriminator.forward(batch.mixture, y_hat, BnMode::training);
  Tensor<T> diff = sub(batch.clean, y_hat);
  Tensor<T> mse = mean(mul(diff, diff));
  Tensor<T> one_minus = add_scalar(scale(d_fake, T(-1)), T(1));
  Tensor<T> l_g = add(mean(clamped_log(one_minus, eps)), scale(mse, T(cfg.lambda_mse)));
  backward(l_g);
  state.adam_g.step(state.g_params);
  state.zero_grads();
  out.loss_g = l_g.item();
  out.mse_term = mse.item();
  return out;
}

// ---------------------------------------------------------------------------
// Epoch loop
// ---------------------------------------------------------------------------

inline void write_loss_csv(const std::string& path, const std::vector<std::array<float, 2>>& hist,
                           const std::vector<double>& wall) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("loss csv: cannot open for writing: " + path);
  os << "epoch,mean_L_G,mean_L_D,wall_seconds\n";
  os << std::setprecision(9);
  for (std::size_t i = 0; i < hist.size(); ++i)
    os << (i + 1) << ',' << hist[i][0] << ',' << hist[i][1] << ','
       << (i < wall.size() ? wall[i] : 0.0) << '\n';
}

// Runs cfg.epochs additional epochs: one shuffled pass over the training
// pairs per epoch, one random segment per pair. Writes ckpt-<epoch>.ugan and
// loss_history.csv under run_dir.
template <class T>
void train(TrainState<T>& state, const DatasetManifest& manifest, const TrainConfig& cfg,
           const std::string& run_dir,
           const std::function<void(std::uint64_t, const StepLosses<T>&)>& on_step = {}) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);

  std::vector<const PairRecord*> pairs;
  for (const auto& r : manifest.pairs)
    if (r.split == Split::train) pairs.push_back(&r);
  if (pairs.empty()) throw DataError("train: manifest has no training pairs");

  std::map<std::string, Waveform> cache;
  auto load = [&](const std::string& p) -> const Waveform& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, read_wav(p)).first;
    return it->second;
  };

  const std::uint64_t target_epoch = state.epoch + cfg.epochs;
  while (state.epoch < target_epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i-- > 1;)
      std::swap(order[i], order[state.rng.uniform_int(i + 1)]);

    double sum_lg = 0, sum_ld = 0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, order.size() - begin);
      std::vector<Segment> segs;
      segs.reserve(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const auto* r = pairs[order[begin + b]];
        segs.push_back(sample_segment(load(r->mixture_path), load(r->clean_path),
                                      cfg.segment_length, state.rng));
      }
      auto batch = stack_segments<T>(segs);
      auto losses = train_step(state, batch, cfg);
      sum_lg += double(losses.loss_g);
      sum_ld += double(losses.loss_d);
      ++steps;
      if (on_step) on_step(state.epoch, losses);
    }
    ++state.epoch;
    state.history.push_back({T(sum_lg / double(steps)), T(sum_ld / double(steps))});
    const auto t1 = std::chrono::steady_clock::now();
    state.history_wall.push_back(std::chrono::duration<double>(t1 - t0).count());
    {
      std::vector<std::array<float, 2>> hist;
      for (auto& h : state.history) hist.push_back({float(h[0]), float(h[1])});
      write_loss_csv((fs::path(run_dir) / "loss_history.csv").string(), hist,
                     state.history_wall);
    }
    if (state.epoch == target_epoch || (cfg.checkpoint_every > 0 &&
                                        state.epoch % cfg.checkpoint_every == 0))
      state.save((fs::path(run_dir) / ("ckpt-" + std::to_string(state.epoch) + ".ugan")).string());
  }
  if (cfg.epochs == 0)
    state.save((fs::path(run_dir) / ("ckpt-" + std::to_string(state.epoch) + ".ugan")).string());
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

// Enhances arbitrary-length audio: pad to the next multiple of 2^levels,
// run the generator in inference mode, trim back to the original length.
template <class T>
Waveform enhance_waveform(Generator<T>& g, const Waveform& input) {
  input.validate();
  const std::size_t align = std::size_t(1) << g.cfg.levels;
  const std::size_t n = input.samples.size();
  const std::size_t padded = (n + align - 1) / align * align;
  std::vector<T> buf(padded, T(0));
  for (std::size_t i = 0; i < n; ++i) buf[i] = T(input.samples[i]);
  Tensor<T> x = Tensor<T>::from({1, 1, padded}, std::move(buf));
  Tensor<T> y = g.forward(x, BnMode::inference);
  Waveform out;
  out.sample_rate = input.sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = double(y.data()[i]);
  return out;
}

}  // namespace unetgan
