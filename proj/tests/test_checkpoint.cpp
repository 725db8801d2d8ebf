#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "unetgan/train.hpp"

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

GeneratorConfig tiny_gcfg() {
  GeneratorConfig g;
  g.levels = 1;
  g.channel_step = 2;
  g.ds_kernel = 3;
  g.us_kernel = 3;
  g.input_length = 64;
  g.bottleneck_dilations = {1, 2};
  return g;
}

DiscriminatorConfig tiny_dcfg() {
  DiscriminatorConfig d;
  d.block_channels = {3};
  d.kernel = 5;
  d.stride = 4;
  return d;
}

TrainConfig tiny_tcfg() {
  TrainConfig t;
  t.batch_size = 2;
  t.segment_length = 64;
  t.seed = 5;
  return t;
}

SegmentBatch<float> batch_from_seed(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t B = 2, L = 64;
  std::vector<float> mix(B * L), cln(B * L);
  for (auto& v : cln) v = float(rng.uniform(-0.4, 0.4));
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = cln[i] + float(rng.uniform(-0.2, 0.2));
  return {Tensor<float>::from({B, 1, L}, std::move(mix)),
          Tensor<float>::from({B, 1, L}, std::move(cln))};
}

std::vector<float> snapshot(const std::vector<Tensor<float>>& params) {
  std::vector<float> out;
  for (const auto& p : params) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

// Bitwise checkpoint equality, ignoring only the wall-clock record.
bool same_checkpoint(const fs::path& a, const fs::path& b) {
  auto ia = checkpoint_index(load_checkpoint(a.string()));
  auto ib = checkpoint_index(load_checkpoint(b.string()));
  ia.erase("meta/history_wall");
  ib.erase("meta/history_wall");
  if (ia.size() != ib.size()) return false;
  for (const auto& [name, ra] : ia) {
    auto it = ib.find(name);
    if (it == ib.end() || ra.shape != it->second.shape || ra.data != it->second.data) return false;
  }
  return true;
}

fs::path tiny_training_dir(const char* name, DatasetManifest& manifest) {
  auto dir = tmp_dir(name);
  Rng rng(3);
  for (int i = 0; i < 4; ++i) {
    Waveform cln;
    cln.sample_rate = 16000;
    cln.samples.resize(200);
    for (auto& v : cln.samples) v = rng.uniform(-0.4, 0.4);
    Waveform mix = cln;
    for (auto& v : mix.samples) v = std::clamp(v + rng.uniform(-0.1, 0.1), -1.0, 1.0);
    PairRecord r;
    r.clean_path = (dir / ("c" + std::to_string(i) + ".wav")).string();
    r.mixture_path = (dir / ("m" + std::to_string(i) + ".wav")).string();
    r.split = Split::train;
    write_wav(r.clean_path, cln, WavEncoding::float32);
    write_wav(r.mixture_path, mix, WavEncoding::float32);
    manifest.pairs.push_back(r);
  }
  return dir;
}

}  // namespace

TEST_CASE("array records round-trip through a checkpoint file") {
  auto dir = tmp_dir("unetgan_ckpt_rt");
  std::vector<ArrayRecord> recs = {
      {"a/w", {2, 3}, {1, 2, 3, 4, 5, 6}},
      {"a/b", {1}, {0.25f}},
      pack_u64("meta/x", 0xDEADBEEFCAFE1234ULL),
  };
  auto path = (dir / "x.ugan").string();
  save_checkpoint(path, recs);
  auto back = load_checkpoint(path);
  REQUIRE(back.size() == 3);
  CHECK(back[0].name == "a/w");
  CHECK(back[0].shape == Shape{2, 3});
  CHECK(back[0].data == recs[0].data);
  CHECK(back[1].data[0] == 0.25f);
  auto idx = checkpoint_index(back);
  CHECK(unpack_u64(idx.at("meta/x")) == 0xDEADBEEFCAFE1234ULL);
  fs::remove_all(dir);
}

TEST_CASE("pack_u64 is exact for every 16-bit chunk pattern") {
  for (std::uint64_t v : {0ULL, 1ULL, 0xffffULL, 0x10000ULL, 0xffffffffffffffffULL,
                          0x8000000000000001ULL, 0x123456789abcdef0ULL})
    CHECK(unpack_u64(pack_u64("x", v)) == v);
}

TEST_CASE("checkpoint loader rejects corrupt files") {
  auto dir = tmp_dir("unetgan_ckpt_bad");
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ugan").string()), FormatError);

  std::ofstream(dir / "magic.ugan", std::ios::binary) << "NOPE1234";
  CHECK_THROWS_MATCHES(load_checkpoint((dir / "magic.ugan").string()), FormatError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("magic")));

  std::vector<ArrayRecord> recs = {{"w", {4}, {1, 2, 3, 4}}};
  save_checkpoint((dir / "ok.ugan").string(), recs);
  auto bytes = read_file(dir / "ok.ugan");

  {
    std::ofstream os(dir / "trunc.ugan", std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size() - 6));
  }
  CHECK_THROWS_MATCHES(load_checkpoint((dir / "trunc.ugan").string()), FormatError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("truncated")));

  {
    auto v = bytes;
    v[4] = 9;  // version field
    std::ofstream os(dir / "ver.ugan", std::ios::binary);
    os.write(v.data(), std::streamsize(v.size()));
  }
  CHECK_THROWS_MATCHES(load_checkpoint((dir / "ver.ugan").string()), FormatError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("version")));
  fs::remove_all(dir);
}

TEST_CASE("save_checkpoint rejects shape/data mismatches") {
  auto dir = tmp_dir("unetgan_ckpt_mismatch");
  std::vector<ArrayRecord> recs = {{"w", {4}, {1, 2, 3}}};
  CHECK_THROWS_AS(save_checkpoint((dir / "x.ugan").string(), recs), FormatError);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Train state round-trip
// ---------------------------------------------------------------------------

TEST_CASE("train state save/load restores parameters, moments and counters") {
  auto dir = tmp_dir("unetgan_state_rt");
  TrainConfig tcfg = tiny_tcfg();
  auto st = TrainState<float>::init(tiny_gcfg(), tiny_dcfg(), tcfg);
  auto batch = batch_from_seed(1);
  for (int i = 0; i < 3; ++i) train_step(st, batch, tcfg);
  st.epoch = 7;
  st.history.push_back({0.5f, 1.5f});
  st.history_wall.push_back(2.25);
  auto path = (dir / "state.ugan").string();
  st.save(path);

  auto back = TrainState<float>::load(path, tcfg);
  CHECK(back.epoch == 7);
  CHECK(back.adam_g.t == st.adam_g.t);
  CHECK(back.adam_d.t == st.adam_d.t);
  CHECK(back.rng.state() == st.rng.state());
  REQUIRE(back.history.size() == 1);
  CHECK(back.history[0][0] == 0.5f);
  CHECK(back.history[0][1] == 1.5f);
  REQUIRE(back.history_wall.size() == 1);
  CHECK(back.history_wall[0] == 2.25);
  CHECK(snapshot(back.g_params) == snapshot(st.g_params));
  CHECK(snapshot(back.d_params) == snapshot(st.d_params));
  for (std::size_t i = 0; i < st.adam_g.m.size(); ++i) {
    CHECK(back.adam_g.m[i] == st.adam_g.m[i]);
    CHECK(back.adam_g.v[i] == st.adam_g.v[i]);
  }
  CHECK(back.gcfg.levels == 1);
  CHECK(back.gcfg.bottleneck_dilations == std::vector<std::size_t>{1, 2});
  CHECK(back.dcfg.block_channels == std::vector<std::size_t>{3});
  fs::remove_all(dir);
}

TEST_CASE("loading a generator-only view from an embedded config") {
  auto dir = tmp_dir("unetgan_state_cfg");
  TrainConfig tcfg = tiny_tcfg();
  auto st = TrainState<float>::init(tiny_gcfg(), tiny_dcfg(), tcfg);
  auto path = (dir / "state.ugan").string();
  st.save(path);

  auto idx = checkpoint_index(load_checkpoint(path));
  auto gcfg = TrainState<float>::generator_config_from(idx);
  CHECK(gcfg.channel_step == 2);
  auto g = Generator<float>::build(gcfg, 0);
  auto nt = g.named_tensors();
  restore_records(idx, nt);
  CHECK(g.ds[0].weight.data() == st.generator.ds[0].weight.data());
  fs::remove_all(dir);
}

TEST_CASE("resumed training is bit-identical to uninterrupted training") {
  auto dir = tmp_dir("unetgan_resume");
  TrainConfig tcfg = tiny_tcfg();

  // Straight run: 20 steps on deterministic batches.
  auto straight = TrainState<float>::init(tiny_gcfg(), tiny_dcfg(), tcfg);
  for (int i = 0; i < 20; ++i) train_step(straight, batch_from_seed(std::uint64_t(i)), tcfg);

  // Interrupted run: 10 steps, save, load, 10 more.
  auto first = TrainState<float>::init(tiny_gcfg(), tiny_dcfg(), tcfg);
  for (int i = 0; i < 10; ++i) train_step(first, batch_from_seed(std::uint64_t(i)), tcfg);
  auto path = (dir / "mid.ugan").string();
  first.save(path);
  auto resumed = TrainState<float>::load(path, tcfg);
  for (int i = 10; i < 20; ++i) train_step(resumed, batch_from_seed(std::uint64_t(i)), tcfg);

  CHECK(snapshot(resumed.g_params) == snapshot(straight.g_params));
  CHECK(snapshot(resumed.d_params) == snapshot(straight.d_params));
  for (std::size_t i = 0; i < straight.adam_g.m.size(); ++i)
    CHECK(resumed.adam_g.m[i] == straight.adam_g.m[i]);
  fs::remove_all(dir);
}

TEST_CASE("same-seed epoch runs write identical checkpoints and loss history") {
  DatasetManifest manifest;
  auto dir = tiny_training_dir("unetgan_same_seed", manifest);
  TrainConfig tcfg = tiny_tcfg();
  tcfg.epochs = 2;

  auto run = [&](const char* sub) {
    auto st = TrainState<float>::init(tiny_gcfg(), tiny_dcfg(), tcfg);
    train(st, manifest, tcfg, (dir / sub).string());
    return dir / sub;
  };
  auto a = run("a");
  auto b = run("b");
  // CSV rows match except the wall-clock column, which is timing-dependent.
  auto strip_wall = [&](const fs::path& p) {
    std::ifstream is(p);
    std::string line, out;
    while (std::getline(is, line)) {
      auto pos = line.rfind(',');
      out += line.substr(0, pos) + "\n";
    }
    return out;
  };
  CHECK(strip_wall(a / "loss_history.csv") == strip_wall(b / "loss_history.csv"));
  CHECK(same_checkpoint(a / "ckpt-2.ugan", b / "ckpt-2.ugan"));
  fs::remove_all(dir);
}

TEST_CASE("epoch training with resume matches a straight two-epoch run") {
  DatasetManifest manifest;
  auto dir = tiny_training_dir("unetgan_epoch_resume", manifest);
  TrainConfig tcfg = tiny_tcfg();

  tcfg.epochs = 2;
  auto straight = TrainState<float>::init(tiny_gcfg(), tiny_dcfg(), tcfg);
  train(straight, manifest, tcfg, (dir / "straight").string());

  tcfg.epochs = 1;
  auto part = TrainState<float>::init(tiny_gcfg(), tiny_dcfg(), tcfg);
  train(part, manifest, tcfg, (dir / "split").string());
  auto resumed = TrainState<float>::load((dir / "split" / "ckpt-1.ugan").string(), tcfg);
  train(resumed, manifest, tcfg, (dir / "split").string());

  CHECK(resumed.epoch == 2);
  CHECK(same_checkpoint(dir / "straight" / "ckpt-2.ugan", dir / "split" / "ckpt-2.ugan"));
  fs::remove_all(dir);
}
