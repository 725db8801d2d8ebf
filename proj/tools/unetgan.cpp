// unetgan: time-domain speech enhancement toolkit.
//
// Subcommands: fixtures (synthetic corpus), mix (SNR-controlled dataset
// synthesis), train (adversarial training), enhance (run the generator on
// WAV files), eval (STOI / SI-SNR scoring).
//
// Exit codes: 0 success, 2 usage or input error, 3 data-format error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "unetgan/config.hpp"
#include "unetgan/metrics.hpp"
#include "unetgan/stoi.hpp"
#include "unetgan/train.hpp"

namespace fs = std::filesystem;
using namespace unetgan;

namespace {

struct CommonOpts {
  std::string profile = "desk";
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--profile", o.profile, "config profile: paper or desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--config", o.config_path, "key=value config file");
  cmd->add_option("--set", o.overrides, "config override key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "RNG seed")->each([&](const std::string&) {
    o.seed_set = true;
  });
}

RunConfig resolve(const CommonOpts& o) {
  RunConfig cfg = RunConfig::make_profile(o.profile);
  if (!o.config_path.empty()) cfg.load_file(o.config_path);
  for (const auto& kv : o.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed_set) cfg.training.seed = o.seed;
  cfg.data.seed = cfg.training.seed;
  cfg.validate();
  std::cerr << "resolved config:\n" << cfg.resolved();
  return cfg;
}

int run_fixtures(const std::string& out_dir, std::uint64_t seed, std::size_t clean_files,
                 std::size_t noise_files, double seconds) {
  FixtureSpec spec;
  spec.clean_files = clean_files;
  spec.noise_files = noise_files;
  spec.seconds = seconds;
  make_fixture_corpus(out_dir, seed, spec);
  std::cerr << "wrote " << clean_files << " clean + " << noise_files << " noise WAVs to "
            << out_dir << " (seed " << seed << ")\n";
  return 0;
}

int run_mix(const CommonOpts& common, const std::string& clean_dir, const std::string& noise_dir,
            const std::string& out_dir) {
  RunConfig cfg = resolve(common);
  DatasetManifest m = build_manifest(clean_dir, noise_dir, cfg.data);
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  for (const auto& r : m.pairs) {
    if (r.split == Split::train) ++n_train;
    else if (r.split == Split::validation) ++n_val;
    else ++n_test;
  }
  synthesize_manifest(m, out_dir);
  const std::string manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
  write_manifest(manifest_path, m);
  std::cout << "train pairs: " << n_train << "\n";
  std::cout << "validation pairs: " << n_val << "\n";
  std::cout << "test pairs: " << n_test << "\n";
  std::cout << "manifest: " << manifest_path << "\n";
  return 0;
}

int run_train(const CommonOpts& common, const std::string& manifest_path,
              const std::string& out_dir, const std::string& resume) {
  RunConfig cfg = resolve(common);
  DatasetManifest manifest = read_manifest(manifest_path);
  TrainState<float> state;
  if (!resume.empty()) {
    state = TrainState<float>::load(resume, cfg.training);
    std::cerr << "resumed from " << resume << " at epoch " << state.epoch << "\n";
  } else {
    state = TrainState<float>::init(cfg.generator, cfg.discriminator, cfg.training);
  }
  fs::create_directories(out_dir);
  {
    std::ofstream snap(fs::path(out_dir) / "config.txt");
    snap << cfg.resolved();
  }
  std::function<void(std::uint64_t, const StepLosses<float>&)> progress =
      [](std::uint64_t epoch, const StepLosses<float>& l) {
        static std::uint64_t step = 0;
        if (++step % 25 == 0)
          std::cerr << "epoch " << epoch << " step " << step << " L_D=" << l.loss_d
                    << " L_G=" << l.loss_g << " mse=" << l.mse_term << "\n";
      };
  train(state, manifest, cfg.training, out_dir, progress);
  std::cout << "trained to epoch " << state.epoch << "; checkpoints in " << out_dir << "\n";
  return 0;
}

int run_enhance(const std::string& ckpt_path, const std::string& input,
                const std::string& out_dir) {
  auto idx = checkpoint_index(load_checkpoint(ckpt_path));
  GeneratorConfig gcfg = TrainState<float>::generator_config_from(idx);
  auto gen = Generator<float>::build(gcfg, 0);
  auto nt = gen.named_tensors();
  restore_records(idx, nt);

  std::vector<fs::path> inputs;
  if (fs::is_directory(input)) {
    inputs = list_wavs(input);
  } else if (fs::is_regular_file(input)) {
    inputs.push_back(input);
  } else {
    throw DataError("enhance: no such file or directory: " + input);
  }
  fs::create_directories(out_dir);
  for (const auto& p : inputs) {
    Waveform in = read_wav(p.string());
    Waveform out = enhance_waveform(gen, in);
    fs::path out_path = fs::path(out_dir) / p.filename();
    write_wav(out_path.string(), out);
    std::cerr << p.filename().string() << " -> " << out_path.string() << " (" << in.samples.size()
              << " samples)\n";
  }
  return 0;
}

int run_eval(const std::string& manifest_path, const std::string& split_name_s,
             const std::string& enhanced_dir, const std::string& ckpt_path,
             const std::string& out_dir) {
  DatasetManifest m = read_manifest(manifest_path);
  Split split = split_from_name(split_name_s);
  EnhanceFn enhance;
  std::shared_ptr<Generator<float>> gen;
  if (!ckpt_path.empty()) {
    auto idx = checkpoint_index(load_checkpoint(ckpt_path));
    GeneratorConfig gcfg = TrainState<float>::generator_config_from(idx);
    gen = std::make_shared<Generator<float>>(Generator<float>::build(gcfg, 0));
    auto nt = gen->named_tensors();
    restore_records(idx, nt);
    enhance = [gen](const Waveform& w) { return enhance_waveform(*gen, w); };
  }
  ScoreReport report = score_manifest(m, split, enhance, enhanced_dir);
  fs::create_directories(out_dir);
  const std::string csv = (fs::path(out_dir) / "scores.csv").string();
  write_score_csv(csv, report);
  std::string table = format_group_table(report);
  {
    std::ofstream os(fs::path(out_dir) / "scores_grouped.txt");
    os << table;
  }
  std::cout << table;
  std::cout << "per-pair scores: " << csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UNetGAN time-domain speech enhancement toolkit"};
  app.require_subcommand(1);

  // fixtures
  auto* fixtures = app.add_subcommand("fixtures", "generate a synthetic clean/noise corpus");
  std::string fix_out;
  std::uint64_t fix_seed = 0;
  std::size_t fix_clean = 12, fix_noise = 3;
  double fix_seconds = 4.5;
  fixtures->add_option("--out", fix_out, "output directory")->required();
  fixtures->add_option("--seed", fix_seed, "RNG seed");
  fixtures->add_option("--clean-files", fix_clean, "number of clean fixtures");
  fixtures->add_option("--noise-files", fix_noise, "number of noise fixtures");
  fixtures->add_option("--seconds", fix_seconds, "duration of each fixture");

  // mix
  auto* mix = app.add_subcommand("mix", "build a dataset manifest and synthesize mixtures");
  CommonOpts mix_common;
  std::string mix_clean, mix_noise, mix_out;
  mix->add_option("--clean", mix_clean, "clean corpus directory")->required();
  mix->add_option("--noise", mix_noise, "noise corpus directory")->required();
  mix->add_option("--out", mix_out, "output directory")->required();
  add_common(mix, mix_common);

  // train
  auto* train_cmd = app.add_subcommand("train", "adversarial training");
  CommonOpts train_common;
  std::string train_manifest, train_out, train_resume;
  std::int64_t train_epochs = -1;
  double train_lambda = -1;
  train_cmd->add_option("--manifest", train_manifest, "dataset manifest")->required();
  train_cmd->add_option("--out", train_out, "run directory")->required();
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
  train_cmd->add_option("--epochs", train_epochs, "number of epochs to run");
  train_cmd->add_option("--lambda-mse", train_lambda, "MSE weight in the generator loss");
  add_common(train_cmd, train_common);

  // enhance
  auto* enhance = app.add_subcommand("enhance", "enhance WAV file(s) with a trained generator");
  std::string enh_ckpt, enh_in, enh_out;
  enhance->add_option("--checkpoint", enh_ckpt, "generator checkpoint")->required();
  enhance->add_option("--in", enh_in, "input WAV file or directory")->required();
  enhance->add_option("--out", enh_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "score a manifest with STOI and SI-SNR");
  std::string eval_manifest, eval_split = "test", eval_enhanced, eval_ckpt, eval_out = ".";
  eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  eval->add_option("--split", eval_split, "split to score")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  eval->add_option("--enhanced", eval_enhanced, "directory of enhanced WAVs");
  eval->add_option("--checkpoint", eval_ckpt, "generator checkpoint to enhance with");
  eval->add_option("--out", eval_out, "report output directory");

  try {
    app.parse(argc, argv);
    if (fixtures->parsed())
      return run_fixtures(fix_out, fix_seed, fix_clean, fix_noise, fix_seconds);
    if (mix->parsed()) return run_mix(mix_common, mix_clean, mix_noise, mix_out);
    if (train_cmd->parsed()) {
      if (train_epochs >= 0)
        train_common.overrides.push_back("epochs=" + std::to_string(train_epochs));
      if (train_lambda >= 0)
        train_common.overrides.push_back("lambda_mse=" + std::to_string(train_lambda));
      return run_train(train_common, train_manifest, train_out, train_resume);
    }
    if (enhance->parsed()) return run_enhance(enh_ckpt, enh_in, enh_out);
    if (eval->parsed())
      return run_eval(eval_manifest, eval_split, eval_enhanced, eval_ckpt, eval_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
