#pragma once

// Run configuration: two shipped profiles plus key=value files/overrides.
// `paper` is the full-scale setup (8 levels, batch 150, 16384-sample
// segments); `desk` is a scaled-down profile that trains on a workstation
// CPU in minutes. Unknown keys are rejected.

#include <fstream>
#include <sstream>
#include <string>

#include "unetgan/dataset.hpp"
#include "unetgan/train.hpp"

namespace unetgan {

struct RunConfig {
  std::string profile = "paper";
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig training;
  BuildSpec data;

  static RunConfig make_profile(const std::string& name) {
    RunConfig c;
    c.profile = name;
    if (name == "paper") {
      // struct defaults already describe the full-scale model
    } else if (name == "desk") {
      c.generator.levels = 3;
      c.generator.channel_step = 16;
      c.generator.ds_kernel = 9;
      c.generator.input_length = 1024;
      c.training.batch_size = 8;
      c.training.segment_length = 1024;
    } else {
      throw ConfigError("unknown profile '" + name + "' (expected paper or desk)");
    }
    if (name == "paper") c.training.batch_size = 150;
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    auto u64 = [&] { return std::stoull(value); };
    auto f64 = [&] { return std::stod(value); };
    auto u64_list = [&] {
      std::vector<std::size_t> out;
      for (double v : detail::split_doubles(value)) out.push_back(std::size_t(v));
      return out;
    };
    if (key == "levels") generator.levels = u64();
    else if (key == "channel_step") generator.channel_step = u64();
    else if (key == "ds_kernel") generator.ds_kernel = u64();
    else if (key == "us_kernel") generator.us_kernel = u64();
    else if (key == "bottleneck_kernel") generator.bottleneck_kernel = u64();
    else if (key == "bottleneck_dilations") generator.bottleneck_dilations = u64_list();
    else if (key == "leaky_slope") {
      generator.leaky_slope = f64();
      discriminator.leaky_slope = generator.leaky_slope;
    } else if (key == "input_length") {
      generator.input_length = u64();
      training.segment_length = generator.input_length;
    } else if (key == "d_block_channels") discriminator.block_channels = u64_list();
    else if (key == "d_kernel") discriminator.kernel = u64();
    else if (key == "d_stride") discriminator.stride = u64();
    else if (key == "lambda_mse") training.lambda_mse = f64();
    else if (key == "lr") training.lr = f64();
    else if (key == "beta1") training.beta1 = f64();
    else if (key == "beta2") training.beta2 = f64();
    else if (key == "batch_size") training.batch_size = u64();
    else if (key == "epochs") training.epochs = u64();
    else if (key == "seed") training.seed = u64();
    else if (key == "d_steps_per_g_step") training.d_steps_per_g_step = u64();
    else if (key == "logit_clamp_eps") training.logit_clamp_eps = f64();
    else if (key == "checkpoint_every") training.checkpoint_every = u64();
    else if (key == "train_snrs") data.train_snrs = detail::split_doubles(value);
    else if (key == "eval_snrs") data.eval_snrs = detail::split_doubles(value);
    else if (key == "unseen_noises") data.unseen_noises = u64();
    else if (key == "train_utterances") data.train_utterances = u64();
    else if (key == "val_utterances") data.val_utterances = u64();
    else if (key == "test_utterances") data.test_utterances = u64();
    else throw ConfigError("unknown config key '" + key + "'");
  }

  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
      while (!line.empty() && line.front() == ' ') line.erase(line.begin());
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config: expected key=value at " + path + ":" + std::to_string(lineno));
      std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      while (!key.empty() && key.back() == ' ') key.pop_back();
      while (!value.empty() && value.front() == ' ') value.erase(value.begin());
      set(key, value);
    }
  }

  void validate() const {
    generator.validate();
    discriminator.validate();
    training.validate();
    if (generator.input_length != training.segment_length)
      throw ConfigError("config: input_length and segment_length must agree");
  }

  std::string resolved() const {
    std::ostringstream os;
    os << "profile=" << profile << "\n";
    os << "levels=" << generator.levels << "\n";
    os << "channel_step=" << generator.channel_step << "\n";
    os << "ds_kernel=" << generator.ds_kernel << "\n";
    os << "us_kernel=" << generator.us_kernel << "\n";
    os << "bottleneck_kernel=" << generator.bottleneck_kernel << "\n";
    os << "bottleneck_dilations=";
    for (std::size_t i = 0; i < generator.bottleneck_dilations.size(); ++i)
      os << (i ? "," : "") << generator.bottleneck_dilations[i];
    os << "\n";
    os << "leaky_slope=" << generator.leaky_slope << "\n";
    os << "input_length=" << generator.input_length << "\n";
    os << "d_block_channels=";
    for (std::size_t i = 0; i < discriminator.block_channels.size(); ++i)
      os << (i ? "," : "") << discriminator.block_channels[i];
    os << "\n";
    os << "d_kernel=" << discriminator.kernel << "\n";
    os << "d_stride=" << discriminator.stride << "\n";
    os << "lambda_mse=" << training.lambda_mse << "\n";
    os << "lr=" << training.lr << "\n";
    os << "beta1=" << training.beta1 << "\n";
    os << "beta2=" << training.beta2 << "\n";
    os << "batch_size=" << training.batch_size << "\n";
    os << "epochs=" << training.epochs << "\n";
    os << "seed=" << training.seed << "\n";
    os << "d_steps_per_g_step=" << training.d_steps_per_g_step << "\n";
    os << "logit_clamp_eps=" << training.logit_clamp_eps << "\n";
    os << "checkpoint_every=" << training.checkpoint_every << "\n";
    os << "train_snrs=" << detail::join_doubles(data.train_snrs) << "\n";
    os << "eval_snrs=" << detail::join_doubles(data.eval_snrs) << "\n";
    os << "unseen_noises=" << data.unseen_noises << "\n";
    os << "train_utterances=" << data.train_utterances << "\n";
    os << "val_utterances=" << data.val_utterances << "\n";
    os << "test_utterances=" << data.test_utterances << "\n";
    return os.str();
  }
};

}  // namespace unetgan
