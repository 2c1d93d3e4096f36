// Copyright (c) 2026 natprosody authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NATP_CONFIG_HPP_
#define NATP_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace natp {

// One declarative document for every knob. Unknown keys in a loaded config
// are rejected; flags override fields after loading; the hash of the
// canonical serialization is stamped into every artifact.
struct RunConfig {
  uint64_t seed = 1234;

  struct Data {
    int64_t utterances = 200;
    int64_t speakers = 2;
    int64_t mel_bins = 16;        // manifest supports the full 128
    int64_t min_words = 5;
    int64_t max_words = 10;
    int64_t min_symbols = 20;
    int64_t max_symbols = 60;
    double frame_hop_ms = 10.0;
    double frame_window_ms = 50.0;
    std::vector<double> speaking_rates = {15.0, 13.0};  // phones per second
  } data;

  struct Prosody {
    int64_t cwt_scales = 10;
    double cwt_base_scale = 2.0;
    std::array<double, 4> pause_thresholds = {0.5, 2.0, 5.0, 10.0};
    int64_t smooth_window = 5;
  } prosody;

  struct Model {
    int64_t enc_embed = 96;
    int64_t enc_conv_channels = 96;
    int64_t enc_rnn = 128;          // per direction; encoder output is 2x
    int64_t attn_rnn = 256;
    int64_t dec_rnn = 256;
    int64_t prenet = 64;
    int64_t postnet_channels = 64;
    int64_t postnet_layers = 2;
    int64_t postnet_kernel = 5;
    int64_t dur_rnn = 96;
    int64_t duration_embedding = 32;
    int64_t attn_hidden = 128;
    int64_t positional_dim = 32;
    int64_t style_tokens = 10;
    int64_t style_token_dim = 32;
    int64_t style_embedding = 256;
    int64_t style_heads = 4;
    int64_t speaker_embedding = 256;
    std::vector<int64_t> ref_conv_channels = {16, 16, 32};
    int64_t ref_rnn = 128;
    int64_t local_ref_rnn = 64;     // per direction
  } model;

  struct Train {
    int64_t batch_size = 8;
    int64_t steps = 2600;
    int64_t lambda_knee = 2000;     // lambda flips 0 -> 1 here; lr decays after
    double lr = 1e-3;
    double lr_decay_half_life_knees = 10.0;  // halvings per 10x knee steps
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;
    int64_t checkpoint_every = 1000;
    int64_t log_every = 25;
  } train;

  struct StylePred {
    int64_t embed = 64;
    int64_t ctx_rnn = 96;           // per direction
    int64_t gse_rnn = 96;           // per direction
    double lr = 1e-3;
    double external_encoder_lr = 2e-5;
    int64_t steps = 1200;
    int64_t batch_size = 8;
    double emd_beta = 1.0;
    std::vector<double> loss_weights = {1.0, 1.0, 1.0};  // gse, lse, symbolic
  } stylepred;

  static RunConfig Defaults() { return RunConfig(); }
  // Parses JSON text over the defaults; throws on unknown keys or bad types.
  static RunConfig FromJsonText(const std::string& text);
  static RunConfig FromFileOrDefaults(const std::string& path);  // "" -> defaults
  std::string ToJsonText() const;
  std::string Hash() const;  // hex of the canonical serialization
};

}  // namespace natp

#endif  // NATP_CONFIG_HPP_
