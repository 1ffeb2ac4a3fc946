#pragma once

#include <string>

#include "garec/train.hpp"

namespace garec {

// Flat "key = value" config file ('#' starts a comment, blank lines
// ignored). Unknown keys are an error so typos cannot silently fall back to
// defaults. Keys mirror TrainConfig/NmfConfig fields:
//   learning_rate batch_size max_epochs patience seed freeze_factors T d
//   d_prime activation validation_fraction shared_qk mlp_h1 mlp_h2 threads
//   record_seconds nmf_max_iters nmf_rel_tol nmf_epsilon
void apply_config_file(TrainConfig& cfg, const std::string& path);
void apply_config_line(TrainConfig& cfg, const std::string& key,
                       const std::string& value);  // shared with CLI overrides

// The effective configuration as a JSON object string, echoed into every
// output file for auditability.
std::string config_echo_json(const TrainConfig& cfg);

}  // namespace garec
