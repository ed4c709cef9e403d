#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g4ap/model.hpp"

namespace g4ap {

// Local backbone pretraining on synthetic series: the transformer stack is
// temporarily unfrozen and trained on next-patch regression (predict patch
// t+1's raw vector from patches <= t through a throwaway linear readout),
// then saved as a backbone-only checkpoint for build() to load and freeze.
struct PretrainConfig {
  std::size_t corpus_hours = 3000;
  std::size_t epochs = 3;
  double lr = 1e-3;
  std::uint64_t seed = 9001;  // must stay disjoint from downstream data seeds
  std::size_t batch_size = 16;
  double noise_std = 1.0;
};

struct PretrainResult {
  std::vector<double> epoch_losses;
  std::size_t windows = 0;
};

PretrainResult pretrain_backbone(const PretrainConfig& config, const ModelConfig& model_config,
                                 const std::string& out_checkpoint);

// Raises a contract error when a pretrained backbone's corpus seed collides
// with the seed about to generate downstream train/val/test data.
void check_pretrain_provenance(const ModelBundle& bundle, std::uint64_t data_seed);

}  // namespace g4ap
