#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "g4ap/data.hpp"
#include "g4ap/eval.hpp"
#include "g4ap/model.hpp"
#include "g4ap/train.hpp"

namespace g4ap {

struct DataSpec {
  std::string kind = "synth";  // "synth" | "csv"
  std::size_t stations = 3;
  std::size_t hours = 4000;
  double noise_std = 1.0;
  double shift_step = 1.0;  // station k is generated with shift k * shift_step
  std::vector<std::string> paths;
  CsvSchema schema;
};

struct SplitSpec {
  double test_fraction = 0.25;
  double val_fraction = 0.10;
  double few_shot_fraction = 0.10;
};

struct AblateSpec {
  std::vector<std::size_t> ranks{4, 8, 16, 32, 64};
  std::size_t repeats = 1;
};

struct PretrainSpec {
  std::size_t corpus_hours = 3000;
  std::size_t epochs = 3;
  double lr = 1e-3;
  std::uint64_t seed = 9001;
};

// Full run description. Every field has a default except the data source
// (synthetic defaults exist, CSV paths do not). Component seeds not pinned
// in the file are fanned out deterministically from the top-level seed.
struct RunSpec {
  std::uint64_t seed = 7;
  std::string out_dir;
  DataSpec data;
  SplitSpec split;
  ModelConfig model;
  TrainOptions train;
  EvalOptions eval;
  AblateSpec ablate;
  PretrainSpec pretrain;

  std::uint64_t data_seed() const;

  static RunSpec from_json(const nlohmann::json& j);
  static RunSpec load_file(const std::string& path);
  nlohmann::json to_json() const;  // fully resolved, defaults applied
};

}  // namespace g4ap
