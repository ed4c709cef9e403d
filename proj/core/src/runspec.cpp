#include "g4ap/runspec.hpp"

#include <fstream>

#include "g4ap/errors.hpp"
#include "g4ap/serialize.hpp"

namespace g4ap {

using nlohmann::json;

std::uint64_t RunSpec::data_seed() const { return fnv1a("data", fnv1a_u64(seed, 0x9e3779b9)); }

RunSpec RunSpec::from_json(const json& j) {
  RunSpec spec;
  spec.seed = j.value("seed", spec.seed);
  spec.out_dir = j.value("out", spec.out_dir);

  if (j.contains("data")) {
    const json& d = j.at("data");
    spec.data.kind = d.value("kind", spec.data.kind);
    if (spec.data.kind != "synth" && spec.data.kind != "csv")
      throw ContractError("run spec: data.kind must be 'synth' or 'csv'");
    spec.data.stations = d.value("stations", spec.data.stations);
    spec.data.hours = d.value("hours", spec.data.hours);
    spec.data.noise_std = d.value("noise_std", spec.data.noise_std);
    spec.data.shift_step = d.value("shift_step", spec.data.shift_step);
    if (d.contains("paths")) spec.data.paths = d.at("paths").get<std::vector<std::string>>();
    if (d.contains("schema"))
      for (const auto& [key, value] : d.at("schema").items())
        spec.data.schema[key] = value.get<std::string>();
  }
  if (spec.data.kind == "csv" && spec.data.paths.empty())
    throw ContractError("run spec: data.kind is 'csv' but data.paths is empty");

  if (j.contains("split")) {
    const json& s = j.at("split");
    spec.split.test_fraction = s.value("test_fraction", spec.split.test_fraction);
    spec.split.val_fraction = s.value("val_fraction", spec.split.val_fraction);
    spec.split.few_shot_fraction = s.value("few_shot_fraction", spec.split.few_shot_fraction);
  }

  if (j.contains("model")) {
    spec.model = model_config_from_json(j.at("model"));
    if (!j.at("model").contains("seed"))
      spec.model.seed = fnv1a("model", fnv1a_u64(spec.seed, 0x9e3779b9));
  } else {
    spec.model.seed = fnv1a("model", fnv1a_u64(spec.seed, 0x9e3779b9));
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    spec.train.protocol = protocol_from_name(t.value("protocol", std::string("long_term")));
    spec.train.epochs = t.value("epochs", spec.train.epochs);
    spec.train.batch_size = t.value("batch_size", spec.train.batch_size);
    spec.train.lr = t.value("lr", spec.train.lr);
    spec.train.patience = t.value("patience", spec.train.patience);
    spec.train.grad_clip = t.value("grad_clip", spec.train.grad_clip);
    spec.train.max_total_steps = t.value("max_total_steps", spec.train.max_total_steps);
    spec.train.source_station = t.value("source_station", spec.train.source_station);
    spec.train.target_station = t.value("target_station", spec.train.target_station);
    if (t.contains("seed")) {
      spec.train.seed = t.at("seed").get<std::uint64_t>();
    } else {
      spec.train.seed = fnv1a("train", fnv1a_u64(spec.seed, 0x9e3779b9));
    }
  } else {
    spec.train.seed = fnv1a("train", fnv1a_u64(spec.seed, 0x9e3779b9));
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    if (e.contains("horizons"))
      spec.eval.horizons = e.at("horizons").get<std::vector<std::size_t>>();
    spec.eval.raw_metrics = e.value("raw_metrics", spec.eval.raw_metrics);
  }

  if (j.contains("ablate")) {
    const json& a = j.at("ablate");
    if (a.contains("ranks")) spec.ablate.ranks = a.at("ranks").get<std::vector<std::size_t>>();
    spec.ablate.repeats = a.value("repeats", spec.ablate.repeats);
  }

  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    spec.pretrain.corpus_hours = p.value("corpus_hours", spec.pretrain.corpus_hours);
    spec.pretrain.epochs = p.value("epochs", spec.pretrain.epochs);
    spec.pretrain.lr = p.value("lr", spec.pretrain.lr);
    spec.pretrain.seed = p.value("seed", spec.pretrain.seed);
  }
  return spec;
}

RunSpec RunSpec::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw DataError("cannot open run spec: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("run spec " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json RunSpec::to_json() const {
  json d{{"kind", data.kind},       {"stations", data.stations},
         {"hours", data.hours},     {"noise_std", data.noise_std},
         {"shift_step", data.shift_step}};
  if (!data.paths.empty()) d["paths"] = data.paths;
  if (!data.schema.empty()) {
    json schema = json::object();
    for (const auto& [key, value] : data.schema) schema[key] = value;
    d["schema"] = schema;
  }
  json t{{"protocol", protocol_name(train.protocol)},
         {"epochs", train.epochs},
         {"batch_size", train.batch_size},
         {"lr", train.lr},
         {"patience", train.patience},
         {"grad_clip", train.grad_clip},
         {"max_total_steps", train.max_total_steps},
         {"seed", train.seed}};
  if (!train.source_station.empty()) t["source_station"] = train.source_station;
  if (!train.target_station.empty()) t["target_station"] = train.target_station;
  json e{{"raw_metrics", eval.raw_metrics}};
  if (!eval.horizons.empty()) e["horizons"] = eval.horizons;
  return json{{"seed", seed},
              {"out", out_dir},
              {"data", d},
              {"split",
               {{"test_fraction", split.test_fraction},
                {"val_fraction", split.val_fraction},
                {"few_shot_fraction", split.few_shot_fraction}}},
              {"model", model_config_to_json(model)},
              {"train", t},
              {"eval", e},
              {"ablate", {{"ranks", ablate.ranks}, {"repeats", ablate.repeats}}},
              {"pretrain",
               {{"corpus_hours", pretrain.corpus_hours},
                {"epochs", pretrain.epochs},
                {"lr", pretrain.lr},
                {"seed", pretrain.seed}}}};
}

}  // namespace g4ap
