#include "g4ap/serialize.hpp"

#include "g4ap/errors.hpp"

namespace g4ap {

using nlohmann::json;

const char* dtype_name(DType t) { return t == DType::f64 ? "f64" : "f32"; }

DType dtype_from_name(const std::string& name) {
  if (name == "f64") return DType::f64;
  if (name == "f32") return DType::f32;
  throw ContractError("unknown precision '" + name + "' (expected f64 or f32)");
}

const char* gelu_name(GeluKind k) {
  return k == GeluKind::exact_erf ? "erf" : "tanh";
}

GeluKind gelu_from_name(const std::string& name) {
  if (name == "erf" || name == "exact" || name == "exact_erf") return GeluKind::exact_erf;
  if (name == "tanh" || name == "tanh_approx") return GeluKind::tanh_approx;
  throw ContractError("unknown gelu kind '" + name + "' (expected erf or tanh)");
}

json model_config_to_json(const ModelConfig& c) {
  return json{{"hidden", c.hidden},
              {"layers", c.layers},
              {"heads", c.heads},
              {"ffn", c.ffn},
              {"dropout", c.dropout},
              {"lookback", c.lookback},
              {"patch_len", c.patch_len},
              {"stride", c.stride},
              {"num_vars", c.num_vars},
              {"horizon", c.horizon},
              {"rank", c.rank},
              {"alpha", c.alpha},
              {"init_std", c.init_std},
              {"causal_mask", c.causal_mask},
              {"seed", c.seed},
              {"gelu", gelu_name(c.gelu_kind)},
              {"train_pos_base", c.train_pos_base},
              {"proj_bias", c.proj_bias},
              {"precision", dtype_name(c.precision)},
              {"backbone_checkpoint", c.backbone_checkpoint}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ffn = j.value("ffn", c.ffn);
  c.dropout = j.value("dropout", c.dropout);
  c.lookback = j.value("lookback", c.lookback);
  c.patch_len = j.value("patch_len", c.patch_len);
  c.stride = j.value("stride", c.stride);
  c.num_vars = j.value("num_vars", c.num_vars);
  c.horizon = j.value("horizon", c.horizon);
  c.rank = j.value("rank", c.rank);
  c.alpha = j.value("alpha", c.alpha);
  c.init_std = j.value("init_std", c.init_std);
  c.causal_mask = j.value("causal_mask", c.causal_mask);
  c.seed = j.value("seed", c.seed);
  if (j.contains("gelu")) c.gelu_kind = gelu_from_name(j.at("gelu").get<std::string>());
  c.train_pos_base = j.value("train_pos_base", c.train_pos_base);
  c.proj_bias = j.value("proj_bias", c.proj_bias);
  if (j.contains("precision"))
    c.precision = dtype_from_name(j.at("precision").get<std::string>());
  c.backbone_checkpoint = j.value("backbone_checkpoint", c.backbone_checkpoint);
  return c;
}

json audit_to_json(const std::vector<AuditInterval>& audit) {
  json arr = json::array();
  for (const AuditInterval& a : audit)
    arr.push_back(json{{"station", a.station}, {"lo", a.lo}, {"hi", a.hi}, {"count", a.count}});
  return arr;
}

std::vector<AuditInterval> audit_from_json(const json& j) {
  std::vector<AuditInterval> audit;
  for (const auto& item : j) {
    AuditInterval a;
    a.station = item.at("station").get<std::string>();
    a.lo = item.at("lo").get<TimePoint>();
    a.hi = item.at("hi").get<TimePoint>();
    a.count = item.at("count").get<std::size_t>();
    audit.push_back(std::move(a));
  }
  return audit;
}

}  // namespace g4ap
