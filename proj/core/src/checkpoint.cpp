#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "g4ap/errors.hpp"
#include "g4ap/model.hpp"
#include "g4ap/serialize.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace g4ap {

namespace {

using nlohmann::json;

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u8(std::ofstream& out, std::uint8_t v) { write_bytes(out, &v, 1); }
void write_u32(std::ofstream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }

void read_bytes(std::ifstream& in, void* data, std::size_t n, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw CorruptionError(std::string("truncated checkpoint while reading ") + what);
}

std::uint8_t read_u8(std::ifstream& in, const char* what) {
  std::uint8_t v;
  read_bytes(in, &v, 1, what);
  return v;
}

std::uint32_t read_u32(std::ifstream& in, const char* what) {
  std::uint32_t v;
  read_bytes(in, &v, 4, what);
  return v;
}

std::uint64_t read_u64(std::ifstream& in, const char* what) {
  std::uint64_t v;
  read_bytes(in, &v, 8, what);
  return v;
}

void write_tensor_record(std::ofstream& out, const std::string& name, const Tensor& t) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  write_bytes(out, name.data(), name.size());
  write_u8(out, static_cast<std::uint8_t>(t.dtype()));
  const auto& shape = t.shape();
  write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t e : shape) write_u64(out, e);
  if (t.dtype() == DType::f64) {
    write_bytes(out, t.data().data(), t.numel() * sizeof(double));
  } else {
    std::vector<float> f32(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) f32[i] = static_cast<float>(t.data()[i]);
    write_bytes(out, f32.data(), f32.size() * sizeof(float));
  }
}

struct TensorRecord {
  std::string name;
  DType dtype;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

TensorRecord read_tensor_record(std::ifstream& in) {
  TensorRecord rec;
  const std::uint32_t name_len = read_u32(in, "tensor name length");
  if (name_len > 4096) throw CorruptionError("implausible tensor name length");
  rec.name.resize(name_len);
  read_bytes(in, rec.name.data(), name_len, "tensor name");
  const std::uint8_t tag = read_u8(in, "dtype tag");
  if (tag > 1) throw CorruptionError("unknown dtype tag in tensor record");
  rec.dtype = static_cast<DType>(tag);
  const std::uint32_t rank = read_u32(in, "tensor rank");
  if (rank > 8) throw CorruptionError("implausible tensor rank");
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t extent = read_u64(in, "tensor extent");
    if (extent == 0 || extent > (1ull << 32)) throw CorruptionError("implausible tensor extent");
    rec.shape.push_back(static_cast<std::size_t>(extent));
    numel *= static_cast<std::size_t>(extent);
  }
  rec.values.resize(numel);
  if (rec.dtype == DType::f64) {
    read_bytes(in, rec.values.data(), numel * sizeof(double), "tensor data");
  } else {
    std::vector<float> f32(numel);
    read_bytes(in, f32.data(), numel * sizeof(float), "tensor data");
    for (std::size_t i = 0; i < numel; ++i) rec.values[i] = static_cast<double>(f32[i]);
  }
  return rec;
}

void write_container(const std::string& path, const json& config_block,
                     const std::vector<const NamedParam*>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.is_open()) throw DataError("cannot open checkpoint for writing: " + path);
  write_bytes(out, kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  const std::string config_text = config_block.dump();
  write_u64(out, config_text.size());
  write_bytes(out, config_text.data(), config_text.size());
  write_u64(out, tensors.size());
  for (const NamedParam* p : tensors) write_tensor_record(out, p->name, p->tensor);
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

struct Container {
  json config_block;
  std::vector<TensorRecord> tensors;
};

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError("not a checkpoint file (bad magic): " + path);
  const std::uint32_t version = read_u32(in, "version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t config_len = read_u64(in, "config length");
  if (config_len > (1ull << 24)) throw CorruptionError("implausible config block length");
  std::string config_text(config_len, '\0');
  read_bytes(in, config_text.data(), config_len, "config block");
  Container c;
  try {
    c.config_block = json::parse(config_text);
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("config block is not valid JSON: ") + e.what());
  }
  const std::uint64_t tensor_count = read_u64(in, "tensor count");
  if (tensor_count > 100000) throw CorruptionError("implausible tensor count");
  for (std::uint64_t i = 0; i < tensor_count; ++i) c.tensors.push_back(read_tensor_record(in));
  in.peek();
  if (!in.eof()) throw CorruptionError("trailing bytes after last tensor record: " + path);
  return c;
}

void apply_records(ModelBundle& bundle, const std::vector<TensorRecord>& records,
                   bool backbone_only) {
  std::map<std::string, NamedParam*> by_name;
  for (NamedParam& p : bundle.params()) by_name[p.name] = &p;
  std::size_t applied = 0;
  for (const TensorRecord& rec : records) {
    auto it = by_name.find(rec.name);
    if (it == by_name.end())
      throw CorruptionError("checkpoint tensor '" + rec.name + "' has no matching parameter");
    Tensor& t = it->second->tensor;
    if (t.shape() != rec.shape)
      throw CorruptionError("checkpoint tensor '" + rec.name + "' has mismatched shape");
    if (t.dtype() != rec.dtype)
      throw CorruptionError("checkpoint tensor '" + rec.name + "' has mismatched dtype");
    std::copy(rec.values.begin(), rec.values.end(), t.mutable_data().begin());
    ++applied;
  }
  std::size_t expected = 0;
  for (const NamedParam& p : bundle.params())
    if (!backbone_only || p.name.rfind("backbone.", 0) == 0) ++expected;
  if (applied != expected)
    throw CorruptionError("checkpoint is missing tensors: applied " + std::to_string(applied) +
                          " of " + std::to_string(expected));
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
  json config_block{{"backbone_only", false},
                    {"model", model_config_to_json(bundle.config())},
                    {"audit", audit_to_json(bundle.audit())}};
  if (bundle.pretrain_corpus_seed())
    config_block["pretrain_corpus_seed"] = *bundle.pretrain_corpus_seed();
  std::vector<const NamedParam*> tensors;
  for (const NamedParam& p : bundle.params()) tensors.push_back(&p);
  write_container(path, config_block, tensors);
}

ModelBundle load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  if (c.config_block.value("backbone_only", false))
    throw FormatError(path + " is a backbone-only checkpoint; load it via "
                             "ModelConfig::backbone_checkpoint instead");
  ModelConfig config = model_config_from_json(c.config_block.at("model"));
  // Weights come from this container; never chase the original backbone file.
  const std::string recorded_backbone = config.backbone_checkpoint;
  config.backbone_checkpoint.clear();
  ModelBundle bundle = ModelBundle::build(config);
  bundle.config_.backbone_checkpoint = recorded_backbone;
  apply_records(bundle, c.tensors, false);
  if (c.config_block.contains("audit"))
    bundle.audit() = audit_from_json(c.config_block.at("audit"));
  if (c.config_block.contains("pretrain_corpus_seed"))
    bundle.set_pretrain_corpus_seed(c.config_block.at("pretrain_corpus_seed").get<std::uint64_t>());
  return bundle;
}

void save_backbone_checkpoint(const ModelBundle& bundle, const std::string& path,
                              std::uint64_t corpus_seed) {
  json config_block{{"backbone_only", true},
                    {"model", model_config_to_json(bundle.config())},
                    {"pretrain_corpus_seed", corpus_seed}};
  std::vector<const NamedParam*> tensors;
  for (const NamedParam& p : bundle.params())
    if (p.name.rfind("backbone.", 0) == 0) tensors.push_back(&p);
  write_container(path, config_block, tensors);
}

void load_backbone_into(ModelBundle& bundle, const std::string& path) {
  Container c = read_container(path);
  const ModelConfig source = model_config_from_json(c.config_block.at("model"));
  const ModelConfig& target = bundle.config();
  if (source.hidden != target.hidden || source.layers != target.layers ||
      source.heads != target.heads || source.ffn != target.ffn ||
      source.precision != target.precision)
    throw ContractError("backbone checkpoint architecture (" + std::to_string(source.hidden) +
                        "/" + std::to_string(source.layers) + "/" + std::to_string(source.heads) +
                        "/" + std::to_string(source.ffn) + ") does not match model config");
  std::vector<TensorRecord> backbone_records;
  for (TensorRecord& rec : c.tensors)
    if (rec.name.rfind("backbone.", 0) == 0) backbone_records.push_back(std::move(rec));
  apply_records(bundle, backbone_records, true);
  if (c.config_block.contains("pretrain_corpus_seed"))
    bundle.set_pretrain_corpus_seed(c.config_block.at("pretrain_corpus_seed").get<std::uint64_t>());
}

}  // namespace g4ap
