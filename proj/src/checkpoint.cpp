#include "omcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace omcl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(path + ": truncated checkpoint");
  return v;
}

void put_tensor(std::ofstream& out, const std::string& name, const Tensor& t) {
  put<uint16_t>(out, static_cast<uint16_t>(name.size()));
  out.write(name.data(), static_cast<long>(name.size()));
  put<uint8_t>(out, static_cast<uint8_t>(t.ndim()));
  for (int d : t.shape) put<int32_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<long>(t.data.size() * sizeof(double)));
}

std::pair<std::string, Tensor> take_tensor(std::ifstream& in, const std::string& path) {
  const uint16_t name_len = take<uint16_t>(in, path);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  const uint8_t rank = take<uint8_t>(in, path);
  std::vector<int> shape;
  for (int i = 0; i < rank; ++i) shape.push_back(take<int32_t>(in, path));
  Tensor t = Tensor::zeros(shape);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<long>(t.data.size() * sizeof(double)));
  if (!in) throw DataError(path + ": truncated checkpoint tensor " + name);
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     const std::vector<std::array<uint64_t, 4>>& rng_states) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write("OMCL", 4);
  put<uint32_t>(out, kVersion);
  put<uint8_t>(out, model.backbone.arch == Arch::mlp ? 0 : 1);
  put<int32_t>(out, model.backbone.in_h);
  put<int32_t>(out, model.backbone.in_w);
  put<int32_t>(out, model.backbone.in_ch);
  put<int32_t>(out, model.backbone.embed_dim);
  put<uint32_t>(out, static_cast<uint32_t>(model.backbone.mlp_hidden.size()));
  for (int h : model.backbone.mlp_hidden) put<int32_t>(out, h);
  put<int32_t>(out, model.head.num_classes);
  put<double>(out, model.head.margin);
  put<double>(out, model.head.threshold);
  put<double>(out, model.head.lambda);
  put<double>(out, model.s());
  put<uint32_t>(out, static_cast<uint32_t>(rng_states.size()));
  for (const auto& st : rng_states)
    for (uint64_t w : st) put<uint64_t>(out, w);

  std::vector<std::pair<std::string, Tensor>> tensors = model.backbone_params;
  tensors.emplace_back("head_w", model.head_w);
  tensors.emplace_back("input_mean", Tensor({static_cast<int>(model.stats.mean.size())},
                                            model.stats.mean));
  tensors.emplace_back("input_std", Tensor({static_cast<int>(model.stats.stddev.size())},
                                           model.stats.stddev));
  put<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) put_tensor(out, name, t);
  if (!out) throw DataError("short write to checkpoint " + path);
}

Model load_checkpoint(const std::string& path,
                      std::vector<std::array<uint64_t, 4>>* rng_states) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "OMCL", 4) != 0)
    throw DataError(path + ": not a checkpoint file (bad magic)");
  const uint32_t version = take<uint32_t>(in, path);
  if (version != kVersion)
    throw DataError(path + ": unsupported checkpoint version " +
                    std::to_string(version));

  Model m;
  const uint8_t arch = take<uint8_t>(in, path);
  if (arch > 1) throw DataError(path + ": unknown architecture tag");
  m.backbone.arch = arch == 0 ? Arch::mlp : Arch::small_cnn;
  m.backbone.in_h = take<int32_t>(in, path);
  m.backbone.in_w = take<int32_t>(in, path);
  m.backbone.in_ch = take<int32_t>(in, path);
  m.backbone.embed_dim = take<int32_t>(in, path);
  m.backbone.mlp_hidden.clear();
  const uint32_t n_hidden = take<uint32_t>(in, path);
  for (uint32_t i = 0; i < n_hidden; ++i)
    m.backbone.mlp_hidden.push_back(take<int32_t>(in, path));
  m.head.num_classes = take<int32_t>(in, path);
  m.head.margin = take<double>(in, path);
  m.head.threshold = take<double>(in, path);
  m.head.lambda = take<double>(in, path);
  m.scale = Tensor::scalar(take<double>(in, path));

  const uint32_t n_rng = take<uint32_t>(in, path);
  for (uint32_t i = 0; i < n_rng; ++i) {
    std::array<uint64_t, 4> st{};
    for (auto& w : st) w = take<uint64_t>(in, path);
    if (rng_states) rng_states->push_back(st);
  }

  const uint32_t n_tensors = take<uint32_t>(in, path);
  bool have_head = false;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    auto [name, t] = take_tensor(in, path);
    if (name == "head_w") {
      m.head_w = std::move(t);
      have_head = true;
    } else if (name == "input_mean") {
      m.stats.mean = t.data;
    } else if (name == "input_std") {
      m.stats.stddev = t.data;
    } else {
      m.backbone_params.emplace_back(std::move(name), std::move(t));
    }
  }
  if (!have_head) throw DataError(path + ": checkpoint has no classifier weights");
  return m;
}

}  // namespace omcl
