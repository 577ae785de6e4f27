#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeml/ensemble.hpp"
#include "eeml/errors.hpp"
#include "eeml/net.hpp"

namespace eeml {

// Container layout (all integers little-endian):
//   "EEML" | u32 version | u32 json length | json metadata |
//   for each array declared in metadata ("arrays": [{name, len}...]):
//     len doubles, 64-bit little-endian
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  std::string bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > bytes.size())
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
};

struct NamedArray {
  std::string name;
  std::span<const double> data;
};

inline void write_container(const std::filesystem::path& path, nlohmann::json meta,
                            std::span<const NamedArray> arrays) {
  nlohmann::json decl = nlohmann::json::array();
  for (const auto& a : arrays) decl.push_back({{"name", a.name}, {"len", a.data.size()}});
  meta["arrays"] = std::move(decl);
  const std::string header = meta.dump();

  std::string out;
  out += "EEML";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& a : arrays)
    for (double d : a.data) put_f64(out, d);

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("checkpoint write failed: " + path.string());
}

struct Container {
  nlohmann::json meta;
  std::map<std::string, std::vector<double>> arrays;
};

inline Container read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DependencyError("missing checkpoint: " + path.string());
  Reader r;
  r.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

  r.need(4, "magic");
  if (r.bytes.compare(0, 4, "EEML") != 0)
    throw CheckpointError("not an EEML checkpoint: " + path.string());
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + "): " +
                          path.string());
  const std::uint32_t json_len = r.u32("metadata length");
  r.need(json_len, "metadata");
  Container c;
  try {
    c.meta = nlohmann::json::parse(r.bytes.substr(r.pos, json_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint metadata: " + std::string(e.what()));
  }
  r.pos += json_len;

  if (!c.meta.contains("arrays") || !c.meta["arrays"].is_array())
    throw CheckpointError("checkpoint metadata lacks array declarations: " + path.string());
  for (const auto& decl : c.meta["arrays"]) {
    const std::string name = decl.at("name").get<std::string>();
    const std::size_t len = decl.at("len").get<std::size_t>();
    std::vector<double> arr(len);
    for (std::size_t i = 0; i < len; ++i) arr[i] = r.f64(name.c_str());
    c.arrays[name] = std::move(arr);
  }
  return c;
}

inline nlohmann::json net_meta(const NetSpec& spec) {
  return {{"layer_sizes", spec.layer_sizes}, {"activation", to_string(spec.activation)}};
}

inline NetSpec net_from_meta(const nlohmann::json& j) {
  NetSpec spec;
  spec.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  spec.activation = activation_from_string(j.at("activation").get<std::string>());
  spec.validate();
  return spec;
}

}  // namespace ckpt

inline void save_param_vector(const std::filesystem::path& path, const ParamVector& pv,
                              const std::string& config_hash = {}, std::uint64_t seed = 0) {
  pv.validate();
  nlohmann::json meta{{"kind", "param_vector"},
                      {"net", ckpt::net_meta(pv.spec)},
                      {"config_hash", config_hash},
                      {"seed", seed}};
  const ckpt::NamedArray arr{"values", pv.values};
  ckpt::write_container(path, std::move(meta), std::span(&arr, 1));
}

inline ParamVector load_param_vector(const std::filesystem::path& path) {
  ckpt::Container c = ckpt::read_container(path);
  if (c.meta.value("kind", "") != "param_vector")
    throw CheckpointError("checkpoint kind mismatch (wanted param_vector): " + path.string());
  ParamVector pv{ckpt::net_from_meta(c.meta.at("net")), std::move(c.arrays.at("values"))};
  if (static_cast<int>(pv.values.size()) != pv.spec.param_count())
    throw CheckpointError("checkpoint parameter count does not match its NetSpec: " +
                          path.string());
  return pv;
}

inline void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model,
                               const std::string& config_hash = {}) {
  if (model.k < 1 || model.centers.empty())
    throw std::invalid_argument("save_cluster_model: empty model");
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(model.k) * model.dim());
  for (const auto& c : model.centers) flat.insert(flat.end(), c.begin(), c.end());
  nlohmann::json meta{{"kind", "cluster_model"}, {"k", model.k},      {"dim", model.dim()},
                      {"seed", model.seed},      {"inertia", model.inertia},
                      {"iters_run", model.iters_run}, {"config_hash", config_hash}};
  const ckpt::NamedArray arr{"centers", flat};
  ckpt::write_container(path, std::move(meta), std::span(&arr, 1));
}

inline ClusterModel load_cluster_model(const std::filesystem::path& path) {
  ckpt::Container c = ckpt::read_container(path);
  if (c.meta.value("kind", "") != "cluster_model")
    throw CheckpointError("checkpoint kind mismatch (wanted cluster_model): " + path.string());
  ClusterModel model;
  model.k = c.meta.at("k").get<int>();
  const int dim = c.meta.at("dim").get<int>();
  model.seed = c.meta.at("seed").get<std::uint64_t>();
  model.inertia = c.meta.at("inertia").get<double>();
  model.iters_run = c.meta.at("iters_run").get<int>();
  const auto& flat = c.arrays.at("centers");
  if (static_cast<int>(flat.size()) != model.k * dim)
    throw CheckpointError("cluster centers array has wrong length: " + path.string());
  for (int k = 0; k < model.k; ++k)
    model.centers.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(k) * dim,
                               flat.begin() + static_cast<std::ptrdiff_t>(k + 1) * dim);
  return model;
}

inline void save_ensemble(const std::filesystem::path& path, const Ensemble& ens) {
  ens.validate();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(ens.cluster.k) * ens.cluster.dim());
  for (const auto& c : ens.cluster.centers) flat.insert(flat.end(), c.begin(), c.end());

  nlohmann::json meta{{"kind", "ensemble"},
                      {"net", ckpt::net_meta(ens.experts.front().spec)},
                      {"k", ens.k()},
                      {"cluster",
                       {{"dim", ens.cluster.dim()},
                        {"seed", ens.cluster.seed},
                        {"inertia", ens.cluster.inertia},
                        {"iters_run", ens.cluster.iters_run}}},
                      {"pretrain_seed", ens.provenance.pretrain_seed},
                      {"config_hash", ens.provenance.config_hash}};
  std::vector<ckpt::NamedArray> arrays;
  for (int j = 0; j < ens.k(); ++j)
    arrays.push_back({"expert_" + std::to_string(j), ens.experts[j].values});
  arrays.push_back({"centers", flat});
  ckpt::write_container(path, std::move(meta), arrays);
}

inline Ensemble load_ensemble(const std::filesystem::path& path) {
  ckpt::Container c = ckpt::read_container(path);
  if (c.meta.value("kind", "") != "ensemble")
    throw CheckpointError("checkpoint kind mismatch (wanted ensemble): " + path.string());
  Ensemble ens;
  const NetSpec spec = ckpt::net_from_meta(c.meta.at("net"));
  const int K = c.meta.at("k").get<int>();
  for (int j = 0; j < K; ++j) {
    auto it = c.arrays.find("expert_" + std::to_string(j));
    if (it == c.arrays.end())
      throw CheckpointError("ensemble checkpoint missing expert array " + std::to_string(j));
    ens.experts.push_back(ParamVector{spec, std::move(it->second)});
  }
  const auto& cj = c.meta.at("cluster");
  ens.cluster.k = K;
  const int dim = cj.at("dim").get<int>();
  ens.cluster.seed = cj.at("seed").get<std::uint64_t>();
  ens.cluster.inertia = cj.at("inertia").get<double>();
  ens.cluster.iters_run = cj.at("iters_run").get<int>();
  const auto& flat = c.arrays.at("centers");
  if (static_cast<int>(flat.size()) != K * dim)
    throw CheckpointError("cluster centers array has wrong length: " + path.string());
  for (int k = 0; k < K; ++k)
    ens.cluster.centers.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(k) * dim,
                                     flat.begin() + static_cast<std::ptrdiff_t>(k + 1) * dim);
  ens.provenance.pretrain_seed = c.meta.value("pretrain_seed", std::uint64_t{0});
  ens.provenance.config_hash = c.meta.value("config_hash", "");
  ens.validate();
  return ens;
}

}  // namespace eeml
