#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gstcn/model.hpp"

namespace gstcn {

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["past_len"] = c.past_len;
  j["future_len"] = c.future_len;
  j["coord_channels"] = c.coord_channels;
  j["embed_channels"] = c.embed_channels;
  j["gcn_layers"] = c.gcn_layers;
  j["tde_layers"] = c.tde_layers;
  j["tde_kernel"] = c.tde_kernel;
  j["tde_padding"] = c.tde_padding;
  j["gru_hidden"] = c.gru_hidden;
  j["dropout"] = c.dropout;
  j["input_scale"] = c.input_scale;
  j["residual_head"] = c.residual_head;
  j["mu_scale"] = c.mu_scale;
  j["adjacency"] = to_string(c.scheme);
  j["activation"] = to_string(c.activation);
  j["variant"] = to_string(c.variant);
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.past_len = j.value("past_len", c.past_len);
  c.future_len = j.value("future_len", c.future_len);
  c.coord_channels = j.value("coord_channels", c.coord_channels);
  c.embed_channels = j.value("embed_channels", c.embed_channels);
  c.gcn_layers = j.value("gcn_layers", c.gcn_layers);
  c.tde_layers = j.value("tde_layers", c.tde_layers);
  c.tde_kernel = j.value("tde_kernel", c.tde_kernel);
  c.tde_padding = j.value("tde_padding", c.tde_padding);
  c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.input_scale = j.value("input_scale", c.input_scale);
  c.residual_head = j.value("residual_head", c.residual_head);
  c.mu_scale = j.value("mu_scale", c.mu_scale);
  if (j.contains("adjacency")) c.scheme = adjacency_scheme_from_string(j["adjacency"]);
  if (j.contains("activation")) c.activation = activation_from_string(j["activation"]);
  if (j.contains("variant")) c.variant = model_variant_from_string(j["variant"]);
  return c;
}

template <typename T>
struct Checkpoint {
  Parameters<T> params;
  ModelConfig config;
  std::uint64_t seed = 0;
};

// Versioned JSON manifest: name, shape and row-major values per tensor plus a
// config echo and the training seed. Values are stored as JSON numbers, which
// round-trip float32 (and float64) bit-exactly.
template <typename T>
void save_checkpoint(std::ostream& out, const Parameters<T>& params, const ModelConfig& cfg,
                     std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["dtype"] = sizeof(T) == 4 ? "float32" : "float64";
  j["seed"] = seed;
  j["config"] = model_config_to_json(cfg);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& [name, t] : params.items) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    nlohmann::ordered_json vals = nlohmann::ordered_json::array();
    for (const T& v : t.values()) vals.push_back(static_cast<double>(v));
    entry["values"] = std::move(vals);
    tensors.push_back(std::move(entry));
  }
  j["tensors"] = std::move(tensors);
  out << j.dump() << '\n';
}

template <typename T>
Checkpoint<T> load_checkpoint(std::istream& in) {
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format_version", 0) != 1)
    throw std::runtime_error("checkpoint: unsupported format version");
  Checkpoint<T> ck;
  ck.config = model_config_from_json(j.at("config"));
  ck.seed = j.value("seed", 0ull);
  for (const auto& entry : j.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    auto dvals = entry.at("values").get<std::vector<double>>();
    std::vector<T> vals(dvals.begin(), dvals.end());
    ck.params.add(entry.at("name").get<std::string>(),
                  Tensor<T>(std::move(shape), std::move(vals), true));
  }
  return ck;
}

}  // namespace gstcn
