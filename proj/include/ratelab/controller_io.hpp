#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ratelab/controller.hpp"

namespace ratelab {

inline constexpr int kWeightsFormatVersion = 1;

namespace detail {

using TensorRef = std::pair<std::string, Mat*>;
using VectorRef = std::pair<std::string, Vec*>;

inline void collect_refs(ControllerWeights& w, std::vector<TensorRef>& mats,
                         std::vector<VectorRef>& vecs) {
  auto mlp = [&](const std::string& name, MlpWeights& m) {
    mats.push_back({name + ".w1", &m.w1});
    vecs.push_back({name + ".b1", &m.b1});
    mats.push_back({name + ".w2", &m.w2});
    vecs.push_back({name + ".b2", &m.b2});
  };
  auto gru = [&](const std::string& name, GruWeights& g) {
    mats.push_back({name + ".wz", &g.wz});
    mats.push_back({name + ".uz", &g.uz});
    vecs.push_back({name + ".bz", &g.bz});
    mats.push_back({name + ".wr", &g.wr});
    mats.push_back({name + ".ur", &g.ur});
    vecs.push_back({name + ".br", &g.br});
    mats.push_back({name + ".wh", &g.wh});
    mats.push_back({name + ".uh", &g.uh});
    vecs.push_back({name + ".bh", &g.bh});
  };
  mlp("embed_b", w.embed_b);
  mlp("embed_c", w.embed_c);
  gru("gru_b", w.gru_b);
  gru("gru_c", w.gru_c);
  mlp("gate", w.gate);
  vecs.push_back({"head.w", &w.head_w});
}

}  // namespace detail

inline void save_weights(const ControllerWeights& weights, const std::string& path,
                         std::uint64_t creation_seed = 0) {
  ControllerWeights w = weights;
  std::vector<detail::TensorRef> mats;
  std::vector<detail::VectorRef> vecs;
  detail::collect_refs(w, mats, vecs);

  nlohmann::json shapes, tensors;
  for (const auto& [name, m] : mats) {
    shapes[name] = {m->rows, m->cols};
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m->rows; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t c = 0; c < m->cols; ++c) row.push_back((*m)(r, c));
      rows.push_back(std::move(row));
    }
    tensors[name] = std::move(rows);
  }
  for (const auto& [name, v] : vecs) {
    shapes[name] = {v->size()};
    tensors[name] = *v;
  }
  shapes["head.b"] = nlohmann::json::array();
  tensors["head.b"] = weights.head_b;

  nlohmann::json doc;
  doc["format_version"] = kWeightsFormatVersion;
  doc["seed"] = creation_seed;
  doc["delta_max"] = weights.delta_max;
  doc["shapes"] = std::move(shapes);
  doc["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write weights file: " + path);
  out << doc.dump(1) << "\n";
}

inline ControllerWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed weights file: " + e.what());
  }

  if (!doc.contains("format_version") || doc["format_version"].get<int>() != kWeightsFormatVersion) {
    throw std::runtime_error(path + ": unsupported weights format_version");
  }
  if (!doc.contains("tensors")) throw std::runtime_error(path + ": missing 'tensors'");

  ControllerWeights w;
  w.delta_max = doc.at("delta_max").get<double>();
  if (!(w.delta_max > 0.0) || !std::isfinite(w.delta_max)) {
    throw std::runtime_error(path + ": delta_max must be a positive finite number");
  }

  std::vector<detail::TensorRef> mats;
  std::vector<detail::VectorRef> vecs;
  detail::collect_refs(w, mats, vecs);
  const auto& tensors = doc["tensors"];

  auto require = [&](const std::string& name) -> const nlohmann::json& {
    if (!tensors.contains(name)) {
      throw std::runtime_error(path + ": missing tensor '" + name + "'");
    }
    return tensors[name];
  };
  auto check_finite = [&](const std::string& name, double x) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(path + ": tensor '" + name + "' contains a non-finite value");
    }
    return x;
  };

  for (auto& [name, m] : mats) {
    const auto& j = require(name);
    if (!j.is_array() || j.size() != m->rows) {
      throw std::runtime_error(path + ": tensor '" + name + "' has wrong shape, expected [" +
                               std::to_string(m->rows) + "," + std::to_string(m->cols) + "]");
    }
    for (std::size_t r = 0; r < m->rows; ++r) {
      const auto& row = j[r];
      if (!row.is_array() || row.size() != m->cols) {
        throw std::runtime_error(path + ": tensor '" + name + "' has wrong shape, expected [" +
                                 std::to_string(m->rows) + "," + std::to_string(m->cols) + "]");
      }
      for (std::size_t c = 0; c < m->cols; ++c) {
        (*m)(r, c) = check_finite(name, row[c].get<double>());
      }
    }
  }
  for (auto& [name, v] : vecs) {
    const auto& j = require(name);
    if (!j.is_array() || j.size() != v->size()) {
      throw std::runtime_error(path + ": tensor '" + name + "' has wrong shape, expected [" +
                               std::to_string(v->size()) + "]");
    }
    for (std::size_t i = 0; i < v->size(); ++i) {
      (*v)[i] = check_finite(name, j[i].get<double>());
    }
  }
  w.head_b = check_finite("head.b", require("head.b").get<double>());
  return w;
}

}  // namespace ratelab
