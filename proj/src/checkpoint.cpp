/*
 * Copyright 2026 The xdrec Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <xdrec/checkpoint.h>

#include <fstream>

#include <xdrec/errors.h>
#include <xdrec/hashing.h>

namespace xdrec {

using json = nlohmann::json;

namespace {

constexpr const char* kFormat = "xdrec-checkpoint";
constexpr int kVersion = 1;

json matrixToJson(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrixFromJson(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 ||
      static_cast<std::size_t>(rows * cols) != data.size()) {
    throw FormatError("checkpoint matrix has inconsistent shape");
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

std::string shapeOf(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

} // namespace

json hyperToJson(const HyperParams& hp) {
  return {{"id_dim", hp.idDim},
          {"inner_dim", hp.innerDim},
          {"agnostic_dim", hp.agnosticDim},
          {"contrastive_dim", hp.contrastiveDim},
          {"model_dim", hp.modelDim},
          {"text_dim", hp.textDim},
          {"temperature", hp.temperature},
          {"dropout", hp.dropout},
          {"max_seq_len", hp.maxSeqLen},
          {"leaky_slope", hp.leakySlope},
          {"init_scale", hp.initScale},
          {"contrastive_catalog_limit", hp.contrastiveCatalogLimit}};
}

HyperParams hyperFromJson(const json& j, HyperParams hp) {
  if (!j.is_object()) {
    throw ConfigError("hyperparameters must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "id_dim") {
        hp.idDim = value.get<std::size_t>();
      } else if (key == "inner_dim") {
        hp.innerDim = value.get<std::size_t>();
      } else if (key == "agnostic_dim") {
        hp.agnosticDim = value.get<std::size_t>();
      } else if (key == "contrastive_dim") {
        hp.contrastiveDim = value.get<std::size_t>();
      } else if (key == "model_dim") {
        hp.modelDim = value.get<std::size_t>();
      } else if (key == "text_dim") {
        hp.textDim = value.get<std::size_t>();
      } else if (key == "temperature") {
        hp.temperature = value.get<double>();
      } else if (key == "dropout") {
        hp.dropout = value.get<double>();
      } else if (key == "max_seq_len") {
        hp.maxSeqLen = value.get<std::size_t>();
      } else if (key == "leaky_slope") {
        hp.leakySlope = value.get<double>();
      } else if (key == "init_scale") {
        hp.initScale = value.get<double>();
      } else if (key == "contrastive_catalog_limit") {
        hp.contrastiveCatalogLimit = value.get<std::size_t>();
      } else {
        throw ConfigError("unknown hyperparameter '" + key + "'");
      }
    } catch (const json::exception&) {
      throw ConfigError("hyperparameter '" + key + "' has the wrong type");
    }
  }
  return hp;
}

std::string mapsFingerprint(const IndexMaps& maps) {
  std::string buf;
  for (const auto& u : maps.users()) {
    buf += u;
    buf += '\n';
  }
  for (Domain d : {Domain::Source, Domain::Target}) {
    buf += domainTag(d);
    buf += '\n';
    for (const auto& m : maps.items(d)) {
      buf += m;
      buf += '\n';
    }
  }
  return sha256Hex(buf);
}

void saveCheckpoint(const std::filesystem::path& path, const ModelState& state,
                    const IndexMaps& maps, bool includeOptimizer) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["hyper"] = hyperToJson(state.hyper);
  j["ablation"] = ablationKey(state.ablation);
  j["score_enriched"] = state.scoreEnriched;
  j["seed"] = state.seed;
  j["epoch"] = state.epoch;
  j["maps"] = {{"users", maps.numUsers()},
               {"source_items", maps.numItems(Domain::Source)},
               {"target_items", maps.numItems(Domain::Target)},
               {"fingerprint", mapsFingerprint(maps)}};
  j["num_subcategories"] = state.tables.subcategory.value.rows();
  json params = json::array();
  for (const Parameter* p : state.parameters()) {
    json e = matrixToJson(p->value);
    e["name"] = p->name;
    e["group"] = p->group == ParamGroup::Semantic ? "semantic" : "general";
    e["frozen"] = p->frozen;
    params.push_back(std::move(e));
  }
  j["parameters"] = std::move(params);
  if (includeOptimizer && state.optimizer) {
    json m = json::array();
    json v = json::array();
    for (const auto& x : state.optimizer->m) {
      m.push_back(matrixToJson(x));
    }
    for (const auto& x : state.optimizer->v) {
      v.push_back(matrixToJson(x));
    }
    j["optimizer"] = {{"steps", state.optimizer->steps}, {"m", m}, {"v", v}};
  }

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw IoError("cannot write checkpoint " + path.string());
    }
    out << j.dump() << '\n';
    if (!out) {
      throw IoError("failed writing checkpoint " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

ModelState loadCheckpoint(const std::filesystem::path& path,
                          const IndexMaps& maps) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read checkpoint " + path.string());
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw FormatError(path.string() + " is not a JSON checkpoint");
  }
  try {
    if (j.at("format") != kFormat || j.at("version") != kVersion) {
      throw FormatError(path.string() + ": unsupported checkpoint format");
    }
    const auto& mj = j.at("maps");
    if (mj.at("users").get<std::size_t>() != maps.numUsers() ||
        mj.at("source_items").get<std::size_t>() !=
          maps.numItems(Domain::Source) ||
        mj.at("target_items").get<std::size_t>() !=
          maps.numItems(Domain::Target) ||
        mj.at("fingerprint").get<std::string>() != mapsFingerprint(maps)) {
      throw ShapeError("checkpoint " + path.string() +
                       " was trained on a different corpus");
    }
    const HyperParams hp = hyperFromJson(j.at("hyper"));
    ModelState state = ModelState::init(
      hp, parseAblation(j.at("ablation").get<std::string>()), maps,
      j.at("num_subcategories").get<std::size_t>(),
      j.at("seed").get<std::uint64_t>());
    state.scoreEnriched = j.value("score_enriched", false);
    state.epoch = j.at("epoch").get<int>();

    auto params = state.parameters();
    const auto& stored = j.at("parameters");
    if (stored.size() != params.size()) {
      throw ShapeError("checkpoint holds " + std::to_string(stored.size()) +
                       " parameters, expected " +
                       std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& e = stored[i];
      if (e.at("name").get<std::string>() != params[i]->name) {
        throw ShapeError("checkpoint parameter " + std::to_string(i) +
                         " is '" + e.at("name").get<std::string>() +
                         "', expected '" + params[i]->name + "'");
      }
      Matrix value = matrixFromJson(e);
      if (value.rows() != params[i]->value.rows() ||
          value.cols() != params[i]->value.cols()) {
        throw ShapeError("parameter " + params[i]->name + " has shape " +
                         shapeOf(value) + ", expected " +
                         shapeOf(params[i]->value));
      }
      params[i]->value = std::move(value);
      params[i]->frozen = e.value("frozen", params[i]->frozen);
      params[i]->zeroGrad();
    }
    if (j.contains("optimizer")) {
      ModelState::OptimizerState opt;
      opt.steps = j["optimizer"].at("steps").get<std::int64_t>();
      for (const auto& x : j["optimizer"].at("m")) {
        opt.m.push_back(matrixFromJson(x));
      }
      for (const auto& x : j["optimizer"].at("v")) {
        opt.v.push_back(matrixFromJson(x));
      }
      state.optimizer = std::move(opt);
    }
    return state;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint (" + e.what() +
                      ")");
  }
}

} // namespace xdrec
