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

#pragma once

#include <filesystem>

#include <json.hpp>

#include <xdrec/corpus.h>
#include <xdrec/model.h>

namespace xdrec {

nlohmann::json hyperToJson(const HyperParams& hp);
/// Missing keys keep the value from `base`; unknown keys throw ConfigError.
HyperParams hyperFromJson(const nlohmann::json& j, HyperParams base = {});

/// Order-sensitive digest of the user and item id tables.
std::string mapsFingerprint(const IndexMaps& maps);

/// Versioned JSON container holding hyperparameters, the ablation, every
/// parameter with its shape, and optionally the optimizer moments.
void saveCheckpoint(const std::filesystem::path& path, const ModelState& state,
                    const IndexMaps& maps, bool includeOptimizer = true);

/// Throws ShapeError when the checkpoint was built for different index maps
/// or any stored shape disagrees with the hyperparameters.
ModelState loadCheckpoint(const std::filesystem::path& path,
                          const IndexMaps& maps);

} // namespace xdrec
