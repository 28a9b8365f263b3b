#pragma once

#include "json.hpp"
#include "lwta/cli.hpp"

namespace lwta::cli {

nlohmann::json manifest_json(const RunManifest& manifest, const nlohmann::json& config);

}  // namespace lwta::cli
