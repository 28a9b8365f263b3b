#include "manifest.hpp"

#include <chrono>
#include <ctime>

namespace lwta::cli {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json manifest_json(const RunManifest& m, const nlohmann::json& config) {
  return {
      {"command", m.command},
      {"arguments", m.arguments},
      {"config", config},
      {"seed", m.seed},
      {"library_version", m.library_version},
      {"dataset_fingerprint", m.dataset_fingerprint},
      {"started_at", m.started_at},
      {"finished_at", m.finished_at},
  };
}

}  // namespace lwta::cli
