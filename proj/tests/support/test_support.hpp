#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fmt/format.h"
#include "kpa/corpus.hpp"
#include "kpa/rng.hpp"

namespace kpa::testing {

inline std::filesystem::path source_dir() { return KPA_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return source_dir() / "tests" / "fixtures" / name; }
inline std::filesystem::path preset(const std::string& name) {
  return source_dir() / "configs" / "presets" / (name + ".ini");
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "kpa") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("{}-{}-{}", tag, static_cast<long>(::getpid()), counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline ArgKPRecord make_record(std::string id, std::string topic, int label, std::string argument = "",
                               std::string key_point = "", int stance = 1) {
  ArgKPRecord r;
  r.pair_id = std::move(id);
  r.topic = std::move(topic);
  r.argument = argument.empty() ? "argument for " + r.pair_id : std::move(argument);
  r.key_point = key_point.empty() ? "key point for " + r.pair_id : std::move(key_point);
  r.stance = stance;
  r.label = label;
  return r;
}

/// Random dataset: `topics` topics with 1..max_per_topic records each.
inline std::vector<ArgKPRecord> synthetic_records(Rng& rng, std::size_t topics, std::size_t max_per_topic) {
  std::vector<ArgKPRecord> out;
  std::size_t id = 0;
  for (std::size_t t = 0; t < topics; ++t) {
    const std::size_t n = 1 + rng.below(max_per_topic);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(make_record(fmt::format("id{}", id++), fmt::format("topic {}", t),
                                rng.below(5) == 0 ? 1 : 0, "", "", rng.below(2) ? 1 : -1));
    }
  }
  Rng order(rng.next());
  order.shuffle(std::span<ArgKPRecord>(out));
  return out;
}

}  // namespace kpa::testing
