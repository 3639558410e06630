// Copyright 2026 The SDGD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SDGD_IO_HPP_
#define SDGD_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdgd/planner.hpp"

namespace sdgd {

inline constexpr const char* kCodeVersion = "0.1.0";

// Shortest-round-trip decimal rendering; all CSV/JSON numbers go through
// this so byte-identical reruns only require identical doubles.
std::string format_double(double v);

// FNV-1a over the canonical config dump and the seed.
std::uint64_t fnv1a(const std::string& data);
std::string config_hash(const std::string& canonical_config, std::uint64_t seed);
std::uint64_t file_checksum(const std::filesystem::path& path);

// CSV with a mandatory header row plus a sidecar JSON (path + ".meta.json")
// recording config hash, seed and code version.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header,
            const std::string& config_hash, std::uint64_t seed);
  void row(const std::vector<std::string>& cells);
  void close();  // flush + write sidecar; called by the destructor
  ~CsvWriter();

 private:
  std::filesystem::path path_;
  std::size_t n_cols_;
  std::string config_hash_;
  std::uint64_t seed_;
  std::string buffer_;
  bool closed_ = false;
};

void write_text_file(const std::filesystem::path& path, const std::string& text);

// EpisodeRecord JSON-lines serialization; the field layout is documented in
// docs/episode_record_schema.json.
std::string episode_record_to_json(const EpisodeRecord& rec);
void write_episode_records(const std::filesystem::path& path,
                           const std::vector<EpisodeRecord>& records,
                           const std::string& config_hash, std::uint64_t seed);

}  // namespace sdgd

#endif  // SDGD_IO_HPP_
