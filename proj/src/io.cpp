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

#include "sdgd/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sdgd {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const std::string& canonical_config, std::uint64_t seed) {
  const std::uint64_t h = fnv1a(canonical_config + "\nseed=" + std::to_string(seed));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("io: cannot open " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return fnv1a(buf.str());
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     std::vector<std::string> header,
                     const std::string& config_hash, std::uint64_t seed)
    : path_(path), n_cols_(header.size()), config_hash_(config_hash), seed_(seed) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += header[i];
  }
  buffer_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_cols_) throw std::invalid_argument("io: csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += cells[i];
  }
  buffer_ += '\n';
}

void CsvWriter::close() {
  if (closed_) return;
  closed_ = true;
  write_text_file(path_, buffer_);
  nlohmann::json j{{"config_hash", config_hash_},
                   {"seed", seed_},
                   {"code_version", kCodeVersion}};
  write_text_file(path_.string() + ".meta.json", j.dump(2) + "\n");
}

CsvWriter::~CsvWriter() {
  try {
    close();
  } catch (...) {
    // destructor must not throw; close() explicitly to observe errors
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("io: cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("io: write failed for " + path.string());
}

namespace {

nlohmann::json vec_json(const std::vector<double>& v) {
  nlohmann::json j = nlohmann::json::array();
  for (double x : v) j.push_back(x);
  return j;
}

}  // namespace

std::string episode_record_to_json(const EpisodeRecord& rec) {
  nlohmann::json j;
  j["seed"] = rec.seed;
  j["total_reward"] = rec.total_reward;
  j["total_cost"] = rec.total_cost;
  j["segment_costs"] = vec_json(rec.segment_costs);
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : rec.episode.states) states.push_back(vec_json(s));
  nlohmann::json actions = nlohmann::json::array();
  for (const auto& a : rec.episode.actions) actions.push_back(vec_json(a));
  j["episode"] = {{"states", states},
                  {"actions", actions},
                  {"rewards", vec_json(rec.episode.rewards)},
                  {"costs", vec_json(rec.episode.costs)}};
  nlohmann::json replans = nlohmann::json::array();
  for (const auto& r : rec.replans) {
    replans.push_back({{"t", r.t},
                       {"active_limit", r.active_limit},
                       {"remaining", r.remaining},
                       {"cond_limit", r.cond_limit},
                       {"plan", vec_json(r.plan)},
                       {"realized_reward", r.realized_reward},
                       {"realized_cost", r.realized_cost},
                       {"clip_events", r.clip_events}});
  }
  j["replans"] = replans;
  return j.dump();
}

void write_episode_records(const std::filesystem::path& path,
                           const std::vector<EpisodeRecord>& records,
                           const std::string& config_hash, std::uint64_t seed) {
  std::string text;
  for (const auto& rec : records) {
    text += episode_record_to_json(rec);
    text += '\n';
  }
  write_text_file(path, text);
  nlohmann::json j{{"config_hash", config_hash},
                   {"seed", seed},
                   {"code_version", kCodeVersion},
                   {"n_records", records.size()}};
  write_text_file(path.string() + ".meta.json", j.dump(2) + "\n");
}

}  // namespace sdgd
