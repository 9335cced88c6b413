// Copyright 2026 The uasb Authors.
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

#include "uasb/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "uasb/errors.h"

namespace uasb::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v, const char* want) {
  throw ConfigError("config key '" + key + "': '" + v + "' is not " + want);
}

template <typename T>
T parse_uint(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

struct Field {
  std::function<void(const std::string& key, const std::string& value)> set;
  std::function<std::string()> get;
};

template <typename T>
Field uint_field(T& ref) {
  return {[&ref](const std::string& k, const std::string& v) { ref = parse_uint<T>(k, v); },
          [&ref] { return std::to_string(ref); }};
}
Field real_field(double& ref) {
  return {[&ref](const std::string& k, const std::string& v) { ref = parse_real(k, v); }, [&ref] { return fmt(ref); }};
}
Field float_field(float& ref) {
  return {[&ref](const std::string& k, const std::string& v) { ref = static_cast<float>(parse_real(k, v)); },
          [&ref] { return fmt(ref); }};
}
Field bool_field(bool& ref) {
  return {[&ref](const std::string& k, const std::string& v) { ref = parse_bool(k, v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

std::map<std::string, Field> fields(RunSettings& s) {
  std::map<std::string, Field> f;
  auto& w = s.world;
  f["world.vocab_size"] = uint_field(w.vocab_size);
  f["world.silence"] = bool_field(w.silence);
  f["world.feature_dim"] = uint_field(w.feature_dim);
  f["world.sigma"] = real_field(w.sigma);
  f["world.dur_min"] = uint_field(w.dur_min);
  f["world.dur_max"] = uint_field(w.dur_max);
  f["world.min_len"] = uint_field(w.min_len);
  f["world.max_len"] = uint_field(w.max_len);
  f["world.self_cap"] = real_field(w.self_cap);
  f["world.radius"] = real_field(w.radius);
  f["world.separation"] = real_field(w.separation);
  f["world.seed"] = uint_field(w.seed);

  f["data.n_speech"] = uint_field(s.n_speech);
  f["data.n_text"] = uint_field(s.n_text);
  f["data.n_valid"] = uint_field(s.n_valid);
  f["data.seed"] = uint_field(s.data_seed);

  auto& g = s.uasr.gen;
  f["gen.hidden_dim"] = uint_field(g.hidden_dim);
  f["gen.kernel_width"] = uint_field(g.kernel_width);
  f["gen.stride"] = uint_field(g.stride);
  f["gen.layers"] = uint_field(g.layers);
  auto& d = s.uasr.disc;
  f["disc.channels"] = uint_field(d.channels);
  f["disc.kernel_width"] = uint_field(d.kernel_width);
  f["disc.layers"] = uint_field(d.layers);
  auto& hp = s.uasr.hp;
  f["gan.lambda"] = real_field(hp.lambda_gp);
  f["gan.gamma"] = real_field(hp.gamma_sp);
  f["gan.eta"] = real_field(hp.eta_pd);
  f["gan.delta"] = real_field(hp.delta_ss);
  f["gan.lr_g"] = real_field(hp.lr_g);
  f["gan.lr_c"] = real_field(hp.lr_c);
  f["gan.steps"] = uint_field(hp.steps);
  f["gan.batch_size"] = uint_field(hp.batch_size);
  f["gan.label_smooth"] = real_field(hp.label_smooth_eps);
  f["gan.seed"] = uint_field(hp.seed);
  f["gan.literal_generator_loss"] = bool_field(hp.literal_generator_loss);
  f["gan.merge_runs"] = bool_field(hp.merge_runs);
  f["gan.adam"] = bool_field(hp.adam);
  f["gan.eval_every"] = uint_field(s.uasr.eval_every);
  f["gan.aux_clusters"] = uint_field(s.uasr.aux_clusters);
  f["gan.restarts"] = uint_field(s.restarts);

  f["kmeans.k"] = uint_field(s.kmeans.k);
  f["kmeans.max_iters"] = uint_field(s.kmeans.max_iters);
  f["kmeans.seed"] = uint_field(s.kmeans.seed);
  f["kmeans.aux_proj_dim"] = uint_field(s.aux_proj_dim);
  f["kmeans.aux_noise"] = real_field(s.aux_noise);

  f["text.embed_dim"] = uint_field(s.text.embed_dim);
  f["text.layers"] = uint_field(s.text.layers);
  f["text.output_dim"] = uint_field(s.text.output_dim);
  f["text.kernel_width"] = uint_field(s.text.kernel_width);
  f["text.seed"] = uint_field(s.text_seed);
  f["pretrain.steps"] = uint_field(s.pretrain.steps);
  f["pretrain.batch_size"] = uint_field(s.pretrain.batch_size);
  f["pretrain.mask_rate"] = real_field(s.pretrain.mask_rate);
  f["pretrain.mean_span"] = real_field(s.pretrain.mean_span);
  f["pretrain.lr"] = real_field(s.pretrain.lr);
  f["pretrain.seed"] = uint_field(s.pretrain.seed);

  f["fusion.gumbel"] = bool_field(s.assign.gumbel);
  f["fusion.temperature"] = float_field(s.assign.temperature);
  f["fusion.seed"] = uint_field(s.assign.seed);
  f["fusion.collapse_runs"] = bool_field(s.assign.collapse_runs);

  f["probe.epochs"] = uint_field(s.probe.epochs);
  f["probe.lr"] = real_field(s.probe.lr);
  f["probe.batch_size"] = uint_field(s.probe.batch_size);
  f["probe.seeds"] = {[&s](const std::string& k, const std::string& v) {
                        s.probe_seeds.clear();
                        std::stringstream in(v);
                        std::string item;
                        while (std::getline(in, item, ',')) s.probe_seeds.push_back(parse_uint<std::uint64_t>(k, trim(item)));
                        if (s.probe_seeds.empty()) bad_value(k, v, "a comma-separated seed list");
                      },
                      [&s] {
                        std::string out;
                        for (auto x : s.probe_seeds) out += (out.empty() ? "" : ",") + std::to_string(x);
                        return out;
                      }};
  f["intent.n_classes"] = uint_field(s.intent_classes);
  f["intent.n_items"] = uint_field(s.intent_items);
  f["intent.seed"] = uint_field(s.intent_seed);
  f["tagging.n_items"] = uint_field(s.tagging_items);
  f["tagging.seed"] = uint_field(s.tagging_seed);
  f["frame_probe.n_items"] = uint_field(s.frame_items);
  return f;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(n) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(source + ":" + std::to_string(n) + ": empty key or value");
    if (cfg.values_.count(key)) throw ConfigError(source + ":" + std::to_string(n) + ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::kOpen, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

RunSettings resolve(const RunConfig& cfg) {
  RunSettings s;
  auto f = fields(s);
  for (const auto& [key, value] : cfg.values()) {
    auto it = f.find(key);
    if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(key, value);
  }
  s.uasr.gen.input_dim = s.world.feature_dim;
  s.uasr.gen.vocab_size = s.world.vocab_size;
  s.uasr.disc.vocab_size = s.world.vocab_size;
  s.text.vocab_size = s.world.vocab_size;
  s.uasr.hp.validate();
  if (s.restarts == 0) throw ConfigError("gan.restarts must be at least 1");
  if (s.uasr.hp.delta_ss > 0 && s.uasr.aux_clusters == 0)
    throw ConfigError("gan.delta > 0 needs gan.aux_clusters > 0");
  return s;
}

std::string dump(const RunSettings& s) {
  RunSettings copy = s;
  std::string out;
  for (const auto& [key, field] : fields(copy)) out += key + " = " + field.get() + "\n";
  return out;
}

std::vector<std::string> known_keys() {
  RunSettings s;
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields(s)) keys.push_back(key);
  return keys;
}

}  // namespace uasb::config
