#include "runconfig.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

namespace mecd {

namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Canonical key table; serialization follows this order.
constexpr std::array<KeyDefault, 46> kDefaults{{
    {"model.d_model", "64"},
    {"model.encoder_layers", "2"},
    {"model.decoder_layers", "2"},
    {"model.attention_heads", "4"},
    {"model.ffn_dim", "128"},
    {"model.dropout", "0.1"},
    {"model.max_caption_len", "50"},
    {"model.max_events", "16"},
    {"model.vocab_size", "8192"},
    {"train.epochs", "20"},
    {"train.learning_rate", "16e-5"},
    {"train.warmup_epochs", "3"},
    {"train.seed", "2023"},
    {"train.seeds", "2023,2024,2025"},
    {"train.batch_size", "4"},
    {"train.similarity_gate", "noncausal"},
    {"train.weight_decay", "0.01"},
    {"train.warm_start_epochs", "0"},
    {"loss.lambda_C", "1.0"},
    {"loss.lambda_R", "4.0"},
    {"loss.lambda_V", "0.25"},
    {"loss.lambda_S", "0.05"},
    {"causal.front_door", "on"},
    {"causal.counterfactual", "on"},
    {"synth.num_videos", "1000"},
    {"synth.events_min", "5"},
    {"synth.events_max", "5"},
    {"synth.feature_dim", "32"},
    {"synth.frames_per_event", "8"},
    {"synth.vocab_size", "64"},
    {"synth.causal_rate", "0.45"},
    {"synth.bridge_rate", "0.5"},
    {"synth.illusory_rate", "0.5"},
    {"synth.noise_sigma", "0.1"},
    {"synth.seed", "7"},
    {"synth.train_fraction", "0.8"},
    {"eval.split", "test"},
    {"baseline.mode", "all_noncausal"},
    {"baseline.p", "0.5"},
    {"baseline.seed", "2023"},
    {"perturb.mode", "flip_labels"},
    {"perturb.param", "0"},
    {"perturb.seed", "2023"},
    {"perturb.split", "train"},
    {"gradcheck.epsilon", "1e-5"},
    {"gradcheck.coordinates", "200"},
}};

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& kv : kDefaults) values_[kv.key] = kv.value;
}

bool RunConfig::is_known_key(const std::string& key) {
  return std::any_of(kDefaults.begin(), kDefaults.end(),
                     [&](const KeyDefault& kv) { return key == kv.key; });
}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> out;
  for (const auto& kv : kDefaults) out.push_back(kv.key);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known_key(key)) fail(Status::Usage, "unknown config key \"" + key + "\"");
  values_[key] = trim(value);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(Status::Usage, "unknown config key \"" + key + "\"");
  return it->second;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Status::Io, "cannot open config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(Status::Usage, path.string() + ":" + std::to_string(line_no) +
                              ": expected \"key = value\"");
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& kv : kDefaults) {
    out += kv.key;
    out += " = ";
    out += values_.at(kv.key);
    out += "\n";
  }
  return out;
}

void RunConfig::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Status::Io, "cannot write " + path.string());
  out << serialize();
}

int RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoi(get(key));
  } catch (const std::exception&) {
    fail(Status::Usage, "config key " + key + " expects an integer, got \"" + get(key) + "\"");
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    fail(Status::Usage, "config key " + key + " expects a number, got \"" + get(key) + "\"");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  fail(Status::Usage, "config key " + key + " expects on/off, got \"" + v + "\"");
}

uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    fail(Status::Usage, "config key " + key + " expects an unsigned integer, got \"" + get(key) +
                            "\"");
  }
}

std::vector<uint64_t> RunConfig::get_u64_list(const std::string& key) const {
  std::vector<uint64_t> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      fail(Status::Usage, "config key " + key + " expects comma-separated integers");
    }
  }
  return out;
}

}  // namespace mecd
