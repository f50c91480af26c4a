#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spgrpo/errors.hpp"
#include "spgrpo_app/app.hpp"

namespace spgrpo::app {

using nlohmann::json;

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kPretrain: return "pretrain";
    case Mode::kCalibrate: return "calibrate";
    case Mode::kTrain: return "train";
    case Mode::kEval: return "eval";
    case Mode::kAudit: return "audit";
  }
  return "?";
}

Mode mode_from_string(const std::string& name) {
  for (auto m : {Mode::kPretrain, Mode::kCalibrate, Mode::kTrain, Mode::kEval, Mode::kAudit}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("mode: unknown mode '" + name +
                    "' (expected pretrain, calibrate, train, eval or audit)");
}

flow::FlowDims RunConfig::dims() const {
  flow::FlowDims d;
  d.frames = policy.frames;
  d.frame_dim = policy.frame_dim;
  d.num_classes = policy.num_classes;
  d.embed_dim = policy.embed_dim;
  return d;
}

CircleDataset RunConfig::dataset_spec() const {
  CircleDataset ds;
  ds.frames = policy.frames;
  ds.num_classes = policy.num_classes;
  ds.angular_velocity = dataset.angular_velocity;
  ds.jitter = dataset.jitter;
  return ds;
}

grpo::TrainConfig RunConfig::train_config() const {
  auto t = train;
  t.seed = seed;
  t.sde = sde;
  t.cerm = cerm;
  t.suite = rewards;
  return t;
}

void RunConfig::validate() const {
  if (policy.frames < 2) throw ConfigError("policy.frames must be >= 2");
  if (policy.frame_dim != 2) {
    throw ConfigError("policy.frame_dim must be 2 (the toy rewards are planar)");
  }
  if (policy.num_classes < 1) throw ConfigError("policy.num_classes must be >= 1");
  if (policy.hidden.empty()) throw ConfigError("policy.hidden needs at least one layer");
  for (auto h : policy.hidden) {
    if (h == 0) throw ConfigError("policy.hidden widths must be >= 1");
  }
  if (dataset.size < 1) throw ConfigError("dataset.size must be >= 1");
  if (!(dataset.jitter >= 0.0)) throw ConfigError("dataset.jitter must be >= 0");
  if (pretrain.batch_size < 1) throw ConfigError("pretrain.batch_size must be >= 1");
  if (!(pretrain.learning_rate >= 0.0)) throw ConfigError("pretrain.learning_rate must be >= 0");
  if (calibrate.steps < 1) throw ConfigError("calibrate.steps must be >= 1");
  if (calibrate.smoothing_window < 1) throw ConfigError("calibrate.smoothing_window must be >= 1");
  if (!(calibrate.fraction > 0.0 && calibrate.fraction <= 1.0)) {
    throw ConfigError("calibrate.fraction must lie in (0, 1]");
  }
  if (eval.samples_per_class < 2) throw ConfigError("eval.samples_per_class must be >= 2");
  if (mode == Mode::kAudit && audit.input.empty()) {
    throw ConfigError("audit.input is required in audit mode");
  }
  if (rewards.num_classes != policy.num_classes) {
    throw ConfigError("rewards.num_classes must equal policy.num_classes");
  }
  for (const auto& t : rewards.terms) {
    if (t.kind == rewards::TermKind::kCustom) {
      throw ConfigError("rewards.terms: custom terms cannot be declared in a config file");
    }
  }
  if (thresholds_file.empty()) {
    train_config().validate(dims());
  } else {
    auto t = train_config();
    t.cerm.thresholds.assign(rewards.size(), 0.0);
    t.validate(dims());
  }
}

namespace {

json to_json(const RunConfig& c) {
  json terms = json::array();
  for (const auto& t : c.rewards.terms) {
    terms.push_back({{"id", t.id}, {"stage", t.stage}, {"kind", rewards::to_string(t.kind)},
                     {"scale", t.scale}});
  }
  return {
      {"mode", to_string(c.mode)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"policy",
       {{"frames", c.policy.frames},
        {"frame_dim", c.policy.frame_dim},
        {"num_classes", c.policy.num_classes},
        {"embed_dim", c.policy.embed_dim},
        {"hidden", c.policy.hidden},
        {"checkpoint", c.policy.checkpoint}}},
      {"dataset",
       {{"size", c.dataset.size},
        {"angular_velocity", c.dataset.angular_velocity},
        {"jitter", c.dataset.jitter}}},
      {"pretrain",
       {{"steps", c.pretrain.steps},
        {"batch_size", c.pretrain.batch_size},
        {"learning_rate", c.pretrain.learning_rate}}},
      {"sde",
       {{"num_steps", c.sde.num_steps},
        {"eta", c.sde.eta},
        {"t_min", c.sde.t_min},
        {"seed", c.sde.seed}}},
      {"cerm",
       {{"alpha", c.cerm.alpha},
        {"beta", c.cerm.beta},
        {"thresholds", c.cerm.thresholds},
        {"thresholds_file", c.thresholds_file},
        {"weight_mode", cerm::to_string(c.cerm.weight_mode)},
        {"ema_decay", c.cerm.ema_decay}}},
      {"rewards", {{"num_classes", c.rewards.num_classes}, {"terms", terms}}},
      {"train",
       {{"group_size", c.train.group_size},
        {"clip_eps", c.train.clip_eps},
        {"learning_rate", c.train.learning_rate},
        {"num_steps", c.train.num_steps},
        {"timestep_fraction", c.train.timestep_fraction},
        {"ratio_clamp_max", c.train.ratio_clamp_max},
        {"ref_refresh_interval", c.train.ref_refresh_interval},
        {"shared_initial_noise", c.train.shared_initial_noise},
        {"checkpoint_interval", c.checkpoint_interval}}},
      {"calibrate",
       {{"steps", c.calibrate.steps},
        {"smoothing_window", c.calibrate.smoothing_window},
        {"fraction", c.calibrate.fraction}}},
      {"eval", {{"samples_per_class", c.eval.samples_per_class}}},
      {"audit",
       {{"input", c.audit.input}, {"k", c.audit.k}, {"max_iters", c.audit.max_iters}}},
  };
}

// Typed reads that report the dotted path on failure.
class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& path) const {
    const json* node = &root_;
    std::size_t start = 0;
    while (start <= path.size()) {
      const auto dot = path.find('.', start);
      const auto key = path.substr(start, dot == std::string::npos ? dot : dot - start);
      node = &node->at(key);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return *node;
  }

  double real(const std::string& path) const { return real_of(at(path), path); }

  std::size_t count(const std::string& path) const { return count_of(at(path), path); }

  std::uint64_t u64(const std::string& path) const {
    const auto& v = at(path);
    if (!v.is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& path) const {
    const auto& v = at(path);
    if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& path) const {
    const auto& v = at(path);
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<double> reals(const std::string& path) const {
    const auto& v = at(path);
    if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(real_of(v[i], path + "." + std::to_string(i)));
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& path) const {
    const auto& v = at(path);
    if (!v.is_array()) throw ConfigError(path + ": expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(count_of(v[i], path + "." + std::to_string(i)));
    }
    return out;
  }

  static double real_of(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    return v.get<double>();
  }

  static std::size_t count_of(const json& v, const std::string& path) {
    if (!v.is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
    return v.get<std::size_t>();
  }

 private:
  const json& root_;
};

RunConfig from_json(const json& j) {
  Reader r(j);
  RunConfig c;
  c.mode = mode_from_string(r.text("mode"));
  c.seed = r.u64("seed");
  c.output_dir = r.text("output_dir");
  c.policy.frames = r.count("policy.frames");
  c.policy.frame_dim = r.count("policy.frame_dim");
  c.policy.num_classes = r.count("policy.num_classes");
  c.policy.embed_dim = r.count("policy.embed_dim");
  c.policy.hidden = r.counts("policy.hidden");
  c.policy.checkpoint = r.text("policy.checkpoint");
  c.dataset.size = r.count("dataset.size");
  c.dataset.angular_velocity = r.real("dataset.angular_velocity");
  c.dataset.jitter = r.real("dataset.jitter");
  c.pretrain.steps = r.count("pretrain.steps");
  c.pretrain.batch_size = r.count("pretrain.batch_size");
  c.pretrain.learning_rate = r.real("pretrain.learning_rate");
  c.sde.num_steps = r.count("sde.num_steps");
  c.sde.eta = r.real("sde.eta");
  c.sde.t_min = r.real("sde.t_min");
  c.sde.seed = r.u64("sde.seed");
  c.cerm.alpha = r.real("cerm.alpha");
  c.cerm.beta = r.real("cerm.beta");
  c.cerm.thresholds = r.reals("cerm.thresholds");
  c.thresholds_file = r.text("cerm.thresholds_file");
  c.cerm.weight_mode = cerm::weight_mode_from_string(r.text("cerm.weight_mode"));
  c.cerm.ema_decay = r.real("cerm.ema_decay");
  c.rewards.num_classes = r.count("rewards.num_classes");
  c.rewards.terms.clear();
  const auto& terms = r.at("rewards.terms");
  if (!terms.is_array() || terms.empty()) {
    throw ConfigError("rewards.terms: expected a non-empty array");
  }
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string base = "rewards.terms." + std::to_string(i);
    if (!terms[i].is_object()) throw ConfigError(base + ": expected an object");
    for (const auto& [key, value] : terms[i].items()) {
      if (key != "id" && key != "stage" && key != "kind" && key != "scale") {
        throw ConfigError(base + "." + key + ": unknown key");
      }
    }
    for (const char* key : {"id", "stage", "kind", "scale"}) {
      if (!terms[i].contains(key)) throw ConfigError(base + "." + key + ": missing");
    }
    rewards::RewardTerm t;
    if (!terms[i]["id"].is_string()) throw ConfigError(base + ".id: expected a string");
    t.id = terms[i]["id"].get<std::string>();
    t.stage = Reader::count_of(terms[i]["stage"], base + ".stage");
    if (!terms[i]["kind"].is_string()) throw ConfigError(base + ".kind: expected a string");
    t.kind = rewards::term_kind_from_string(terms[i]["kind"].get<std::string>());
    t.scale = Reader::real_of(terms[i]["scale"], base + ".scale");
    c.rewards.terms.push_back(std::move(t));
  }
  c.train.group_size = r.count("train.group_size");
  c.train.clip_eps = r.real("train.clip_eps");
  c.train.learning_rate = r.real("train.learning_rate");
  c.train.num_steps = r.count("train.num_steps");
  c.train.timestep_fraction = r.real("train.timestep_fraction");
  c.train.ratio_clamp_max = r.real("train.ratio_clamp_max");
  c.train.ref_refresh_interval = r.count("train.ref_refresh_interval");
  c.train.shared_initial_noise = r.boolean("train.shared_initial_noise");
  c.checkpoint_interval = r.count("train.checkpoint_interval");
  c.calibrate.steps = r.count("calibrate.steps");
  c.calibrate.smoothing_window = r.count("calibrate.smoothing_window");
  c.calibrate.fraction = r.real("calibrate.fraction");
  c.eval.samples_per_class = r.count("eval.samples_per_class");
  c.audit.input = r.text("audit.input");
  c.audit.k = r.count("audit.k");
  c.audit.max_iters = r.count("audit.max_iters");
  return c;
}

// Copies `patch` onto `base`, refusing keys the defaults do not have.
// Arrays are replaced as a whole.
void overlay(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError(here + ": unknown key");
    if (base[key].is_object()) {
      overlay(base[key], value, here);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "': expected key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    const std::string so_far = path.substr(0, dot);
    if (node->is_object()) {
      if (!node->contains(key)) throw ConfigError(so_far + ": unknown key");
      node = &(*node)[key];
    } else if (node->is_array()) {
      std::size_t index = 0;
      try {
        std::size_t used = 0;
        index = std::stoul(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw ConfigError(so_far + ": expected an array index");
      }
      if (index >= node->size()) throw ConfigError(so_far + ": index out of range");
      node = &(*node)[index];
    } else {
      throw ConfigError(so_far + ": not a section");
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError(path + ": cannot replace a whole section");
  *node = std::move(value);
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const std::vector<std::string>& overrides) {
  json merged = to_json(RunConfig{});
  if (!json_text.empty()) {
    json doc;
    try {
      doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    overlay(merged, doc, "");
  }
  for (const auto& o : overrides) apply_override(merged, o);
  RunConfig c;
  try {
    c = from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides) {
  std::string text;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config: cannot open " + file->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_run_config(text, overrides);
}

std::string resolved_config_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

std::vector<double> read_thresholds_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cerm.thresholds_file: cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("thresholds") ||
      !doc["thresholds"].is_array()) {
    throw ConfigError("cerm.thresholds_file: " + path.string() +
                      " has no \"thresholds\" array");
  }
  std::vector<double> out;
  for (const auto& v : doc["thresholds"]) {
    if (!v.is_number()) throw ConfigError("cerm.thresholds_file: non-numeric threshold");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace spgrpo::app
