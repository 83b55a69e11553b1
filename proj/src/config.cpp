#include "evadekit/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evadekit/error.hpp"

namespace evadekit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Reads one JSON object, remembering its dotted path for diagnostics and
// rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = as<T>(j_.at(key), field(key));
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), field(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(field(item.key()) + ": unknown field");
    }
  }

  template <typename T>
  static T as(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
        throw ConfigError(where + ": expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(where + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

double epsilon_value(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      return parse_epsilon(v.get<std::string>());
    } catch (const FormatError&) {
      throw ConfigError(where + ": expected a number or \"k/255\"");
    }
  }
  throw ConfigError(where + ": expected a number or \"k/255\"");
}

void read_attack_config(Section& s, AttackConfig& c) {
  s.get("n_iterations", c.n_iterations);
  s.get("threshold_start", c.threshold_start);
  s.get("checkpoints", c.checkpoints);
  s.get("checkpoint_interval", c.checkpoint_interval);
  s.get("w_init", c.w_init);
  s.get("delta", c.delta);
  s.get("pgd_alpha", c.pgd_alpha);
  s.get("pgd_iters", c.pgd_iters);
  s.get("early_exit", c.early_exit);
  s.get("grad_aligned_quantization", c.grad_aligned_quantization);
  if (s.has("adam")) {
    auto a = s.child("adam");
    a.get("alpha", c.optimizer.alpha);
    a.get("beta1", c.optimizer.beta1);
    a.get("beta2", c.optimizer.beta2);
    a.get("eps_num", c.optimizer.eps_num);
    a.finish();
  }
}

json attack_config_json(const AttackConfig& c) {
  return json{{"n_iterations", c.n_iterations},
              {"threshold_start", c.threshold_start},
              {"checkpoints", c.resolved_checkpoints()},
              {"w_init", c.w_init},
              {"delta", c.delta},
              {"pgd_alpha", c.pgd_alpha},
              {"pgd_iters", c.pgd_iters},
              {"early_exit", c.early_exit},
              {"grad_aligned_quantization", c.grad_aligned_quantization},
              {"adam",
               {{"alpha", c.optimizer.alpha},
                {"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"eps_num", c.optimizer.eps_num}}}};
}

void read_dataset(Section& s, DatasetSpec& d, const std::string& base) {
  s.get("kind", d.kind);
  if (d.kind != "synthetic" && d.kind != "cifar10") {
    throw ConfigError(s.field("kind") + ": expected \"synthetic\" or \"cifar10\"");
  }
  auto& y = d.synthetic;
  s.get("classes", y.classes);
  s.get("height", y.height);
  s.get("width", y.width);
  s.get("channels", y.channels);
  s.get("prototype_seed", y.prototype_seed);
  s.get("blobs_per_class", y.blobs_per_class);
  s.get("blob_amplitude", y.blob_amplitude);
  s.get("nuisance_blobs", y.nuisance_blobs);
  s.get("nuisance_amplitude", y.nuisance_amplitude);
  s.get("noise", y.noise);
  s.get("train_count", d.train_count);
  s.get("train_seed", d.train_seed);
  s.get("test_count", d.test_count);
  s.get("test_seed", d.test_seed);
  s.get("train_files", d.train_files);
  s.get("test_files", d.test_files);
  for (auto& f : d.train_files) f = resolve(base, f);
  for (auto& f : d.test_files) f = resolve(base, f);
  if (d.kind == "synthetic" && y.classes < 2) throw ConfigError(s.field("classes") + ": must be >= 2");
  if (d.kind == "cifar10") {
    for (const auto* files : {&d.train_files, &d.test_files}) {
      for (const auto& f : *files) {
        if (!fs::exists(f)) throw ConfigError(s.field(files == &d.train_files ? "train_files" : "test_files") +
                                              ": '" + f + "' not found");
      }
    }
  }
}

}  // namespace

ToolkitConfig parse_config(const std::string& text, const std::string& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ToolkitConfig cfg;
  cfg.source_text = text;
  Section top(root, "");
  auto& ex = cfg.experiment;

  if (top.has("model")) {
    auto m = top.child("model");
    m.get("path", ex.model_path);
    ex.model_path = resolve(base_dir, ex.model_path);
    auto& a = cfg.architecture;
    m.get("architecture", a.kind);
    if (a.kind != "cnn" && a.kind != "mlp") throw ConfigError("model.architecture: expected \"cnn\" or \"mlp\"");
    m.get("conv1_channels", a.conv1_channels);
    m.get("conv2_channels", a.conv2_channels);
    m.get("hidden", a.hidden);
    m.get("mlp_hidden", a.mlp_hidden);
    m.get("init_seed", a.init_seed);
    m.finish();
  }
  if (top.has("dataset")) {
    auto d = top.child("dataset");
    read_dataset(d, ex.dataset, base_dir);
    d.finish();
  }
  if (top.has("train")) {
    auto t = top.child("train");
    auto& c = cfg.train;
    t.get("epochs", c.epochs);
    t.get("batch_size", c.batch_size);
    t.get("learning_rate", c.learning_rate);
    t.get("adversarial", c.adversarial);
    if (t.has("adversarial_epsilon")) {
      c.adversarial_epsilon = epsilon_value(t.raw("adversarial_epsilon"), "train.adversarial_epsilon");
    }
    t.get("adversarial_steps", c.adversarial_steps);
    t.get("adversarial_alpha", c.adversarial_alpha);
    t.get("seed", c.seed);
    t.get("robust_eval_steps", cfg.robust_eval_steps);
    t.finish();
    try {
      c.validate();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("train: ") + e.what());
    }
  }

  AttackConfig defaults;
  json attacks_json = json::array();
  if (top.has("harness")) {
    auto h = top.child("harness");
    h.get("seeds", ex.seeds);
    h.get("target_offset_seeds", ex.target_offset_seeds);
    if (h.has("epsilons")) {
      const auto& e = h.raw("epsilons");
      if (!e.is_array()) throw ConfigError("harness.epsilons: expected an array");
      ex.epsilons.clear();
      for (std::size_t i = 0; i < e.size(); ++i) {
        ex.epsilons.push_back(epsilon_value(e[i], "harness.epsilons[" + std::to_string(i) + "]"));
      }
    }
    h.get("image_offset", ex.image_offset);
    h.get("image_count", ex.image_count);
    h.get("batch_size", ex.batch_size);
    h.get("output", ex.output);
    ex.output = resolve(base_dir, ex.output);
    h.get("threads", ex.threads);
    h.get("checkpoint_rows", ex.checkpoint_rows);
    h.get("record_timing", ex.record_timing);
    h.get("timing_mode", ex.timing_mode);
    h.get("write_histories", ex.write_histories);
    h.get("store_adversarial", ex.store_adversarial);
    h.get("timing_repetitions", cfg.timing_repetitions);
    if (h.has("attack_defaults")) {
      auto d = h.child("attack_defaults");
      read_attack_config(d, defaults);
      d.finish();
    }
    h.finish();
  }
  if (top.has("attacks")) {
    const auto& list = top.raw("attacks");
    if (!list.is_array()) throw ConfigError("attacks: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section a(list[i], "attacks[" + std::to_string(i) + "]");
      std::string id;
      a.get("id", id);
      if (id.empty()) throw ConfigError(a.field("id") + ": missing");
      std::optional<LossId> loss;
      std::optional<AttackMode> mode;
      try {
        if (a.has("loss")) loss = parse_loss_id(Section::as<std::string>(a.raw("loss"), a.field("loss")));
        if (a.has("mode")) {
          const auto m = Section::as<std::string>(a.raw("mode"), a.field("mode"));
          if (m != "targeted" && m != "untargeted") throw DomainError("mode must be targeted or untargeted");
          mode = m == "targeted" ? AttackMode::targeted : AttackMode::untargeted;
        }
        AttackConfig c = defaults;
        read_attack_config(a, c);
        auto spec = make_attack_spec(parse_attack_kind(id), loss, mode, c);
        a.get("name", spec.name);
        a.finish();
        ex.attacks.push_back(std::move(spec));
      } catch (const DomainError& e) {
        throw ConfigError(a.field("") + " " + e.what());
      }
    }
  }
  if (top.has("stats")) {
    auto s = top.child("stats");
    s.get("alpha", cfg.stats.alpha);
    s.get("m", cfg.stats.m);
    s.get("continuity_correction", cfg.stats.continuity_correction);
    if (s.has("alternative")) {
      try {
        cfg.stats.alternative = parse_alternative(Section::as<std::string>(s.raw("alternative"), "stats.alternative"));
      } catch (const DomainError& e) {
        throw ConfigError(std::string("stats.alternative: ") + e.what());
      }
    }
    s.finish();
    if (!(cfg.stats.alpha > 0.0 && cfg.stats.alpha < 1.0)) throw ConfigError("stats.alpha: outside (0, 1)");
    if (cfg.stats.m < 1) throw ConfigError("stats.m: must be >= 1");
  }
  top.finish();
  return cfg;
}

ToolkitConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto base = fs::path(path).has_parent_path() ? fs::path(path).parent_path().string() : std::string(".");
  auto cfg = parse_config(ss.str(), base);
  cfg.source_path = path;
  return cfg;
}

Model build_model(const ArchitectureConfig& arch, const Shape& input_shape, std::size_t num_classes) {
  if (arch.kind == "cnn") {
    if (input_shape.size() != 3) throw ConfigError("model.architecture: cnn needs H x W x C images");
    return make_cnn(input_shape, num_classes, arch.conv1_channels, arch.conv2_channels, arch.hidden,
                    arch.init_seed);
  }
  return make_mlp_for(input_shape, arch.mlp_hidden, num_classes, arch.init_seed);
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  json attacks = json::array();
  for (const auto& a : cfg.attacks) {
    attacks.push_back({{"name", a.name},
                       {"id", std::string(attack_kind_name(a.kind))},
                       {"loss", std::string(loss_name(a.loss))},
                       {"mode", a.mode == AttackMode::targeted ? "targeted" : "untargeted"},
                       {"config", attack_config_json(a.config)}});
  }
  const auto& d = cfg.dataset;
  const auto& y = d.synthetic;
  json dataset{{"kind", d.kind},
               {"classes", y.classes},
               {"height", y.height},
               {"width", y.width},
               {"channels", y.channels},
               {"prototype_seed", y.prototype_seed},
               {"blobs_per_class", y.blobs_per_class},
               {"blob_amplitude", y.blob_amplitude},
               {"nuisance_blobs", y.nuisance_blobs},
               {"nuisance_amplitude", y.nuisance_amplitude},
               {"noise", y.noise},
               {"test_count", d.test_count},
               {"test_seed", d.test_seed},
               {"test_files", d.test_files}};
  json j{{"model_path", cfg.model_path},
         {"dataset", dataset},
         {"attacks", attacks},
         {"seeds", cfg.seeds},
         {"target_offset_seeds", cfg.target_offset_seeds},
         {"epsilons", cfg.epsilons},
         {"image_offset", cfg.image_offset},
         {"image_count", cfg.image_count},
         {"record_timing", cfg.record_timing},
         {"timing_mode", cfg.timing_mode},
         {"write_histories", cfg.write_histories},
         {"store_adversarial", cfg.store_adversarial}};
  return j.dump();
}

}  // namespace evadekit
