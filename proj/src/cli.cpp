#include "evadekit/cli.hpp"

#include <sys/utsname.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "evadekit/config.hpp"
#include "evadekit/digest.hpp"
#include "evadekit/error.hpp"
#include "evadekit/model_io.hpp"

namespace evadekit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string in_dir(const std::string& dir, const std::string& path, const std::string& fallback) {
  if (dir.empty()) return path.empty() ? fallback : path;
  fs::create_directories(dir);
  const std::string name = path.empty() ? fallback : fs::path(path).filename().string();
  return (fs::path(dir) / name).string();
}

// Reproducibility envelope written next to a command's primary output.
class Manifest {
 public:
  explicit Manifest(std::string command) : started_(utc_now()) {
    j_["command"] = std::move(command);
    j_["toolkit_version"] = kToolkitVersion;
    j_["host_fingerprint"] = host_fingerprint();
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
    j_["overrides"] = json::object();
  }

  void config(const std::string& path) {
    j_["config_path"] = fs::absolute(path).lexically_normal().string();
    j_["config_sha256"] = sha256_file(path);
  }
  void input(const std::string& path) { j_["inputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}}); }
  void output(const std::string& path) {
    j_["outputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}});
  }
  void override_value(const std::string& key, json v) { j_["overrides"][key] = std::move(v); }

  void write(const std::string& path) {
    j_["started_at"] = started_;
    j_["finished_at"] = utc_now();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << j_.dump(2) << "\n";
    if (!out) throw DataError("cannot write manifest '" + path + "'");
  }

 private:
  json j_;
  std::string started_;
};

// Resolves --manifest into a config path plus recorded overrides.
CliOptions apply_manifest(CliOptions opt) {
  if (opt.manifest.empty()) return opt;
  std::ifstream in(opt.manifest);
  if (!in) throw ConfigError("--manifest: cannot read '" + opt.manifest + "'");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("--manifest: invalid JSON: ") + e.what());
  }
  const auto path = m.value("config_path", std::string());
  if (path.empty() || !fs::exists(path)) throw ConfigError("--manifest: config '" + path + "' not found");
  if (sha256_file(path) != m.value("config_sha256", std::string())) {
    throw DataError("--manifest: config '" + path + "' changed since the manifest was written");
  }
  opt.config = path;
  const auto& ov = m.value("overrides", json::object());
  if (!opt.seed && ov.contains("seed")) opt.seed = ov["seed"].get<std::uint64_t>();
  if (!opt.timing_mode && ov.contains("timing_mode")) opt.timing_mode = ov["timing_mode"].get<bool>();
  return opt;
}

ToolkitConfig load_for(const CliOptions& opt) {
  if (opt.config.empty()) throw ConfigError("--config: required");
  if (!fs::exists(opt.config)) throw ConfigError("--config: '" + opt.config + "' not found");
  return load_config(opt.config);
}

void record_overrides(Manifest& man, const CliOptions& opt) {
  if (opt.seed) man.override_value("seed", *opt.seed);
  if (opt.timing_mode) man.override_value("timing_mode", true);
}

std::optional<std::size_t> env_threads() {
  const char* v = std::getenv("EVADEKIT_THREADS");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const auto n = std::strtoull(v, &end, 10);
  if (*end != '\0' || n == 0) throw ConfigError("EVADEKIT_THREADS: expected a positive integer");
  return static_cast<std::size_t>(n);
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::vector<std::pair<std::int64_t, std::int64_t>> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pairs '" + path + "'");
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("pairs line " + std::to_string(lineno) + ": expected two columns");
    try {
      std::size_t pa = 0;
      std::size_t pb = 0;
      const auto a = std::stoll(line.substr(0, comma), &pa);
      const auto b = std::stoll(line.substr(comma + 1), &pb);
      if (pa != comma || pb != line.size() - comma - 1) throw std::invalid_argument("trailing");
      out.emplace_back(a, b);
    } catch (const std::logic_error&) {
      if (lineno == 1) continue;  // header
      throw FormatError("pairs line " + std::to_string(lineno) + ": expected integers");
    }
  }
  return out;
}

std::string single_attack(const std::vector<AttackRecord>& records, const std::string& which) {
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.attack);
  if (names.size() != 1) {
    throw ConfigError("--attack-" + which + ": records hold " + std::to_string(names.size()) +
                      " attacks; name one");
  }
  return *names.begin();
}

json result_json(const TestResult& r, double threshold) {
  return {{"statistic", r.statistic},
          {"w_plus", r.w_plus},
          {"w_minus", r.w_minus},
          {"p_value", r.p_value},
          {"n_effective", r.n_effective},
          {"n_zero", r.n_zero},
          {"method", std::string(method_name(r.method))},
          {"z", r.z},
          {"threshold", threshold},
          {"verdict", r.p_value < threshold ? "reject" : "accept"}};
}

struct HistoryRow {
  std::string attack;
  double epsilon;
  std::size_t fluctuation;
};

std::vector<HistoryRow> read_histories(const std::string& path) {
  std::vector<HistoryRow> out;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 6) throw FormatError("histories: malformed row in '" + path + "'");
    out.push_back({f[1], parse_epsilon(f[4]), static_cast<std::size_t>(std::stoull(f[5]))});
  }
  return out;
}

std::ofstream open_csv(const std::string& path, const std::string& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << header << "\n";
  return out;
}

}  // namespace

std::string host_fingerprint() {
  std::ostringstream os;
  char host[256] = {};
  gethostname(host, sizeof host - 1);
  utsname u{};
  uname(&u);
  os << host << ";" << u.sysname << " " << u.release << " " << u.machine << ";cpus="
     << std::thread::hardware_concurrency() << ";compiler=" << __VERSION__;
  return os.str();
}

int cmd_train(const CliOptions& raw) {
  return guarded([&] {
    const CliOptions opt = apply_manifest(raw);
    Manifest man("train");
    auto cfg = load_for(opt);
    man.config(opt.config);
    record_overrides(man, opt);
    if (opt.seed) cfg.train.seed = *opt.seed;
    const std::string model_path = in_dir(opt.out, cfg.experiment.model_path, "model.evk");
    if (model_path.empty()) throw ConfigError("model.path: missing");

    const Dataset train_set = load_split(cfg.experiment.dataset, true);
    const Dataset test_set = load_split(cfg.experiment.dataset, false);
    const Model init = build_model(cfg.architecture, train_set.image_shape(), train_set.num_classes);
    const Model model = train(init, train_set, cfg.train);
    save_model(model, model_path);

    const double robust = robust_accuracy(model, test_set, cfg.train.adversarial_epsilon,
                                          cfg.robust_eval_steps, cfg.train.adversarial_alpha, 0);
    std::cout << "train_accuracy=" << fixed(accuracy(model, train_set), 4)
              << " test_accuracy=" << fixed(accuracy(model, test_set), 4) << " robust_accuracy@"
              << format_epsilon(cfg.train.adversarial_epsilon) << "=" << fixed(robust, 4) << "\n";
    std::cout << "model written to " << model_path << "\n";
    man.output(model_path);
    man.write(model_path + ".manifest.json");
    return kExitOk;
  });
}

int cmd_attack(const CliOptions& raw) {
  return guarded([&] {
    const CliOptions opt = apply_manifest(raw);
    Manifest man("attack");
    auto cfg = load_for(opt);
    man.config(opt.config);
    record_overrides(man, opt);
    auto& ex = cfg.experiment;
    if (opt.seed) ex.seeds = {*opt.seed};
    if (opt.threads) {
      ex.threads = *opt.threads;
    } else if (auto t = env_threads()) {
      ex.threads = *t;
    }
    if (opt.timing_mode) {
      ex.timing_mode = true;
      ex.record_timing = true;
    }
    ex.output = in_dir(opt.out, ex.output, "records.csv");
    ex.validate();
    for (const auto& w : ex.warnings()) std::cerr << "warning: " << w << "\n";
    if (!fs::exists(ex.model_path)) throw ConfigError("model.path: '" + ex.model_path + "' not found");
    man.input(ex.model_path);

    const auto result = run_experiment(ex);
    std::map<std::pair<double, std::string>, std::pair<std::size_t, std::size_t>> totals;
    for (const auto& r : result.records) {
      auto& t = totals[{r.epsilon, r.attack}];
      t.first += r.success ? 1 : 0;
      ++t.second;
    }
    for (const auto& [key, t] : totals) {
      std::cout << "epsilon=" << format_epsilon(key.first) << " attack=" << key.second
                << " successes=" << t.first << "/" << t.second << "\n";
    }
    if (result.resumed_rows > 0) std::cout << "resumed after " << result.resumed_rows << " rows\n";
    std::cout << "records: " << ex.output << " sha256=" << result.content_sha256 << "\n";

    if (opt.timing_mode) {
      const Model model = load_model(ex.model_path);
      const Dataset test = load_split(ex.dataset, false);
      const std::size_t n = std::min(ex.batch_size, test.size() - std::min(test.size(), ex.image_offset));
      const Dataset batch = subset(test, ex.image_offset, n);
      const std::string timing_path = ex.output + ".timing.csv";
      auto out = open_csv(timing_path, "attack,epsilon,batch_size,repetitions,mean_seconds,stddev_seconds");
      for (double eps : ex.epsilons) {
        for (const auto& spec : ex.attacks) {
          const auto t = measure_attack_timing(model, batch, spec, eps, ex.seeds.front(), cfg.timing_repetitions);
          out << spec.name << ',' << format_epsilon(eps) << ',' << n << ',' << cfg.timing_repetitions << ','
              << fixed(t.mean_seconds, 9) << ',' << fixed(t.stddev_seconds, 9) << "\n";
        }
      }
      out.close();
      man.output(timing_path);
    }
    man.output(ex.output);
    man.write(ex.output + ".manifest.json");
    return kExitOk;
  });
}

int cmd_stats(const StatsOptions& opt) {
  return guarded([&] {
    Manifest man("stats");
    StatsConfig sc;
    if (!opt.config.empty()) {
      if (!fs::exists(opt.config)) throw ConfigError("--config: '" + opt.config + "' not found");
      sc = load_config(opt.config).stats;
      man.config(opt.config);
    }
    if (opt.alpha) sc.alpha = *opt.alpha;
    if (opt.m) sc.m = *opt.m;
    if (!opt.alternative.empty()) {
      try {
        sc.alternative = parse_alternative(opt.alternative);
      } catch (const DomainError& e) {
        throw ConfigError(std::string("--alternative: ") + e.what());
      }
    }
    double threshold = 0.0;
    try {
      threshold = bonferroni(sc.alpha, sc.m);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("--alpha/--m: ") + e.what());
    }
    WilcoxonOptions wo;
    wo.continuity_correction = sc.continuity_correction;

    json report{{"alpha", sc.alpha},
                {"m", sc.m},
                {"threshold", threshold},
                {"alternative", std::string(alternative_name(sc.alternative))},
                {"results", json::array()}};
    auto run_one = [&](const PairedSampleSet& set, json entry) {
      entry["n_images"] = set.a.size();
      try {
        entry.update(result_json(wilcoxon_pratt(set, sc.alternative, wo), threshold));
      } catch (const UndefinedTestError& e) {
        entry["verdict"] = "undefined";
        entry["reason"] = e.what();
      }
      report["results"].push_back(entry);
    };

    if (!opt.pairs.empty()) {
      man.input(opt.pairs);
      PairedSampleSet set;
      for (const auto& [a, b] : read_pairs(opt.pairs)) {
        set.a.push_back(a);
        set.b.push_back(b);
      }
      if (set.a.empty()) throw DataError("pairs: no rows in '" + opt.pairs + "'");
      try {
        set.validate();
      } catch (const DomainError& e) {
        throw DataError(std::string("pairs: ") + e.what());
      }
      run_one(set, json::object());
    } else {
      if (opt.records_a.empty()) throw ConfigError("--a: records file required (or --pairs)");
      const std::string path_b = opt.records_b.empty() ? opt.records_a : opt.records_b;
      const auto ra = read_records(opt.records_a);
      const auto rb = path_b == opt.records_a ? ra : read_records(path_b);
      man.input(opt.records_a);
      if (path_b != opt.records_a) man.input(path_b);
      const std::string name_a = opt.attack_a.empty() ? single_attack(ra, "a") : opt.attack_a;
      const std::string name_b = opt.attack_b.empty() ? single_attack(rb, "b") : opt.attack_b;
      report["attack_a"] = name_a;
      report["attack_b"] = name_b;
      std::set<double> eps_a;
      std::set<double> eps_b;
      for (const auto& r : ra) {
        if (r.attack == name_a) eps_a.insert(r.epsilon);
      }
      for (const auto& r : rb) {
        if (r.attack == name_b) eps_b.insert(r.epsilon);
      }
      if (eps_a.empty()) throw DataError("no records for attack '" + name_a + "'");
      if (eps_a != eps_b) throw DataError("record files cover different epsilons");
      for (double eps : eps_a) {
        run_one(paired_counts(ra, name_a, rb, name_b, eps), json{{"epsilon", eps}});
      }
    }

    const std::string text = report.dump(2);
    if (opt.out.empty()) {
      std::cout << text << "\n";
    } else {
      if (fs::path(opt.out).has_parent_path()) fs::create_directories(fs::path(opt.out).parent_path());
      std::ofstream out(opt.out, std::ios::binary | std::ios::trunc);
      out << text << "\n";
      if (!out) throw DataError("cannot write '" + opt.out + "'");
      out.close();
      man.output(opt.out);
      man.write(opt.out + ".manifest.json");
    }
    return kExitOk;
  });
}

int cmd_report(const ReportOptions& opt) {
  return guarded([&] {
    if (opt.records.empty()) throw ConfigError("report: at least one records file required");
    Manifest man("report");
    std::vector<AttackRecord> all;
    std::vector<HistoryRow> histories;
    std::vector<std::string> timing_files;
    for (const auto& path : opt.records) {
      auto recs = read_records(path);
      man.input(path);
      all.insert(all.end(), recs.begin(), recs.end());
      if (fs::exists(histories_path(path))) {
        auto h = read_histories(histories_path(path));
        histories.insert(histories.end(), h.begin(), h.end());
      }
      if (fs::exists(path + ".timing.csv")) timing_files.push_back(path + ".timing.csv");
    }
    fs::create_directories(opt.out);
    auto out_path = [&](const char* name) { return (fs::path(opt.out) / name).string(); };
    std::vector<std::string> written;

    std::set<double> epsilons;
    for (const auto& r : all) epsilons.insert(r.epsilon);

    // Success rates; the attack with the fewest successes at an epsilon is
    // the baseline and gets relative improvement 0.
    {
      auto rates = open_csv(out_path("success_rate.csv"),
                            "epsilon,attack,successes,trials,success_rate,relative_improvement");
      auto sets = open_csv(out_path("set_improvement.csv"),
                           "epsilon,seed,offset_seed,attack,successes,trials,relative_improvement");
      for (double eps : epsilons) {
        std::map<std::string, std::pair<std::size_t, std::size_t>> totals;
        std::map<std::string, std::map<SuccessMatrix::SetKey, std::pair<std::size_t, std::size_t>>> per_set;
        for (const auto& r : all) {
          if (r.epsilon != eps) continue;
          auto& t = totals[r.attack];
          t.first += r.success;
          ++t.second;
          auto& s = per_set[r.attack][{r.seed, r.offset_seed}];
          s.first += r.success;
          ++s.second;
        }
        std::string baseline = totals.begin()->first;
        for (const auto& [name, t] : totals) {
          if (t.first < totals[baseline].first) baseline = name;
        }
        const double base = static_cast<double>(std::max<std::size_t>(1, totals[baseline].first));
        for (const auto& [name, t] : totals) {
          rates << format_epsilon(eps) << ',' << name << ',' << t.first << ',' << t.second << ','
                << fixed(static_cast<double>(t.first) / static_cast<double>(t.second)) << ','
                << fixed((static_cast<double>(t.first) - static_cast<double>(totals[baseline].first)) / base) << "\n";
        }
        for (const auto& [name, by_set] : per_set) {
          for (const auto& [key, s] : by_set) {
            const auto it = per_set[baseline].find(key);
            const std::size_t b = it == per_set[baseline].end() ? 0 : it->second.first;
            sets << format_epsilon(eps) << ',' << key.seed << ',' << key.offset_seed << ',' << name << ','
                 << s.first << ',' << s.second << ','
                 << fixed((static_cast<double>(s.first) - static_cast<double>(b)) /
                          static_cast<double>(std::max<std::size_t>(1, b)))
                 << "\n";
          }
        }
      }
      written.push_back(out_path("success_rate.csv"));
      written.push_back(out_path("set_improvement.csv"));
    }

    {
      auto pairs = open_csv(out_path("uniqueness_pairs.csv"), "epsilon,attack_a,attack_b,a_not_b");
      auto excl = open_csv(out_path("uniqueness_exclusive.csv"), "epsilon,attack,exclusive");
      for (double eps : epsilons) {
        const auto m = success_matrix(all, eps);
        if (m.attacks.size() < 2) continue;
        const auto u = uniqueness_matrix(m);
        for (std::size_t i = 0; i < u.attacks.size(); ++i) {
          for (std::size_t j = 0; j < u.attacks.size(); ++j) {
            if (i == j) continue;
            pairs << format_epsilon(eps) << ',' << u.attacks[i] << ',' << u.attacks[j] << ','
                  << fixed(u.a_not_b[i][j]) << "\n";
          }
          excl << format_epsilon(eps) << ',' << u.attacks[i] << ',' << fixed(u.exclusive[i]) << "\n";
        }
      }
      written.push_back(out_path("uniqueness_pairs.csv"));
      written.push_back(out_path("uniqueness_exclusive.csv"));
    }

    {
      auto hist = open_csv(out_path("fluctuation_histogram.csv"), "epsilon,attack,fluctuation,count");
      std::map<std::tuple<double, std::string, std::size_t>, std::size_t> counts;
      for (const auto& h : histories) ++counts[{h.epsilon, h.attack, h.fluctuation}];
      for (const auto& [key, n] : counts) {
        hist << format_epsilon(std::get<0>(key)) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
             << n << "\n";
      }
      written.push_back(out_path("fluctuation_histogram.csv"));
    }

    {
      auto timing = open_csv(out_path("timing.csv"), "attack,epsilon,source,samples,mean_seconds,stddev_seconds");
      std::map<std::pair<std::string, double>, std::vector<double>> cells;
      for (const auto& r : all) {
        if (r.elapsed_us > 0) cells[{r.attack, r.epsilon}].push_back(static_cast<double>(r.elapsed_us) * 1e-6);
      }
      for (const auto& [key, v] : cells) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        timing << key.first << ',' << format_epsilon(key.second) << ",cell," << v.size() << ','
               << fixed(mean, 9) << ',' << fixed(sd, 9) << "\n";
      }
      for (const auto& f : timing_files) {
        std::ifstream in(f);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          std::vector<std::string> c;
          std::stringstream ss(line);
          std::string cell;
          while (std::getline(ss, cell, ',')) c.push_back(cell);
          if (c.size() != 6) throw FormatError("timing: malformed row in '" + f + "'");
          timing << c[0] << ',' << c[1] << ",batch," << c[3] << ',' << c[4] << ',' << c[5] << "\n";
        }
      }
      written.push_back(out_path("timing.csv"));
    }

    for (const auto& w : written) {
      man.output(w);
      std::cout << w << "\n";
    }
    man.write(out_path("report.manifest.json"));
    return kExitOk;
  });
}

int run_cli(int argc, char** argv) {
  CLI::App app{"evadekit: constrained adversarial attacks and their evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolkitVersion);

  CliOptions common;
  auto add_common = [&](CLI::App* sub, bool sweep) {
    sub->add_option("--config", common.config, "JSON config");
    sub->add_option("--manifest", common.manifest, "replay the config and overrides of a manifest");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", common.seed, "override the seed");
    if (sweep) {
      sub->add_option("--threads", common.threads, "worker threads (fallback: EVADEKIT_THREADS)")
          ->check(CLI::PositiveNumber);
      sub->add_flag("--timing-mode", common.timing_mode, "full iteration budget and timing tables");
    }
  };
  auto* train_cmd = app.add_subcommand("train", "train a model from a config");
  add_common(train_cmd, false);
  auto* attack_cmd = app.add_subcommand("attack", "run an attack sweep");
  add_common(attack_cmd, true);

  StatsOptions so;
  auto* stats_cmd = app.add_subcommand("stats", "paired Wilcoxon test between two attacks");
  stats_cmd->add_option("--a", so.records_a, "records file of attack A");
  stats_cmd->add_option("--b", so.records_b, "records file of attack B (default: --a)");
  stats_cmd->add_option("--attack-a", so.attack_a, "attack name in --a");
  stats_cmd->add_option("--attack-b", so.attack_b, "attack name in --b");
  stats_cmd->add_option("--pairs", so.pairs, "two-column CSV of paired counts");
  stats_cmd->add_option("--config", so.config, "config providing the stats section");
  stats_cmd->add_option("--alpha", so.alpha, "significance level");
  stats_cmd->add_option("--m", so.m, "number of comparisons (Bonferroni)");
  stats_cmd->add_option("--alternative", so.alternative, "greater | less | two-sided");
  stats_cmd->add_option("--out", so.out, "JSON output file (default stdout)");

  ReportOptions ro;
  auto* report_cmd = app.add_subcommand("report", "plot-ready CSVs from record files");
  report_cmd->add_option("records", ro.records, "record CSV files")->required();
  report_cmd->add_option("--out", ro.out, "output directory");

  app.add_subcommand("selftest", "quick internal consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (train_cmd->parsed()) return cmd_train(common);
  if (attack_cmd->parsed()) return cmd_attack(common);
  if (stats_cmd->parsed()) return cmd_stats(so);
  if (report_cmd->parsed()) return cmd_report(ro);
  return cmd_selftest();
}

}  // namespace evadekit
