#include "evadekit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "evadekit/digest.hpp"
#include "evadekit/error.hpp"
#include "evadekit/model_io.hpp"
#include "evadekit/rng.hpp"

namespace evadekit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_int(std::string_view s, const char* field) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError(std::string("records: bad ") + field + " '" + std::string(s) + "'");
  }
  return v;
}

std::string history_string(const std::vector<std::size_t>& history) {
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) out.push_back(' ');
    out += std::to_string(history[i]);
  }
  return out;
}

std::string history_digest(const std::string& history) { return sha256_hex(history).substr(0, 16); }

std::string histories_header() {
  return "image_index,attack,seed,offset_seed,epsilon,fluctuation,digest,history";
}

std::string history_row(const CellResult& c) {
  const auto& r = c.record;
  std::ostringstream os;
  os << r.image_index << ',' << r.attack << ',' << r.seed << ',' << r.offset_seed << ','
     << format_epsilon(r.epsilon) << ',' << (c.history.empty() ? 0 : fluctuation_metric(c.history))
     << ',' << r.history_digest << ',' << history_string(c.history);
  return os.str();
}

std::string adversarial_entry(std::uint64_t row, const Tensor& adv) {
  std::string out(sizeof(std::uint64_t) + sizeof(std::uint32_t), '\0');
  const auto n = static_cast<std::uint32_t>(adv.size());
  std::memcpy(out.data(), &row, sizeof row);
  std::memcpy(out.data() + sizeof row, &n, sizeof n);
  for (double v : adv.values()) out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CellIndex {
  std::size_t eps, offset, seed, attack, image;
};

CellIndex cell_at(const ExperimentConfig& cfg, std::size_t n_images, std::size_t idx) {
  CellIndex c{};
  c.image = idx % n_images;
  idx /= n_images;
  c.attack = idx % cfg.attacks.size();
  idx /= cfg.attacks.size();
  c.seed = idx % cfg.seeds.size();
  idx /= cfg.seeds.size();
  c.offset = idx % cfg.target_offset_seeds.size();
  c.eps = idx / cfg.target_offset_seeds.size();
  return c;
}

std::pair<std::size_t, std::size_t> image_range(const ExperimentConfig& cfg, std::size_t n) {
  if (cfg.image_offset >= n) throw DataError("experiment: image_offset beyond the test split");
  const std::size_t avail = n - cfg.image_offset;
  const std::size_t count = cfg.image_count == 0 ? avail : cfg.image_count;
  if (count > avail) throw DataError("experiment: image range exceeds the test split");
  return {cfg.image_offset, count};
}

// Persists rows in cell order; owns the CSV, histories and adversarial
// files plus the sidecar that makes a partial run resumable.
class RecordSink {
 public:
  RecordSink(const ExperimentConfig& cfg, std::size_t total)
      : cfg_(cfg), total_(total), persist_(!cfg.output.empty()) {
    config_json_ = experiment_config_json(cfg);
    config_sha_ = sha256_hex(config_json_);
  }

  // Returns rows already present from a previous run.
  std::vector<AttackRecord> open() {
    std::vector<AttackRecord> existing;
    if (!persist_) {
      append_csv(std::string(kRecordHeader) + "\n");
      return existing;
    }
    const std::string csv = cfg_.output;
    const std::string side = sidecar_path(csv);
    if (fs::exists(csv)) {
      if (!fs::exists(side)) {
        throw DataError("'" + csv + "' exists without its sidecar; refusing to resume");
      }
      json meta;
      try {
        meta = json::parse(read_file(side));
      } catch (const json::exception& e) {
        throw DataError("sidecar '" + side + "' unreadable: " + e.what());
      }
      if (meta.value("config_sha256", "") != config_sha_) {
        throw DataError("'" + csv + "' was produced by a different configuration; refusing to resume");
      }
      const auto csv_bytes = meta.at("csv_bytes").get<std::uintmax_t>();
      const auto hist_bytes = meta.value("histories_bytes", std::uintmax_t{0});
      const auto adv_bytes = meta.value("adversarial_bytes", std::uintmax_t{0});
      std::string content = read_file(csv);
      if (content.size() < csv_bytes || sha256_hex(std::string_view(content).substr(0, csv_bytes)) !=
                                            meta.at("csv_sha256").get<std::string>()) {
        throw DataError("'" + csv + "' does not match its checksum; refusing to resume");
      }
      content.resize(csv_bytes);
      std::string hist;
      if (cfg_.write_histories) {
        hist = read_file(histories_path(csv));
        if (hist.size() < hist_bytes || sha256_hex(std::string_view(hist).substr(0, hist_bytes)) !=
                                            meta.value("histories_sha256", "")) {
          throw DataError("histories file does not match its checksum; refusing to resume");
        }
        hist.resize(hist_bytes);
      }
      if (cfg_.store_adversarial && fs::file_size(adversarial_store_path(csv)) < adv_bytes) {
        throw DataError("adversarial store shorter than recorded; refusing to resume");
      }
      // Rows written after the last checkpoint are recomputed.
      fs::resize_file(csv, csv_bytes);
      if (cfg_.write_histories) fs::resize_file(histories_path(csv), hist_bytes);
      if (cfg_.store_adversarial) fs::resize_file(adversarial_store_path(csv), adv_bytes);

      std::istringstream lines(content);
      std::string line;
      std::getline(lines, line);
      if (line != kRecordHeader) throw DataError("'" + csv + "' has an unexpected header");
      while (std::getline(lines, line)) {
        if (!line.empty()) existing.push_back(record_from_csv(line));
      }
      if (cfg_.write_histories) {
        std::istringstream hl(hist);
        std::getline(hl, line);
        for (auto& r : existing) {
          if (!std::getline(hl, line)) break;
          std::size_t pos = 0;
          for (int f = 0; f < 6 && pos != std::string::npos; ++f) pos = line.find(',', pos) + 1;
          const auto end = line.find(',', pos);
          if (pos != 0 && end != std::string::npos) r.history_digest = line.substr(pos, end - pos);
        }
      }
      csv_hash_.update(content);
      csv_bytes_ = csv_bytes;
      hist_hash_.update(hist);
      hist_bytes_ = hist_bytes;
      adv_bytes_ = adv_bytes;
      rows_ = existing.size();
      csv_out_.open(csv, std::ios::binary | std::ios::app);
      if (cfg_.write_histories) hist_out_.open(histories_path(csv), std::ios::binary | std::ios::app);
      if (cfg_.store_adversarial) adv_out_.open(adversarial_store_path(csv), std::ios::binary | std::ios::app);
    } else {
      if (fs::path(csv).has_parent_path()) fs::create_directories(fs::path(csv).parent_path());
      csv_out_.open(csv, std::ios::binary | std::ios::trunc);
      if (!csv_out_) throw DataError("cannot write '" + csv + "'");
      if (cfg_.write_histories) {
        hist_out_.open(histories_path(csv), std::ios::binary | std::ios::trunc);
        append_hist(histories_header() + "\n");
      }
      if (cfg_.store_adversarial) adv_out_.open(adversarial_store_path(csv), std::ios::binary | std::ios::trunc);
      append_csv(std::string(kRecordHeader) + "\n");
      checkpoint(false);
    }
    return existing;
  }

  void write(const CellResult& c) {
    append_csv(record_to_csv(c.record) + "\n");
    if (persist_ && cfg_.write_histories) append_hist(history_row(c) + "\n");
    if (persist_ && cfg_.store_adversarial && c.adversarial) {
      const auto entry = adversarial_entry(rows_, *c.adversarial);
      adv_out_.write(entry.data(), static_cast<std::streamsize>(entry.size()));
      adv_bytes_ += entry.size();
    }
    ++rows_;
    if (persist_ && rows_ % std::max<std::size_t>(1, cfg_.checkpoint_rows) == 0) checkpoint(false);
  }

  std::string finish() {
    if (persist_) checkpoint(rows_ == total_);
    return csv_hash_.peek_hex();
  }

 private:
  void append_csv(const std::string& s) {
    csv_hash_.update(s);
    csv_bytes_ += s.size();
    if (persist_) csv_out_ << s;
  }

  void append_hist(const std::string& s) {
    hist_hash_.update(s);
    hist_bytes_ += s.size();
    hist_out_ << s;
  }

  void checkpoint(bool complete) {
    csv_out_.flush();
    if (hist_out_.is_open()) hist_out_.flush();
    if (adv_out_.is_open()) adv_out_.flush();
    if (!csv_out_ || (hist_out_.is_open() && !hist_out_) || (adv_out_.is_open() && !adv_out_)) {
      throw DataError("write failure while persisting records");
    }
    json meta;
    meta["format"] = "evadekit-records";
    meta["version"] = 1;
    meta["config"] = json::parse(config_json_);
    meta["config_sha256"] = config_sha_;
    meta["total_cells"] = total_;
    meta["rows"] = rows_;
    meta["csv_bytes"] = csv_bytes_;
    meta["csv_sha256"] = csv_hash_.peek_hex();
    if (cfg_.write_histories) {
      meta["histories_bytes"] = hist_bytes_;
      meta["histories_sha256"] = hist_hash_.peek_hex();
    }
    if (cfg_.store_adversarial) meta["adversarial_bytes"] = adv_bytes_;
    meta["complete"] = complete;
    const std::string side = sidecar_path(cfg_.output);
    const std::string tmp = side + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << meta.dump(2) << "\n";
      if (!out) throw DataError("cannot write '" + tmp + "'");
    }
    fs::rename(tmp, side);
  }

  const ExperimentConfig& cfg_;
  std::size_t total_;
  bool persist_;
  std::string config_json_;
  std::string config_sha_;
  std::ofstream csv_out_, hist_out_, adv_out_;
  Sha256 csv_hash_, hist_hash_;
  std::uintmax_t csv_bytes_ = 0, hist_bytes_ = 0, adv_bytes_ = 0;
  std::size_t rows_ = 0;
};

}  // namespace

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "pgd") return AttackKind::pgd;
  if (name == "apgd" || name == "apgd_lite") return AttackKind::apgd;
  if (name == "cgd") return AttackKind::cgd;
  if (name == "cgd_untargeted") return AttackKind::cgd_untargeted;
  throw DomainError("unknown attack id '" + std::string(name) + "'");
}

std::string_view attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::pgd: return "pgd";
    case AttackKind::apgd: return "apgd";
    case AttackKind::cgd: return "cgd";
    case AttackKind::cgd_untargeted: return "cgd_untargeted";
  }
  return "?";
}

AttackSpec make_attack_spec(AttackKind kind, std::optional<LossId> loss, std::optional<AttackMode> mode,
                            const AttackConfig& config) {
  AttackSpec s;
  s.kind = kind;
  s.config = config;
  switch (kind) {
    case AttackKind::cgd:
      s.mode = mode.value_or(AttackMode::targeted);
      s.loss = loss.value_or(LossId::md);
      if (s.mode != AttackMode::targeted || s.loss != LossId::md) {
        throw DomainError("cgd is targeted with the md loss");
      }
      s.name = "cgd";
      return s;
    case AttackKind::cgd_untargeted:
      s.mode = mode.value_or(AttackMode::untargeted);
      s.loss = loss.value_or(LossId::cw_star);
      if (s.mode != AttackMode::untargeted || s.loss != LossId::cw_star) {
        throw DomainError("cgd_untargeted is untargeted with the cw_star loss");
      }
      s.name = "cgd_untargeted";
      return s;
    case AttackKind::pgd:
    case AttackKind::apgd:
      s.mode = mode.value_or(AttackMode::targeted);
      s.loss = loss.value_or(kind == AttackKind::pgd ? LossId::ce
                                                     : (s.mode == AttackMode::targeted ? LossId::md : LossId::cw_star));
      objective_sign(s.loss, s.mode);
      s.name = std::string(attack_kind_name(kind)) + "-" + std::string(loss_name(s.loss)) +
               (s.mode == AttackMode::untargeted ? "-u" : "");
      return s;
  }
  return s;
}

void ExperimentConfig::validate() const {
  if (attacks.empty()) throw ConfigError("attacks: list is empty");
  std::set<std::string> names;
  for (const auto& a : attacks) {
    if (a.name.empty() || a.name.find_first_of(",\n\r") != std::string::npos) {
      throw ConfigError("attacks: invalid name '" + a.name + "'");
    }
    if (!names.insert(a.name).second) throw ConfigError("attacks: duplicate name '" + a.name + "'");
    try {
      a.config.validate();
      objective_sign(a.loss, a.mode);
    } catch (const DomainError& e) {
      throw ConfigError("attacks." + a.name + ": " + e.what());
    }
  }
  if (seeds.empty()) throw ConfigError("harness.seeds: list is empty");
  if (target_offset_seeds.empty()) throw ConfigError("harness.target_offset_seeds: list is empty");
  if (epsilons.empty()) throw ConfigError("harness.epsilons: list is empty");
  for (double e : epsilons) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("harness.epsilons: value outside [0, 1]");
  }
  if (batch_size < 1) throw ConfigError("harness.batch_size must be >= 1");
}

std::vector<std::string> ExperimentConfig::warnings() const {
  std::vector<std::string> out;
  for (double e : epsilons) {
    if (!is_grid_aligned(e)) {
      out.push_back("epsilon " + format_epsilon(e) + " is not a multiple of 1/255; quantized points may leave the grid");
    }
  }
  return out;
}

std::string format_epsilon(double eps) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, eps);
  return std::string(buf, p);
}

double parse_epsilon(std::string_view text) {
  const auto slash = text.find('/');
  auto num = [](std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw FormatError("bad epsilon '" + std::string(s) + "'");
    }
    return v;
  };
  if (slash == std::string_view::npos) return num(text);
  const double d = num(text.substr(slash + 1));
  if (d == 0.0) throw FormatError("bad epsilon '" + std::string(text) + "'");
  return num(text.substr(0, slash)) / d;
}

std::string record_to_csv(const AttackRecord& r) {
  std::ostringstream os;
  os << r.image_index << ',' << r.attack << ',' << loss_name(r.loss) << ',' << r.seed << ','
     << r.offset_seed << ',' << format_epsilon(r.epsilon) << ',' << (r.success ? 1 : 0) << ','
     << r.iterations << ',' << r.elapsed_us;
  return os.str();
}

AttackRecord record_from_csv(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto f = split(line, ',');
  if (f.size() != 9) throw FormatError("records: expected 9 fields in '" + std::string(line) + "'");
  AttackRecord r;
  r.image_index = parse_int<std::size_t>(f[0], "image_index");
  r.attack = std::string(f[1]);
  try {
    r.loss = parse_loss_id(f[2]);
  } catch (const DomainError& e) {
    throw FormatError(std::string("records: ") + e.what());
  }
  r.seed = parse_int<std::uint64_t>(f[3], "seed");
  r.offset_seed = parse_int<std::uint64_t>(f[4], "offset_seed");
  r.epsilon = parse_epsilon(f[5]);
  const auto s = parse_int<int>(f[6], "success");
  if (s != 0 && s != 1) throw FormatError("records: success must be 0 or 1");
  r.success = s == 1;
  r.iterations = parse_int<std::size_t>(f[7], "iterations");
  r.elapsed_us = parse_int<std::int64_t>(f[8], "elapsed_us");
  return r;
}

std::vector<AttackRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open records '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("records: '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordHeader) throw FormatError("records: '" + path + "' has an unexpected header");
  std::vector<AttackRecord> out;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(record_from_csv(line));
  }
  return out;
}

void write_records(const std::string& path, const std::vector<AttackRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << kRecordHeader << "\n";
  for (const auto& r : records) out << record_to_csv(r) << "\n";
}

std::size_t offset_from_uniform(double u, std::size_t num_classes) {
  if (num_classes < 2) throw DomainError("target offset: K must be >= 2");
  if (!(u >= 0.0 && u < 1.0)) throw DomainError("target offset: u outside [0, 1)");
  const auto k1 = static_cast<double>(num_classes - 1);
  return std::min(static_cast<std::size_t>(std::floor(u * k1)), num_classes - 2) + 1;
}

std::size_t target_offset(std::uint64_t seed, std::size_t image_index, std::size_t num_classes) {
  return offset_from_uniform(CounterRng(seed).uniform_at(image_index), num_classes);
}

std::size_t target_class(std::size_t label, std::uint64_t offset_seed, std::size_t image_index,
                         std::size_t num_classes) {
  return (label + target_offset(offset_seed, image_index, num_classes)) % num_classes;
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t image_index) {
  return CounterRng::derive(seed, image_index);
}

AttackConfig cell_attack_config(const AttackSpec& spec, double epsilon, std::uint64_t seed,
                                std::size_t image_index, bool timing_mode) {
  AttackConfig c = spec.config;
  c.epsilon = epsilon;
  c.seed = cell_seed(seed, image_index);
  c.loss = spec.loss;
  if (timing_mode) c.early_exit = false;
  return c;
}

AttackGoal cell_goal(const AttackSpec& spec, std::size_t label, std::uint64_t offset_seed,
                     std::size_t image_index, std::size_t num_classes) {
  if (spec.mode == AttackMode::untargeted) return AttackGoal::untargeted(label);
  return AttackGoal::targeted(target_class(label, offset_seed, image_index, num_classes), label);
}

AttackOutcome run_attack(const Model& model, const Tensor& x, const AttackSpec& spec,
                         const AttackGoal& goal, const AttackConfig& cfg) {
  switch (spec.kind) {
    case AttackKind::pgd: {
      AttackConfig c = cfg;
      c.loss = spec.loss;
      return run_pgd(model, x, goal, c);
    }
    case AttackKind::apgd: return run_apgd_lite(model, x, spec.loss, goal, cfg);
    case AttackKind::cgd:
      if (goal.mode != AttackMode::targeted) throw DomainError("cgd needs a targeted goal");
      return run_cgd(model, x, goal.cls, cfg);
    case AttackKind::cgd_untargeted:
      if (goal.mode != AttackMode::untargeted) throw DomainError("cgd_untargeted needs an untargeted goal");
      return run_cgd_untargeted(model, x, goal.cls, cfg);
  }
  throw DomainError("unknown attack kind");
}

CellResult run_cell(const Model& model, const Dataset& data, const AttackSpec& spec, double epsilon,
                    std::uint64_t seed, std::uint64_t offset_seed, std::size_t image_index,
                    const ExperimentConfig& cfg) {
  const Tensor x = data.image(image_index);
  const std::size_t label = data.labels[image_index];
  const AttackGoal goal = cell_goal(spec, label, offset_seed, image_index, model.num_classes());
  const AttackConfig acfg = cell_attack_config(spec, epsilon, seed, image_index, cfg.timing_mode);
  auto outcome = run_attack(model, x, spec, goal, acfg);

  CellResult c;
  auto& r = c.record;
  r.image_index = image_index;
  r.attack = spec.name;
  r.loss = spec.loss;
  r.seed = seed;
  r.offset_seed = offset_seed;
  r.epsilon = epsilon;
  r.success = outcome.success;
  r.iterations = outcome.success ? outcome.success_iteration : outcome.iterations_used;
  r.elapsed_us = cfg.record_timing
                     ? std::chrono::duration_cast<std::chrono::microseconds>(outcome.elapsed).count()
                     : 0;
  r.history_digest = history_digest(history_string(outcome.prediction_history));
  c.history = std::move(outcome.prediction_history);
  if (cfg.store_adversarial && outcome.success) c.adversarial = std::move(outcome.adversarial);
  return c;
}

std::size_t sweep_cell_count(const ExperimentConfig& cfg, std::size_t n_images) {
  return cfg.epsilons.size() * cfg.target_offset_seeds.size() * cfg.seeds.size() * cfg.attacks.size() *
         n_images;
}

SweepResult run_sweep(const Model& model, const Dataset& test, const ExperimentConfig& cfg) {
  cfg.validate();
  if (test.size() == 0) throw DataError("experiment: empty test split");
  if (test.image_shape() != model.input_shape()) {
    throw DataError("experiment: dataset images " + shape_string(test.image_shape()) +
                    " do not match model input " + shape_string(model.input_shape()));
  }
  if (test.num_classes != model.num_classes()) {
    throw DataError("experiment: dataset and model disagree on the number of classes");
  }
  const auto [first_image, n_images] = image_range(cfg, test.size());
  const std::size_t total = sweep_cell_count(cfg, n_images);

  RecordSink sink(cfg, total);
  SweepResult result;
  result.records = sink.open();
  result.resumed_rows = result.records.size();
  if (result.records.size() > total) throw DataError("experiment: record file has more rows than cells");

  auto compute = [&](std::size_t idx) {
    const auto c = cell_at(cfg, n_images, idx);
    return run_cell(model, test, cfg.attacks[c.attack], cfg.epsilons[c.eps], cfg.seeds[c.seed],
                    cfg.target_offset_seeds[c.offset], first_image + c.image, cfg);
  };

  const std::size_t start = result.records.size();
  const std::size_t threads = std::max<std::size_t>(1, cfg.threads);
  if (threads == 1) {
    for (std::size_t idx = start; idx < total; ++idx) {
      auto cell = compute(idx);
      sink.write(cell);
      result.records.push_back(std::move(cell.record));
    }
  } else {
    std::atomic<std::size_t> next{start};
    std::atomic<bool> stop{false};
    std::mutex mu;
    std::map<std::size_t, CellResult> pending;
    std::size_t write_pos = start;
    std::exception_ptr failure;
    auto worker = [&] {
      while (!stop.load()) {
        const std::size_t idx = next.fetch_add(1);
        if (idx >= total) break;
        try {
          auto cell = compute(idx);
          std::lock_guard<std::mutex> lock(mu);
          pending.emplace(idx, std::move(cell));
          for (auto it = pending.find(write_pos); it != pending.end(); it = pending.find(write_pos)) {
            sink.write(it->second);
            result.records.push_back(std::move(it->second.record));
            pending.erase(it);
            ++write_pos;
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          stop = true;
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) {
      sink.finish();
      std::rethrow_exception(failure);
    }
  }
  result.content_sha256 = sink.finish();
  return result;
}

SweepResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.model_path.empty()) throw ConfigError("model.path: missing");
  if (!fs::exists(cfg.model_path)) throw ConfigError("model.path: '" + cfg.model_path + "' not found");
  const Model model = load_model(cfg.model_path);
  const Dataset test = load_split(cfg.dataset, false);
  return run_sweep(model, test, cfg);
}

std::string sidecar_path(const std::string& records_path) { return records_path + ".json"; }
std::string histories_path(const std::string& records_path) { return records_path + ".histories.csv"; }
std::string adversarial_store_path(const std::string& records_path) { return records_path + ".adv.bin"; }

std::size_t verify_adversarial_store(const Model& model, const Dataset& test, const ExperimentConfig& cfg,
                                     const std::vector<AttackRecord>& records) {
  const std::string bytes = read_file(adversarial_store_path(cfg.output));
  const std::size_t per = shape_size(model.input_shape());
  std::size_t pos = 0;
  std::size_t checked = 0;
  std::set<std::uint64_t> seen;
  while (pos < bytes.size()) {
    std::uint64_t row = 0;
    std::uint32_t n = 0;
    if (bytes.size() - pos < sizeof row + sizeof n) throw DataError("adversarial store: truncated entry header");
    std::memcpy(&row, bytes.data() + pos, sizeof row);
    std::memcpy(&n, bytes.data() + pos + sizeof row, sizeof n);
    pos += sizeof row + sizeof n;
    if (n != per || bytes.size() - pos < n) throw DataError("adversarial store: bad entry size");
    if (row >= records.size()) throw DataError("adversarial store: row beyond records");
    const auto& r = records[row];
    if (!r.success) throw DataError("adversarial store: entry for a failed record");
    Tensor adv(model.input_shape());
    for (std::size_t i = 0; i < n; ++i) {
      adv[i] = static_cast<double>(static_cast<std::uint8_t>(bytes[pos + i])) / 255.0;
    }
    pos += n;
    const auto spec = std::find_if(cfg.attacks.begin(), cfg.attacks.end(),
                                   [&](const AttackSpec& s) { return s.name == r.attack; });
    if (spec == cfg.attacks.end()) throw DataError("adversarial store: unknown attack '" + r.attack + "'");
    const Tensor x = test.image(r.image_index);
    const EpsilonBall ball(x, r.epsilon);
    const auto goal = cell_goal(*spec, test.labels[r.image_index], r.offset_seed, r.image_index,
                                model.num_classes());
    if (!is_on_grid(adv)) throw DataError("adversarial store: row " + std::to_string(row) + " off grid");
    if (linf_distance(adv, x) > r.epsilon + 1e-9) {
      throw DataError("adversarial store: row " + std::to_string(row) + " outside the ball");
    }
    if (!goal.satisfied_by(model.predict(adv))) {
      throw DataError("adversarial store: row " + std::to_string(row) + " fails its success predicate");
    }
    seen.insert(row);
    ++checked;
  }
  const auto successes = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const AttackRecord& r) { return r.success; }));
  if (seen.size() != successes) throw DataError("adversarial store: entry count differs from successes");
  return checked;
}

std::size_t conditional_success(const std::vector<AttackRecord>& records, std::size_t image_index) {
  const AttackRecord* first = nullptr;
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.image_index != image_index) continue;
    if (!first) {
      first = &r;
    } else if (r.attack != first->attack || r.epsilon != first->epsilon) {
      throw DomainError("conditional_success: records mix attacks or epsilons");
    }
    if (r.success) ++count;
  }
  if (!first) throw DomainError("conditional_success: no records for image " + std::to_string(image_index));
  return count;
}

std::size_t conditional_success(const std::vector<AttackRecord>& records, std::size_t image_index,
                                std::string_view attack, double epsilon) {
  bool any = false;
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.image_index != image_index || r.attack != attack || r.epsilon != epsilon) continue;
    any = true;
    if (r.success) ++count;
  }
  if (!any) throw DomainError("conditional_success: no records for image " + std::to_string(image_index));
  return count;
}

namespace {

std::map<std::size_t, std::int64_t> counts_by_image(const std::vector<AttackRecord>& records,
                                                    std::string_view attack, double epsilon,
                                                    std::int64_t& trials) {
  std::map<std::size_t, std::int64_t> counts;
  std::map<std::size_t, std::int64_t> per_image_trials;
  for (const auto& r : records) {
    if (r.attack != attack || r.epsilon != epsilon) continue;
    counts[r.image_index] += r.success ? 1 : 0;
    ++per_image_trials[r.image_index];
  }
  trials = 0;
  for (const auto& [img, t] : per_image_trials) trials = std::max(trials, t);
  return counts;
}

}  // namespace

PairedSampleSet paired_counts(const std::vector<AttackRecord>& records, std::string_view attack_a,
                              std::string_view attack_b, double epsilon) {
  return paired_counts(records, attack_a, records, attack_b, epsilon);
}

PairedSampleSet paired_counts(const std::vector<AttackRecord>& records_a, std::string_view attack_a,
                              const std::vector<AttackRecord>& records_b, std::string_view attack_b,
                              double epsilon) {
  std::int64_t ta = 0;
  std::int64_t tb = 0;
  const auto ca = counts_by_image(records_a, attack_a, epsilon, ta);
  const auto cb = counts_by_image(records_b, attack_b, epsilon, tb);
  if (ca.empty() || cb.empty()) {
    throw DataError("paired counts: no records for '" + std::string(ca.empty() ? attack_a : attack_b) +
                    "' at epsilon " + format_epsilon(epsilon));
  }
  PairedSampleSet out;
  auto ib = cb.begin();
  for (auto ia = ca.begin(); ia != ca.end(); ++ia, ++ib) {
    if (ib == cb.end() || ia->first != ib->first) throw DataError("paired counts: image sets differ");
    out.a.push_back(ia->second);
    out.b.push_back(ib->second);
  }
  if (ib != cb.end()) throw DataError("paired counts: image sets differ");
  out.ceiling = std::max(ta, tb);
  return out;
}

SuccessMatrix success_matrix(const std::vector<AttackRecord>& records, double epsilon) {
  SuccessMatrix m;
  std::map<std::string, std::map<SuccessMatrix::SetKey, std::set<std::size_t>>> by_attack;
  std::set<SuccessMatrix::SetKey> keys;
  for (const auto& r : records) {
    if (r.epsilon != epsilon) continue;
    const SuccessMatrix::SetKey key{r.seed, r.offset_seed};
    keys.insert(key);
    auto& s = by_attack[r.attack][key];
    if (r.success) s.insert(r.image_index);
  }
  m.sets.assign(keys.begin(), keys.end());
  for (const auto& [name, sets] : by_attack) {
    m.attacks.push_back(name);
    auto& row = m.successes.emplace_back();
    for (const auto& key : m.sets) {
      const auto it = sets.find(key);
      if (it == sets.end()) throw DataError("success matrix: attack '" + name + "' lacks a (seed, offset) set");
      row.emplace_back(it->second.begin(), it->second.end());
    }
  }
  return m;
}

UniquenessResult uniqueness_matrix(const SuccessMatrix& m) {
  const std::size_t a = m.attacks.size();
  if (a < 2) throw DomainError("uniqueness: need at least two attacks");
  UniquenessResult u;
  u.attacks = m.attacks;
  u.set_count = m.sets.size();
  u.a_not_b.assign(a, std::vector<double>(a, 0.0));
  u.exclusive.assign(a, 0.0);
  if (u.set_count == 0) return u;
  for (std::size_t s = 0; s < m.sets.size(); ++s) {
    for (std::size_t i = 0; i < a; ++i) {
      const auto& si = m.successes[i][s];
      std::vector<std::size_t> others;
      for (std::size_t j = 0; j < a; ++j) {
        if (j == i) continue;
        const auto& sj = m.successes[j][s];
        std::vector<std::size_t> diff;
        std::set_difference(si.begin(), si.end(), sj.begin(), sj.end(), std::back_inserter(diff));
        u.a_not_b[i][j] += static_cast<double>(diff.size());
        std::vector<std::size_t> merged;
        std::set_union(others.begin(), others.end(), sj.begin(), sj.end(), std::back_inserter(merged));
        others.swap(merged);
      }
      std::vector<std::size_t> excl;
      std::set_difference(si.begin(), si.end(), others.begin(), others.end(), std::back_inserter(excl));
      u.exclusive[i] += static_cast<double>(excl.size());
    }
  }
  const auto n = static_cast<double>(u.set_count);
  for (auto& row : u.a_not_b) {
    for (double& v : row) v /= n;
  }
  for (double& v : u.exclusive) v /= n;
  return u;
}

UniquenessResult uniqueness_matrix(const std::vector<AttackRecord>& records, double epsilon) {
  return uniqueness_matrix(success_matrix(records, epsilon));
}

std::size_t fluctuation_metric(const std::vector<std::size_t>& history) {
  if (history.empty()) throw DomainError("fluctuation: empty history");
  std::map<std::size_t, std::size_t> changes;
  std::size_t best = 0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i == 0 || history[i] != history[i - 1]) best = std::max(best, ++changes[history[i]]);
  }
  return best;
}

namespace {

TimingResult summarize(std::vector<double> samples) {
  TimingResult t;
  t.samples = std::move(samples);
  const auto n = static_cast<double>(t.samples.size());
  double sum = 0.0;
  for (double s : t.samples) sum += s;
  t.mean_seconds = sum / n;
  if (t.samples.size() > 1) {
    double ss = 0.0;
    for (double s : t.samples) ss += (s - t.mean_seconds) * (s - t.mean_seconds);
    t.stddev_seconds = std::sqrt(ss / (n - 1));
  }
  return t;
}

double time_once(const std::function<void()>& batch) {
  const auto start = std::chrono::steady_clock::now();
  batch();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TimingResult measure_timing(const std::function<void()>& batch, std::size_t repetitions) {
  if (repetitions < 1) throw DomainError("timing: repetitions must be >= 1");
  batch();
  std::vector<double> samples;
  for (std::size_t r = 0; r < repetitions; ++r) samples.push_back(time_once(batch));
  return summarize(std::move(samples));
}

std::pair<TimingResult, TimingResult> measure_paired_timing(const std::function<void()>& batch_a,
                                                            const std::function<void()>& batch_b,
                                                            std::size_t repetitions) {
  if (repetitions < 1) throw DomainError("timing: repetitions must be >= 1");
  batch_a();
  batch_b();
  std::vector<double> sa, sb;
  for (std::size_t r = 0; r < repetitions; ++r) {
    // ABBA ordering
    if (r % 2 == 0) {
      sa.push_back(time_once(batch_a));
      sb.push_back(time_once(batch_b));
    } else {
      sb.push_back(time_once(batch_b));
      sa.push_back(time_once(batch_a));
    }
  }
  return {summarize(std::move(sa)), summarize(std::move(sb))};
}

std::function<void()> attack_batch(const Model& model, const Dataset& batch, const AttackSpec& spec,
                                   double epsilon, std::uint64_t seed) {
  return [&model, &batch, spec, epsilon, seed] {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto goal = cell_goal(spec, batch.labels[i], seed, i, model.num_classes());
      run_attack(model, batch.image(i), spec, goal, cell_attack_config(spec, epsilon, seed, i, true));
    }
  };
}

TimingResult measure_attack_timing(const Model& model, const Dataset& batch, const AttackSpec& spec,
                                   double epsilon, std::uint64_t seed, std::size_t repetitions) {
  return measure_timing(attack_batch(model, batch, spec, epsilon, seed), repetitions);
}

}  // namespace evadekit
