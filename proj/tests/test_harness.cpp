#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "evadekit/digest.hpp"
#include "evadekit/error.hpp"
#include "evadekit/harness.hpp"
#include "evadekit/rng.hpp"
#include "fixtures.hpp"

using namespace evadekit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

std::string scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "evadekit_harness_test";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  for (const auto& suffix : {"", ".json", ".histories.csv", ".adv.bin"}) fs::remove(p.string() + suffix);
  return p.string();
}

ExperimentConfig small_sweep(std::size_t images, std::size_t iterations) {
  ExperimentConfig cfg;
  AttackConfig ac;
  ac.n_iterations = iterations;
  cfg.attacks = {make_attack_spec(AttackKind::cgd, {}, {}, ac),
                 make_attack_spec(AttackKind::apgd, LossId::md, {}, ac)};
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.epsilons = {16.0 / 255.0};
  cfg.image_count = images;
  return cfg;
}

AttackRecord rec(std::size_t image, const std::string& attack, std::uint64_t seed, bool success,
                 std::uint64_t offset_seed = 0, double eps = 8.0 / 255.0) {
  AttackRecord r;
  r.image_index = image;
  r.attack = attack;
  r.seed = seed;
  r.offset_seed = offset_seed;
  r.epsilon = eps;
  r.success = success;
  r.iterations = 7;
  return r;
}

// Line-aligned prefix of `text` holding the header plus `rows` lines.
std::size_t prefix_bytes(const std::string& text, std::size_t rows) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i <= rows; ++i) pos = text.find('\n', pos) + 1;
  return pos;
}

}  // namespace

TEST_CASE("target offset examples") {
  CHECK(offset_from_uniform(0.0, 10) == 1);
  CHECK(offset_from_uniform(1.0 - 1e-9, 10) == 9);
  CHECK(offset_from_uniform(0.5, 2) == 1);
  CHECK_THROWS_AS(offset_from_uniform(0.3, 1), DomainError);
  CHECK_THROWS_AS(target_offset(1, 0, 1), DomainError);
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < 500; ++i) {
    const std::size_t o = target_offset(42, i, 10);
    CHECK(o == target_offset(42, i, 10));
    CHECK((o >= 1 && o <= 9));
    seen.insert(o);
    for (std::size_t y = 0; y < 10; ++y) CHECK(target_class(y, 42, i, 10) != y);
  }
  CHECK(seen.size() == 9);
  // the offset is the image_index-th uniform of the seeded stream
  CHECK(target_offset(7, 13, 10) ==
        static_cast<std::size_t>(std::floor(CounterRng(7).uniform_at(13) * 9)) + 1);
}

TEST_CASE("attack specs and names") {
  CHECK(make_attack_spec(AttackKind::cgd).name == "cgd");
  CHECK(make_attack_spec(AttackKind::cgd_untargeted).loss == LossId::cw_star);
  CHECK(make_attack_spec(AttackKind::apgd, LossId::cw).name == "apgd-cw");
  CHECK(make_attack_spec(AttackKind::apgd, LossId::cw_star, AttackMode::untargeted).name == "apgd-cw_star-u");
  CHECK_THROWS_AS(make_attack_spec(AttackKind::cgd, LossId::cw), DomainError);
  CHECK(parse_attack_kind(attack_kind_name(AttackKind::apgd)) == AttackKind::apgd);
  CHECK_THROWS_AS(parse_attack_kind("fgsm"), DomainError);
}

TEST_CASE("record CSV round trip") {
  CHECK(parse_epsilon("8/255") == 8.0 / 255.0);
  CHECK(parse_epsilon(format_epsilon(16.0 / 255.0)) == 16.0 / 255.0);
  CHECK_THROWS_AS(parse_epsilon("8/0"), FormatError);
  CounterRng rng(3);
  std::vector<AttackRecord> rs;
  for (int i = 0; i < 200; ++i) {
    AttackRecord r = rec(rng.below(1000), i % 2 ? "cgd" : "apgd-md", rng.next_u64(), rng.below(2),
                         rng.next_u64(), rng.uniform());
    r.loss = i % 2 ? LossId::md : LossId::cw;
    r.iterations = rng.below(101);
    r.elapsed_us = static_cast<std::int64_t>(rng.below(1u << 30));
    CHECK(record_from_csv(record_to_csv(r)) == r);
    rs.push_back(r);
  }
  const std::string path = scratch("roundtrip.csv");
  write_records(path, rs);
  CHECK(read_records(path) == rs);
  CHECK_THROWS_AS(record_from_csv("1,cgd,md,0,0"), FormatError);
  CHECK_THROWS_AS(record_from_csv("1,cgd,md,0,0,0.1,2,5,0"), FormatError);
  spit(path, "wrong,header\n");
  CHECK_THROWS_AS(read_records(path), FormatError);
}

TEST_CASE("sweep cardinality and order") {
  const auto& d = fixture::desk();
  ExperimentConfig one = small_sweep(1, 10);
  one.attacks.resize(1);
  one.seeds = {0};
  const SweepResult r = run_sweep(d.model, d.test, one);
  CHECK(r.records.size() == 1);

  ExperimentConfig cfg = small_sweep(3, 10);
  cfg.seeds = {5, 6};
  cfg.target_offset_seeds = {0, 1};
  cfg.epsilons = {4.0 / 255.0, 8.0 / 255.0};
  const SweepResult all = run_sweep(d.model, d.test, cfg);
  REQUIRE(all.records.size() == sweep_cell_count(cfg, 3));
  CHECK(all.records.size() == 2 * 2 * 2 * 2 * 3);
  std::set<std::tuple<std::size_t, std::string, std::uint64_t, std::uint64_t, double>> tuples;
  for (const auto& x : all.records) tuples.insert({x.image_index, x.attack, x.seed, x.offset_seed, x.epsilon});
  CHECK(tuples.size() == all.records.size());
  // epsilon > offset seed > seed > attack > image
  CHECK(all.records[0].image_index == 0);
  CHECK(all.records[1].image_index == 1);
  CHECK(all.records[3].attack == cfg.attacks[1].name);
  CHECK(all.records[6].seed == 6);
  CHECK(all.records[12].offset_seed == 1);
  CHECK(all.records[24].epsilon == 8.0 / 255.0);
}

TEST_CASE("sweep totals match standalone attack calls") {
  const auto& d = fixture::desk();
  const ExperimentConfig cfg = small_sweep(100, 30);
  const SweepResult sweep = run_sweep(d.model, d.test, cfg);
  std::size_t cgd_sweep = 0, apgd_sweep = 0;
  for (const auto& r : sweep.records) (r.attack == "cgd" ? cgd_sweep : apgd_sweep) += r.success;

  std::size_t cgd_alone = 0, apgd_alone = 0;
  const double eps = cfg.epsilons[0];
  for (std::uint64_t seed : cfg.seeds)
    for (std::size_t i = 0; i < 100; ++i) {
      const std::size_t y = d.test.labels[i];
      const std::size_t offset =
          static_cast<std::size_t>(std::floor(CounterRng(0).uniform_at(i) * 9.0)) + 1;
      const std::size_t t = (y + offset) % 10;
      AttackConfig ac;
      ac.n_iterations = 30;
      ac.epsilon = eps;
      ac.seed = CounterRng::derive(seed, i);
      cgd_alone += run_cgd(d.model, d.test.image(i), t, ac).success;
      apgd_alone += run_apgd_lite(d.model, d.test.image(i), LossId::md, AttackGoal::targeted(t, y), ac).success;
    }
  MESSAGE("cgd " << cgd_sweep << " apgd-md " << apgd_sweep << " of 500");
  CHECK(cgd_sweep == cgd_alone);
  CHECK(apgd_sweep == apgd_alone);
  CHECK(cgd_sweep > 0);

  // conservation: conditional success summed over images equals the total
  std::size_t summed = 0;
  for (std::size_t i = 0; i < 100; ++i) summed += conditional_success(sweep.records, i, "cgd", eps);
  CHECK(summed == cgd_sweep);
}

TEST_CASE("persisted sweeps are byte-identical and thread-independent") {
  const auto& d = fixture::desk();
  ExperimentConfig cfg = small_sweep(20, 20);
  cfg.output = scratch("a.csv");
  cfg.checkpoint_rows = 7;
  const SweepResult a = run_sweep(d.model, d.test, cfg);
  const std::string bytes = slurp(cfg.output);
  CHECK(sha256_hex(bytes) == a.content_sha256);
  auto stripped = a.records;
  for (auto& x : stripped) x.history_digest.clear();
  CHECK(read_records(cfg.output) == stripped);
  const auto meta = nlohmann::json::parse(slurp(sidecar_path(cfg.output)));
  CHECK(meta.at("complete").get<bool>());
  CHECK(meta.at("rows").get<std::size_t>() == a.records.size());

  ExperimentConfig again = cfg;
  again.output = scratch("b.csv");
  again.threads = 3;
  const SweepResult b = run_sweep(d.model, d.test, again);
  CHECK(b.content_sha256 == a.content_sha256);
  CHECK(slurp(again.output) == bytes);
  CHECK(slurp(histories_path(again.output)) == slurp(histories_path(cfg.output)));

  // a completed file replays without recomputation
  const SweepResult replay = run_sweep(d.model, d.test, cfg);
  CHECK(replay.resumed_rows == a.records.size());
  CHECK(slurp(cfg.output) == bytes);
}

TEST_CASE("partial output resumes from its checkpoint and refuses tampering") {
  const auto& d = fixture::desk();
  ExperimentConfig cfg = small_sweep(10, 20);
  cfg.output = scratch("full.csv");
  const SweepResult full = run_sweep(d.model, d.test, cfg);
  const std::string csv = slurp(cfg.output);
  const std::string hist = slurp(histories_path(cfg.output));
  auto meta = nlohmann::json::parse(slurp(sidecar_path(cfg.output)));

  // state of a run that crashed after checkpointing 37 rows and writing 3 more
  const std::size_t kept = 37;
  const std::size_t csv_cut = prefix_bytes(csv, kept), hist_cut = prefix_bytes(hist, kept);
  meta["rows"] = kept;
  meta["complete"] = false;
  meta["csv_bytes"] = csv_cut;
  meta["csv_sha256"] = sha256_hex(csv.substr(0, csv_cut));
  meta["histories_bytes"] = hist_cut;
  meta["histories_sha256"] = sha256_hex(hist.substr(0, hist_cut));
  const std::string partial_csv = csv.substr(0, prefix_bytes(csv, kept + 3));
  const std::string partial_hist = hist.substr(0, prefix_bytes(hist, kept + 3));
  auto stage = [&](const std::string& c) {
    spit(cfg.output, c);
    spit(histories_path(cfg.output), partial_hist);
    spit(sidecar_path(cfg.output), meta.dump(2));
  };

  stage(partial_csv);
  const SweepResult resumed = run_sweep(d.model, d.test, cfg);
  CHECK(resumed.resumed_rows == kept);
  CHECK(resumed.records == full.records);
  CHECK(slurp(cfg.output) == csv);
  CHECK(slurp(histories_path(cfg.output)) == hist);

  std::string tampered = partial_csv;
  tampered[csv_cut - 5] = tampered[csv_cut - 5] == '0' ? '1' : '0';
  stage(tampered);
  CHECK_THROWS_AS(run_sweep(d.model, d.test, cfg), DataError);

  stage(partial_csv);
  ExperimentConfig changed = cfg;
  changed.seeds = {0, 1, 2};
  CHECK_THROWS_AS(run_sweep(d.model, d.test, changed), DataError);

  fs::remove(sidecar_path(cfg.output));
  CHECK_THROWS_AS(run_sweep(d.model, d.test, cfg), DataError);
}

TEST_CASE("adversarial store re-verifies on reload") {
  const auto& d = fixture::desk();
  ExperimentConfig cfg = small_sweep(30, 30);
  cfg.output = scratch("adv.csv");
  cfg.store_adversarial = true;
  const SweepResult r = run_sweep(d.model, d.test, cfg);
  std::size_t successes = 0;
  for (const auto& x : r.records) successes += x.success;
  REQUIRE(successes > 0);
  CHECK(verify_adversarial_store(d.model, d.test, cfg, read_records(cfg.output)) == successes);

  std::string store = slurp(adversarial_store_path(cfg.output));
  store[12 + 5] = static_cast<char>(static_cast<unsigned char>(store[12 + 5]) ^ 0x80);
  spit(adversarial_store_path(cfg.output), store);
  CHECK_THROWS_AS(verify_adversarial_store(d.model, d.test, cfg, r.records), DataError);
}

TEST_CASE("conditional success examples") {
  std::vector<AttackRecord> none, all, mixed;
  for (std::uint64_t s = 0; s < 5; ++s) none.push_back(rec(4, "cgd", s, false));
  CHECK(conditional_success(none, 4) == 0);
  for (std::uint64_t s = 0; s < 5; ++s)
    for (std::uint64_t o = 0; o < 4; ++o) all.push_back(rec(4, "cgd", s, true, o));
  CHECK(conditional_success(all, 4) == 20);
  const bool pattern[] = {true, false, true, true, false};
  std::size_t hand = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    mixed.push_back(rec(9, "cgd", s, pattern[s]));
    mixed.push_back(rec(3, "cgd", s, true));
    hand += pattern[s];
  }
  CHECK(conditional_success(mixed, 9) == 3);
  CHECK(hand == 3);
  CHECK_THROWS_AS(conditional_success(mixed, 100), DomainError);
  mixed.push_back(rec(9, "apgd-md", 0, true));
  CHECK_THROWS_AS(conditional_success(mixed, 9), DomainError);
  CHECK(conditional_success(mixed, 9, "cgd", 8.0 / 255.0) == 3);
}

TEST_CASE("paired counts line up images") {
  std::vector<AttackRecord> rs;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::uint64_t s = 0; s < 3; ++s) {
      rs.push_back(rec(i, "cgd", s, (i + s) % 2 == 0));
      rs.push_back(rec(i, "apgd-md", s, i == 0));
    }
  const PairedSampleSet p = paired_counts(rs, "cgd", "apgd-md", 8.0 / 255.0);
  CHECK(p.a == std::vector<std::int64_t>{2, 1, 2, 1});
  CHECK(p.b == std::vector<std::int64_t>{3, 0, 0, 0});
  rs.push_back(rec(7, "cgd", 0, true));
  CHECK_THROWS_AS(paired_counts(rs, "cgd", "apgd-md", 8.0 / 255.0), DataError);
}

TEST_CASE("uniqueness examples and set algebra") {
  auto records_for = [](const std::vector<std::vector<std::size_t>>& sets, std::size_t n) {
    std::vector<AttackRecord> rs;
    for (std::size_t a = 0; a < sets.size(); ++a)
      for (std::size_t i = 0; i < n; ++i) {
        const bool hit = std::find(sets[a].begin(), sets[a].end(), i) != sets[a].end();
        rs.push_back(rec(i, "atk" + std::to_string(a), 0, hit));
      }
    return rs;
  };
  const double eps = 8.0 / 255.0;
  const auto same = uniqueness_matrix(records_for({{1, 2, 3}, {1, 2, 3}}, 6), eps);
  CHECK(same.a_not_b[0][1] == 0.0);
  CHECK(same.a_not_b[1][0] == 0.0);
  const auto disjoint = uniqueness_matrix(records_for({{0, 1, 2}, {3, 4}}, 6), eps);
  CHECK(disjoint.a_not_b[0][1] == 3.0);
  CHECK(disjoint.a_not_b[1][0] == 2.0);
  CHECK_THROWS_AS(uniqueness_matrix(records_for({{0}}, 3), eps), DomainError);

  // random fixtures against brute-force set algebra, averaged over sets
  CounterRng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + rng.below(20), attacks = 3;
    std::vector<AttackRecord> rs;
    std::vector<std::vector<std::vector<bool>>> hit(attacks, std::vector<std::vector<bool>>(2, std::vector<bool>(n)));
    for (std::uint64_t s = 0; s < 2; ++s)
      for (std::size_t a = 0; a < attacks; ++a)
        for (std::size_t i = 0; i < n; ++i) {
          hit[a][s][i] = rng.below(3) == 0;
          rs.push_back(rec(i, "atk" + std::to_string(a), s, hit[a][s][i]));
        }
    const auto u = uniqueness_matrix(rs, eps);
    REQUIRE(u.set_count == 2);
    for (std::size_t a = 0; a < attacks; ++a) {
      double excl = 0, size_a = 0;
      for (std::uint64_t s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < n; ++i) {
          bool other = false;
          for (std::size_t b = 0; b < attacks; ++b) other = other || (b != a && hit[b][s][i]);
          excl += hit[a][s][i] && !other;
          size_a += hit[a][s][i];
        }
      CHECK(u.exclusive[a] == doctest::Approx(excl / 2));
      for (std::size_t b = 0; b < attacks; ++b) {
        double diff = 0, size_b = 0;
        for (std::uint64_t s = 0; s < 2; ++s)
          for (std::size_t i = 0; i < n; ++i) {
            diff += hit[a][s][i] && !hit[b][s][i];
            size_b += hit[b][s][i];
          }
        CHECK(u.a_not_b[a][b] == doctest::Approx(diff / 2));
        CHECK(u.a_not_b[a][b] - u.a_not_b[b][a] == doctest::Approx((size_a - size_b) / 2));
      }
    }
  }
}

TEST_CASE("fluctuation examples") {
  CHECK(fluctuation_metric({8, 9, 8, 9}) == 2);
  CHECK(fluctuation_metric({5, 5, 5}) == 1);
  CHECK(fluctuation_metric({1, 2, 3, 2, 2, 4, 2}) == 3);
  CHECK_THROWS_AS(fluctuation_metric({}), DomainError);
}

TEST_CASE("timing examples") {
  int calls = 0;
  const TimingResult one = measure_timing([&] { ++calls; }, 1);
  CHECK(calls == 2);
  CHECK(one.samples.size() == 1);
  CHECK(one.stddev_seconds == 0.0);
  const TimingResult five = measure_timing([&] { ++calls; }, 5);
  CHECK(five.samples.size() == 5);
  CHECK(five.mean_seconds >= 0.0);

  const auto& d = fixture::desk();
  const Dataset batch = subset(d.test, 0, 10);
  AttackConfig ac;
  ac.n_iterations = 40;
  const AttackSpec base = make_attack_spec(AttackKind::cgd, {}, {}, ac);
  ac.n_iterations = 80;
  const AttackSpec twice = make_attack_spec(AttackKind::cgd, {}, {}, ac);
  const TimingResult t1 = measure_attack_timing(d.model, batch, base, 8.0 / 255.0, 0, 3);
  CHECK(t1.samples.size() == 3);
  CHECK(t1.mean_seconds > 0.0);

  // interleaved pair: order alternates, one warm-up each
  std::string order;
  const auto [pa, pb] = measure_paired_timing([&] { order += 'a'; }, [&] { order += 'b'; }, 4);
  CHECK(order == "ababbaabba");
  CHECK(pa.samples.size() == 4);
  CHECK(pb.samples.size() == 4);
  const auto [q1, q2] = measure_paired_timing(attack_batch(d.model, batch, base, 8.0 / 255.0, 0),
                                              attack_batch(d.model, batch, twice, 8.0 / 255.0, 0), 6);
  // sequential blocks drift with host load; the interleaved ratio is stable
  MESSAGE("interleaved doubling ratio " << q2.mean_seconds / q1.mean_seconds);
  CHECK(q2.mean_seconds / q1.mean_seconds >= 1.6);
  CHECK(q2.mean_seconds / q1.mean_seconds <= 2.4);
}

TEST_CASE("experiment config validation") {
  ExperimentConfig cfg = small_sweep(1, 10);
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.warnings().empty());
  cfg.epsilons = {0.05};
  CHECK(cfg.warnings().size() == 1);
  cfg.attacks.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_sweep(1, 10);
  cfg.attacks[1].name = "cgd";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_sweep(1, 10);
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
