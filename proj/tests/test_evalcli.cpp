#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "semadv/evalcli/cli.hpp"

using namespace semadv;
using namespace semadv::evalcli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("semadv_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

/// Ten-class 16x16 classifiers and a small procedural dataset, shared by the
/// run tests.
struct Workspace {
  fs::path root, weights, data;

  Workspace() : root(fresh_dir("ws")), weights(root / "weights"), data(root / "data") {
    fs::create_directories(weights);
    for (auto [tag, seed] : {std::pair{"t-clf", 5}, std::pair{"t-clf2", 6}}) {
      auto d = models::toy::classifier_desc(16, 10, 4, 8);
      d["tag"] = tag;
      models::Network net(d);
      net.init_random(std::uint64_t(seed));
      net.save(weights / (std::string(tag) + ".json"));
    }
    synthetic::write_dataset(data, 3, 16, 1);
  }
  ~Workspace() { fs::remove_all(root); }

  models::ModelRegistry registry() const { return models::ModelRegistry(weights, 16); }

  ExperimentConfig config(AttackKind kind, const fs::path& out) const {
    ExperimentConfig cfg;
    cfg.attack = kind;
    cfg.victim = "t-clf";
    cfg.colorizer = "toy-colorizer";
    cfg.extractor = "toy-extractor";
    cfg.transfer = {"t-clf2"};
    cfg.defenses = {"jpeg:75", "bits:4"};
    cfg.dataset = data;
    cfg.slice = {{0, 1, 2}, 2, 3};
    cfg.target_seed = 9;
    cfg.out = out;
    cfg.cadv.k = 8;
    cfg.cadv.n_hints = 10;
    cfg.cadv.max_iters = 4;
    cfg.cadv.lr = 1e-2;
    cfg.tadv.steps_per_iter = 3;
    cfg.bim.iters = 3;
    return cfg;
  }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

json strip_wallclock(json j) {
  if (j.is_object()) {
    j.erase("seconds");
    for (auto& [k, v] : j.items()) v = strip_wallclock(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_wallclock(v);
  }
  return j;
}

std::vector<double> values(const RgbImage& img) {
  const auto d = img.tensor().data();
  return {d.begin(), d.end()};
}

json read_json(const fs::path& p) { return json::parse(std::ifstream(p)); }

RgbImage flat(std::size_t size, double r, double g, double b) {
  RgbImage img(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  return img;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "semadv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST(Dataset, IndexParsingAndSlice) {
  const auto dir = fresh_dir("index");
  std::ofstream(dir / "index.txt") << "# header\na.png 0\nb.png 1 # trailing\n\nc.png 1\nd.png 2\n";
  const auto d = Dataset::open(dir);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d.entries()[1].file, "b.png");
  EXPECT_EQ(d.labels(), (std::set<std::size_t>{0, 1, 2}));
  const auto s = select_slice(d, {{1}, 2, 0});
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()), (std::set<std::size_t>{1, 2}));
  EXPECT_THROW(select_slice(d, {{0}, 2, 0}), Error);
  EXPECT_TRUE(select_slice(d, {{0, 1}, 0, 0}).empty());
  std::ofstream(dir / "bad.txt") << "a.png zero\n";
  EXPECT_THROW(Dataset::open(dir, "bad.txt"), Error);
  fs::remove_all(dir);
}

TEST(Dataset, SliceIsSeededAndPerClass) {
  const auto& ws = workspace();
  const auto d = Dataset::open(ws.data);
  const auto a = select_slice(d, {{0, 4, 7}, 2, 11});
  EXPECT_EQ(a, select_slice(d, {{0, 4, 7}, 2, 11}));
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(d.entries()[a[i]].label, (std::vector<std::size_t>{0, 4, 7})[i / 2]);
  bool differs = false;
  for (std::uint64_t seed = 12; seed < 20 && !differs; ++seed) differs = select_slice(d, {{0, 4, 7}, 2, seed}) != a;
  EXPECT_TRUE(differs);
}

TEST(Targets, RoundRobinOverOtherClasses) {
  std::vector<std::size_t> classes(10);
  std::iota(classes.begin(), classes.end(), 0);
  std::vector<std::size_t> labels;
  for (auto c : classes) labels.insert(labels.end(), {c, c});
  const auto t = assign_targets(labels, classes, 4);
  EXPECT_EQ(t, assign_targets(labels, classes, 4));
  std::map<std::size_t, std::set<std::size_t>> per_label;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_NE(t[i], labels[i]);
    per_label[labels[i]].insert(t[i]);
  }
  for (const auto& [label, targets] : per_label) EXPECT_EQ(targets.size(), 2u);  // consecutive images, consecutive classes
  // Brute force: others(y)[(r + i) mod 9] for the drawn offset r.
  std::mt19937_64 rng(4);
  const auto r = std::uniform_int_distribution<std::size_t>(0, 8)(rng);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<std::size_t> others;
    for (auto c : classes)
      if (c != labels[i]) others.push_back(c);
    EXPECT_EQ(t[i], others[(r + i) % 9]);
  }
  EXPECT_THROW(assign_targets({0}, {0}, 1), Error);
}

TEST(Synthetic, DeterministicAndQuantized) {
  const auto a = synthetic::make_images(1, 16, 3), b = synthetic::make_images(1, 16, 3);
  ASSERT_EQ(a.size(), synthetic::kClasses);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, i);
    EXPECT_EQ(values(a[i].image), values(b[i].image));
    for (double v : a[i].image.tensor().data()) EXPECT_NEAR(v * 255.0, std::round(v * 255.0), 1e-9);
  }
  EXPECT_NE(values(a[0].image), values(synthetic::make_images(1, 16, 4)[0].image));
}

TEST(Experiment, RerunIsIdenticalModuloWallClock) {
  const auto& ws = workspace();
  for (auto kind : {AttackKind::Bim, AttackKind::Cadv, AttackKind::Tadv}) {
    const auto out1 = ws.root / ("det1_" + to_string(kind)), out2 = ws.root / ("det2_" + to_string(kind));
    const auto r1 = run_experiment(ws.config(kind, out1), ws.registry());
    const auto r2 = run_experiment(ws.config(kind, out2), ws.registry());
    ASSERT_EQ(r1.records.size(), 6u);
    EXPECT_EQ(strip_wallclock(report_json(r1)), strip_wallclock(report_json(r2)));
    for (std::size_t i = 0; i < r1.records.size(); ++i) {
      const auto rec = "records/" + padded(i) + ".json";
      EXPECT_EQ(strip_wallclock(read_json(out1 / r1.name / rec)), strip_wallclock(read_json(out2 / r2.name / rec)))
          << to_string(kind) << " record " << i;
      if (!r1.records[i].failed()) {
        const auto adv = "images/" + padded(i) + "_adv.png";
        EXPECT_EQ(values(io::load_image(out1 / r1.name / adv)), values(io::load_image(out2 / r2.name / adv)));
      }
    }
  }
}

TEST(Experiment, RecordsMatchPersistedImages) {
  const auto& ws = workspace();
  const auto out = ws.root / "persist";
  const auto rep = run_experiment(ws.config(AttackKind::Bim, out), ws.registry());
  const auto clf = ws.registry().classifier("t-clf");
  const auto clf2 = ws.registry().classifier("t-clf2");
  std::size_t checked = 0;
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto j = read_json(out / rep.name / "records" / (padded(i) + ".json"));
    ASSERT_FALSE(j.contains("error")) << j.dump();
    const auto orig = io::load_image(out / rep.name / j.at("original_png").get<std::string>());
    const auto adv = io::load_image(out / rep.name / j.at("adversarial_png").get<std::string>());
    const auto n = lp_metrics(orig, adv);
    const auto stored = norms_from_json(j.at("norms"));
    EXPECT_NEAR(n.l0, stored.l0, 1.0 / 255.0);
    EXPECT_NEAR(n.l2, stored.l2, 1.0 / 255.0);
    EXPECT_NEAR(n.linf, stored.linf, 1.0 / 255.0);
    const auto label = clf.classify(adv).label;
    EXPECT_EQ(j.at("predicted").get<std::size_t>(), label);
    EXPECT_EQ(j.at("success").get<bool>(), label == j.at("target").get<std::size_t>());
    EXPECT_EQ(j.at("transfer").at("t-clf2").get<std::size_t>(), clf2.classify(adv).label);
    EXPECT_EQ(j.at("defended").at("JPEG75").get<std::size_t>(),
              clf.classify(defenses::apply_defense(defenses::DefenseSpec::jpeg(75), adv)).label);
    EXPECT_LE(n.linf, ws.config(AttackKind::Bim, out).bim.epsilon + 1.0 / 255.0);
    ++checked;
  }
  EXPECT_EQ(checked, 6u);
  // run.csv: header plus one line per image
  std::ifstream csv(out / rep.name / "run.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  EXPECT_EQ(lines, 7u);
  // load_run reproduces the aggregates
  const auto back = load_run(out / rep.name);
  EXPECT_EQ(strip_wallclock(report_json(back)), strip_wallclock(report_json(rep)));
}

TEST(Experiment, AutoNames) {
  ExperimentConfig c;
  c.victim = "v";
  c.cadv.k = 8;
  EXPECT_EQ(c.run_name(), "cAdv8_v");
  c.attack = AttackKind::Tadv;
  c.tadv.alpha = 1000;
  EXPECT_EQ(c.attack_name(), "tAdv1000");
  c.attack = AttackKind::Bim;
  EXPECT_EQ(c.attack_name(), "BIM");
  c.name = "custom";
  EXPECT_EQ(c.run_name(), "custom");
}

TEST(Experiment, ZeroImageSliceGivesEmptyReport) {
  const auto& ws = workspace();
  auto cfg = ws.config(AttackKind::Bim, ws.root / "empty_slice");
  cfg.slice.per_class = 0;
  std::vector<std::string> logs;
  const auto rep = run_experiment(cfg, ws.registry(), [&](const std::string& m) { logs.push_back(m); });
  EXPECT_EQ(rep.attempted, 0u);
  EXPECT_TRUE(rep.records.empty());
  ASSERT_FALSE(logs.empty());
  EXPECT_NE(logs.front().find("warning"), std::string::npos);
  EXPECT_TRUE(fs::exists(rep.directory / "run.json"));
}

TEST(Experiment, ConfigErrorsAbortBeforeAttacking) {
  const auto& ws = workspace();
  const auto out = ws.root / "abort";
  auto cfg = ws.config(AttackKind::Cadv, out);
  cfg.victim = "missing";
  EXPECT_THROW(run_experiment(cfg, ws.registry()), Error);
  cfg = ws.config(AttackKind::Cadv, out);
  cfg.colorizer = "t-clf";
  EXPECT_THROW(run_experiment(cfg, ws.registry()), Error);
  cfg = ws.config(AttackKind::Tadv, out);
  cfg.tadv.iters = 2;
  EXPECT_THROW(run_experiment(cfg, ws.registry()), Error);
  cfg = ws.config(AttackKind::Bim, out);
  cfg.defenses = {"jpeg:0"};
  EXPECT_THROW(run_experiment(cfg, ws.registry()), Error);
  cfg = ws.config(AttackKind::Bim, out);
  cfg.transfer = {"toy-colorizer"};
  EXPECT_THROW(run_experiment(cfg, ws.registry()), Error);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Experiment, PerImageFailuresAreRecorded) {
  const auto& ws = workspace();
  auto cfg = ws.config(AttackKind::Cadv, ws.root / "partial");
  cfg.cadv.k = 1;
  cfg.cadv.n_hints = 200;  // more hints than one cluster of a 16x16 image can hold
  const auto rep = run_experiment(cfg, ws.registry());
  EXPECT_EQ(rep.attempted, 6u);
  EXPECT_GT(rep.failed, 0u);
  for (const auto& r : rep.records)
    if (r.failed()) {
      const auto j = read_json(rep.directory / "records" / (padded(r.index) + ".json"));
      EXPECT_EQ(j.at("error").get<std::string>(), r.error);
      EXPECT_FALSE(j.at("success").get<bool>());
    }
  EXPECT_DOUBLE_EQ(rep.success_rate, 100.0 * double(rep.succeeded) / 6.0);
}

TEST(Experiment, TextureBankExcludesSlice) {
  const auto& ws = workspace();
  const auto rep = run_experiment(ws.config(AttackKind::Tadv, ws.root / "bank"), ws.registry());
  std::set<std::string> victims;
  for (const auto& r : rep.records) victims.insert(r.image);
  for (const auto& r : rep.records) {
    ASSERT_FALSE(r.failed()) << r.error;
    EXPECT_FALSE(r.source.empty());
    EXPECT_EQ(victims.count(r.source), 0u);
    ASSERT_EQ(r.result.round_stops.size(), 1u);
    if (r.result.round_stops[0] == "step_limit") EXPECT_EQ(r.result.lbfgs_steps, 3);
    else EXPECT_EQ(r.result.round_stops[0], "line_search_failure");
  }
}

TEST(Transfer, SingleModelDiagonalIsWhiteboxSuccess) {
  const auto& ws = workspace();
  const auto rep = run_experiment(ws.config(AttackKind::Bim, ws.root / "transfer"), ws.registry());
  const auto clf = ws.registry().classifier("t-clf");
  const auto clf2 = ws.registry().classifier("t-clf2");
  const auto m = transfer_matrix({{"t-clf", rep.results()}}, {{"t-clf", &clf}, {"t-clf2", &clf2}});
  ASSERT_EQ(m.cells.size(), 1u);
  EXPECT_DOUBLE_EQ(m.at("t-clf", "t-clf"), rep.success_rate);
  EXPECT_DOUBLE_EQ(m.at("t-clf", "t-clf2"), rep.transfer_success.at("t-clf2"));
  const auto one = transfer_matrix({{"t-clf", rep.results()}}, {{"t-clf", &clf}});
  EXPECT_EQ(one.cells, (std::vector<std::vector<double>>{{rep.success_rate}}));
}

TEST(Transfer, HandBuiltCellsByEnumeration) {
  // Flat red images are class 1 for the chroma probe, flat blue class 0; with
  // its boundary offset to 20 the second probe puts both in class 0.
  const auto chroma = models::toy::make_chroma_probe(8);
  const auto strict = models::toy::make_chroma_probe(8, 8.0, 8.0, 20.0);
  const auto red = flat(8, 0.9, 0.1, 0.1), blue = flat(8, 0.1, 0.1, 0.9);
  ASSERT_EQ(chroma.classify(red).label, 1u);
  ASSERT_EQ(chroma.classify(blue).label, 0u);
  ASSERT_EQ(strict.classify(red).label, 0u);
  ASSERT_EQ(strict.classify(blue).label, 0u);
  const std::vector<std::pair<RgbImage, std::size_t>> items{{red, 1}, {red, 1}, {blue, 0}, {blue, 1}};
  AttackBatch b{"toy-chroma", {}};
  for (const auto& [img, target] : items) {
    AttackResult r;
    r.original = img;
    r.adversarial = img;
    r.target = target;
    r.success = chroma.classify(img).label == target;
    b.results.push_back(r);
  }
  const auto m = transfer_matrix({b}, {{"toy-chroma", &chroma}, {"toy-strict", &strict}});
  EXPECT_DOUBLE_EQ(m.at("toy-chroma", "toy-chroma"), 75.0);  // red->1, red->1, blue->0 hit; blue->1 misses
  EXPECT_DOUBLE_EQ(m.at("toy-chroma", "toy-strict"), 25.0);      // only the target-0 image
  EXPECT_EQ(m.csv(), "source,toy-chroma,toy-strict\ntoy-chroma,75.00,25.00\n");
  b.results[3].success = true;  // inconsistent with the model
  EXPECT_THROW(transfer_matrix({b}, {{"toy-chroma", &chroma}}), Error);
  EXPECT_THROW(transfer_matrix({{"x", {}}}, {{"toy-chroma", &chroma}}), Error);
}

TEST(Report, IdenticalPairIsMidGray) {
  const auto img = synthetic::make_images(1, 8, 2)[3].image;
  const auto p = perturbation_image(img, img);
  for (double v : p.tensor().data()) EXPECT_EQ(v, 0.5);
  RgbImage hi = img;
  for (double& v : hi.tensor().data()) v = 1.0;
  const auto saturated = perturbation_image(flat(8, 0, 0, 0), hi);
  for (double v : saturated.tensor().data()) EXPECT_EQ(v, 1.0);
}

TEST(Report, EmptyDirectoryGivesEmptyTables) {
  const auto dir = fresh_dir("empty_report");
  const auto t = make_report(dir, dir / "out");
  EXPECT_TRUE(t.whitebox.empty());
  EXPECT_TRUE(t.norms.empty());
  std::ifstream in(dir / "out" / "table4.csv");
  std::string header, extra;
  std::getline(in, header);
  EXPECT_EQ(header, "attack,model,images,l0,l2,linf");
  EXPECT_FALSE(std::getline(in, extra));
  fs::remove_all(dir);
}

TEST(Report, TablesFromRuns) {
  const auto& ws = workspace();
  const auto results = ws.root / "report_runs";
  auto cfg = ws.config(AttackKind::Bim, results);
  const auto bim = run_experiment(cfg, ws.registry());
  cfg.victim = "t-clf2";
  cfg.transfer = {"t-clf"};
  run_experiment(cfg, ws.registry());
  const auto cadv = run_experiment(ws.config(AttackKind::Cadv, results), ws.registry());
  // a corrupt record in one run is skipped
  std::ofstream(results / cadv.name / "records" / "9999.json") << "{ not json";
  // an identical pair renders mid-gray
  const auto same = bim.directory / "images" / "0000_adv.png";
  fs::copy_file(bim.directory / "images" / "0000_orig.png", same, fs::copy_options::overwrite_existing);

  std::vector<std::string> warnings;
  const auto out = ws.root / "report_out";
  const auto t = make_report(results, out, [&](const std::string& m) { warnings.push_back(m); });
  EXPECT_EQ(t.skipped, 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("9999.json"), std::string::npos);
  ASSERT_EQ(t.whitebox.size(), 3u);
  EXPECT_EQ(t.whitebox[0].attack, "BIM");
  EXPECT_EQ(t.whitebox[0].model, "t-clf");
  EXPECT_EQ(t.whitebox[1].model, "t-clf2");
  EXPECT_EQ(t.whitebox[2].attack, "cAdv8");
  for (std::size_t i = 1; i < t.defense.size(); ++i)
    EXPECT_LE(std::tie(t.defense[i - 1].attack, t.defense[i - 1].model, t.defense[i - 1].defense),
              std::tie(t.defense[i].attack, t.defense[i].model, t.defense[i].defense));
  // norm rows are batch means of lp_metrics over the stored pairs
  for (const auto& row : t.norms) {
    const auto run = load_run(results / (row.attack + "_" + row.model));
    NormReport sum;
    std::size_t n = 0;
    for (const auto& r : run.records) {
      if (r.failed()) continue;
      const auto m = lp_metrics(r.result.original, r.result.adversarial);
      sum.l0 += m.l0;
      sum.l2 += m.l2;
      sum.linf += m.linf;
      ++n;
    }
    ASSERT_EQ(row.images, n);
    EXPECT_NEAR(row.mean.l0, sum.l0 / double(n), 1e-12);
    EXPECT_NEAR(row.mean.l2, sum.l2 / double(n), 1e-12);
    EXPECT_NEAR(row.mean.linf, sum.linf / double(n), 1e-12);
  }
  const auto gray = io::load_image(out / "perturbations" / bim.name / "0000.png");
  for (double v : gray.tensor().data()) EXPECT_NEAR(v, 0.5, 1.0 / 255.0);
  for (const auto* f : {"table1.csv", "table1_transfer.csv", "table3.csv", "table4.csv", "report.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  // deterministic rows
  const auto again = make_report(results);
  EXPECT_EQ(tables_json(again), tables_json(t));
}

TEST(Cli, ExitCodesAndConfigFile) {
  const auto& ws = workspace();
  const auto dir = ws.root / "cli";
  fs::create_directories(dir);
  std::string out, err;
  EXPECT_EQ(cli({"dataset", "--out", (dir / "data").string(), "--per-class", "2", "--size", "16"}, &out), 0);
  EXPECT_TRUE(fs::exists(dir / "data" / "index.txt"));

  std::ofstream(dir / "bim.ini") << "# desk run\ndataset = " << (dir / "data").string() << "\nout = "
                                 << (dir / "runs").string() << "\nvictim = t-clf\nclasses = [0, 1]\nper-class = 1\n"
                                 << "iters = 2\ndefense = [\"jpeg:75\", \"median:2\"]\n";
  EXPECT_EQ(cli({"--weights", ws.weights.string(), "-q", "--config", (dir / "bim.ini").string(), "attack", "bim"}, &out), 0);
  EXPECT_EQ(json::parse(out).at("attempted").get<int>(), 2);
  EXPECT_EQ(json::parse(out).at("defended").size(), 2u);
  const auto run = dir / "runs" / "BIM_t-clf";
  EXPECT_EQ(read_json(run / "config.json").at("bim").at("iters").get<int>(), 2);
  // flags override the file
  EXPECT_EQ(cli({"--weights", ws.weights.string(), "-q", "--config", (dir / "bim.ini").string(), "attack", "bim",
                 "--iters", "1", "--name", "override"}), 0);
  EXPECT_EQ(read_json(dir / "runs" / "override" / "config.json").at("bim").at("iters").get<int>(), 1);

  EXPECT_EQ(cli({"--weights", ws.weights.string(), "defend", "--run", run.string(), "--defense", "bits:4"}, &out), 0);
  EXPECT_TRUE(fs::exists(run / "defense.json"));
  EXPECT_EQ(cli({"--weights", ws.weights.string(), "transfer", "--run", run.string(), "--model", "t-clf2"}, &out), 0);
  EXPECT_EQ(out.rfind("source,t-clf,t-clf2\n", 0), 0u);
  EXPECT_EQ(cli({"report", "--results", (dir / "runs").string(), "--out", (dir / "rep").string()}, &out), 0);
  fs::create_directories(dir / "nothing");
  EXPECT_EQ(cli({"report", "--results", (dir / "nothing").string(), "--out", (dir / "rep2").string()}, &out, &err), 0);
  EXPECT_NE(err.find("warning"), std::string::npos);

  // configuration and usage errors
  EXPECT_NE(cli({"--weights", ws.weights.string(), "attack", "bim", "--dataset", (dir / "data").string(), "--out",
                 (dir / "runs").string(), "--victim", "nope"}, &out, &err), 0);
  EXPECT_NE(err.find("nope"), std::string::npos);
  EXPECT_NE(cli({"attack", "bim", "--dataset", (dir / "data").string()}, &out, &err), 0);
  EXPECT_NE(cli({"attack"}, &out, &err), 0);
  EXPECT_NE(cli({}, &out, &err), 0);
  std::ofstream(dir / "bad.ini") << "no_such_key = 1\n";
  EXPECT_NE(cli({"--config", (dir / "bad.ini").string(), "report", "--results", run.string(), "--out",
                 (dir / "rep3").string()}, &out, &err), 0);
  EXPECT_NE(cli({"--weights", ws.weights.string(), "attack", "tadv", "--dataset", (dir / "data").string(), "--out",
                 (dir / "runs").string(), "--victim", "t-clf", "--extractor", "toy-extractor", "--iters", "2"}, &out, &err), 0);
  EXPECT_NE(cli({"defend", "--run", (dir / "nothing").string(), "--defense", "jpeg:75"}, &out, &err), 0);
}

TEST(Cli, CaptionAttack) {
  const auto dir = fresh_dir("cli_caption");
  const auto img = synthetic::make_images(1, 16, 1)[0].image;
  io::save_png(dir / "in.png", img);
  std::string out, err;
  const int code = cli({"attack", "caption", "--image", (dir / "in.png").string(), "--captioner", "toy-captioner",
                        "--target", "1:green", "--colorizer", "toy-colorizer", "--max-iters", "3", "--lr", "0.01",
                        "--out", (dir / "o").string()}, &out, &err);
  EXPECT_EQ(code, 0) << err;
  const auto j = read_json(dir / "o" / "caption.json");
  EXPECT_TRUE(j.contains("caption"));
  EXPECT_TRUE(fs::exists(dir / "o" / "adv.png"));
  EXPECT_LE(j.at("iterations").get<int>(), 3);
  EXPECT_NE(cli({"attack", "caption", "--image", (dir / "in.png").string(), "--captioner", "toy-captioner",
                 "--target", "1:nosuchword", "--colorizer", "toy-colorizer", "--out", (dir / "o2").string()}, &out, &err), 0);
  EXPECT_NE(cli({"attack", "caption", "--image", (dir / "in.png").string(), "--captioner", "toy-captioner",
                 "--target", "1:green", "--mechanism", "tadv", "--out", (dir / "o3").string()}, &out, &err), 0);
  fs::remove_all(dir);
}
