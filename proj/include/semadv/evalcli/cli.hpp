#pragma once

// Command-line surface. Every subcommand option can also be set from a
// key-value config file (--config), e.g. "alpha = 250" or
// "defense = [\"jpeg:75\", \"bits:4\"]"; command-line flags win.

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semadv/captioning/attack.hpp"
#include "semadv/evalcli/defend.hpp"
#include "semadv/evalcli/experiment.hpp"
#include "semadv/evalcli/report.hpp"
#include "semadv/evalcli/synthetic.hpp"
#include "semadv/evalcli/transfer.hpp"
#include "semadv/evalcli/zoo.hpp"

namespace semadv::evalcli {

namespace cli_detail {

/// Config keys without a section apply to the selected (innermost)
/// subcommand, so one flat file can drive "attack cadv".
class FlatConfig : public CLI::ConfigTOML {
 public:
  explicit FlatConfig(const CLI::App* app) : app_(app) {}
  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    auto items = CLI::ConfigTOML::from_config(in);
    std::vector<std::string> path;
    for (const CLI::App* a = app_;;) {
      const auto subs = a->get_subcommands();
      if (subs.empty()) break;
      a = subs.front();
      path.push_back(a->get_name());
    }
    for (auto& it : items)
      if (it.parents.empty()) it.parents = path;
    return items;
  }

 private:
  const CLI::App* app_;
};

struct SliceOptions {
  std::vector<std::size_t> classes;
  std::size_t per_class = 2;
  std::uint64_t seed = 0;
};

inline void add_experiment_options(CLI::App* sub, ExperimentConfig& cfg, SliceOptions& slice) {
  sub->add_option("--dataset", cfg.dataset, "Dataset directory holding index.txt")->required();
  sub->add_option("--out", cfg.out, "Output directory; the run is written to <out>/<name>")->required();
  sub->add_option("--victim", cfg.victim, "Classifier tag to attack")->required();
  sub->add_option("--name", cfg.name, "Run name (default: attack name and victim)");
  sub->add_option("--transfer", cfg.transfer, "Extra classifier tags to evaluate the adversarial images on");
  sub->add_option("--defense", cfg.defenses, "Defense specs: jpeg:Q, bits:B, median:W, nlm, robust:TAG");
  sub->add_option("--classes", slice.classes, "Class labels of the slice (default: all)");
  sub->add_option("--per-class", slice.per_class, "Images per class");
  sub->add_option("--slice-seed", slice.seed, "Seed of the per-class image draw");
  sub->add_option("--target-seed", cfg.target_seed, "Seed of the round-robin target offset");
}

}  // namespace cli_detail

/// Runs the tool; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Semantic adversarial attacks: colorization (cAdv) and texture (tAdv) attacks, defenses and reports"};
  app.set_config("--config", "", "Key-value config file; keys are option names without dashes");
  app.config_formatter(std::make_shared<cli_detail::FlatConfig>(&app));
  app.allow_config_extras(CLI::config_extras_mode::error);
  std::string weights;
  app.add_option("--weights", weights, std::string("Model weights directory (default: $") +
                                           models::ModelRegistry::kWeightsEnv + ")");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");
  app.require_subcommand(1);

  const Log log = [&](const std::string& m) {
    if (!quiet) err << m << "\n";
  };
  const Log warn = [&](const std::string& m) { err << m << "\n"; };
  std::function<int()> action;

  // attack
  auto* attack = app.add_subcommand("attack", "Run an attack over a dataset slice, or on one image for captions");
  attack->require_subcommand(1);
  attack->fallthrough();
  ExperimentConfig ecfg;
  cli_detail::SliceOptions slice;
  auto run_attack = [&] {
    ecfg.slice = {slice.classes, slice.per_class, slice.seed};
    const auto reg = models::ModelRegistry::from_env(weights);
    const auto rep = run_experiment(ecfg, reg, log);
    out << report_json(rep).dump(2) << "\n";
    return 0;
  };

  auto* cadv_cmd = attack->add_subcommand("cadv", "Colorization attack");
  cadv_cmd->fallthrough();
  cli_detail::add_experiment_options(cadv_cmd, ecfg, slice);
  cadv_cmd->add_option("--colorizer", ecfg.colorizer, "Colorizer tag")->required();
  cadv_cmd->add_option("--variant", ecfg.cadv_variant, "hints (hints and mask) or weights (colorizer weights)")
      ->check(CLI::IsMember({"hints", "weights"}));
  cadv_cmd->add_option("--k", ecfg.cadv.k, "Lowest-entropy clusters hints are drawn from");
  cadv_cmd->add_option("--hints", ecfg.cadv.n_hints, "Number of initial hints");
  cadv_cmd->add_option("--lr", ecfg.cadv.lr, "Adam learning rate");
  cadv_cmd->add_option("--conf-delta", ecfg.cadv.conf_delta, "Stop once the target probability changes by at most this");
  cadv_cmd->add_option("--max-iters", ecfg.cadv.max_iters, "Iteration cap");
  cadv_cmd->add_option("--sigma", ecfg.cadv.sigma, "AB smoothing before clustering");
  cadv_cmd->add_option("--clusters", ecfg.cadv.n_clusters, "Number of AB clusters");
  cadv_cmd->add_option("--seed", ecfg.cadv.seed, "Hint sampling seed (offset by the image index)");
  cadv_cmd->callback([&] {
    ecfg.attack = AttackKind::Cadv;
    action = run_attack;
  });

  auto* tadv_cmd = attack->add_subcommand("tadv", "Texture attack");
  tadv_cmd->fallthrough();
  cli_detail::add_experiment_options(tadv_cmd, ecfg, slice);
  std::string source = "nearest-target";
  tadv_cmd->add_option("--extractor", ecfg.extractor, "Feature extractor tag")->required();
  tadv_cmd->add_option("--bank", ecfg.bank, "Texture bank directory (default: dataset images outside the slice)");
  tadv_cmd->add_option("--alpha", ecfg.tadv.alpha, "Texture weight");
  tadv_cmd->add_option("--beta", ecfg.tadv.beta, "Cross-entropy weight");
  tadv_cmd->add_option("--iters", ecfg.tadv.iters, "L-BFGS rounds (1 or 3)");
  tadv_cmd->add_option("--steps", ecfg.tadv.steps_per_iter, "L-BFGS steps per round");
  tadv_cmd->add_option("--conf-stop", ecfg.tadv.conf_stop, "Stop between rounds above this target probability");
  tadv_cmd->add_option("--source", source, "Texture source: random, random-target or nearest-target")
      ->check(CLI::IsMember({"random", "random-target", "nearest-target"}));
  tadv_cmd->add_option("--seed", ecfg.tadv.seed, "Source selection seed (offset by the image index)");
  tadv_cmd->callback([&] {
    ecfg.attack = AttackKind::Tadv;
    ecfg.tadv.source_strategy = tadv::parse_strategy(source);
    action = run_attack;
  });

  auto* bim_cmd = attack->add_subcommand("bim", "Basic iterative method baseline");
  bim_cmd->fallthrough();
  cli_detail::add_experiment_options(bim_cmd, ecfg, slice);
  bim_cmd->add_option("--epsilon", ecfg.bim.epsilon, "L-infinity budget in [0,1] units");
  bim_cmd->add_option("--step", ecfg.bim.step, "Step size in [0,1] units");
  bim_cmd->add_option("--iters", ecfg.bim.iters, "Iterations");
  bim_cmd->callback([&] {
    ecfg.attack = AttackKind::Bim;
    action = run_attack;
  });

  auto* cap_cmd = attack->add_subcommand("caption", "Attack an image captioner on one image");
  cap_cmd->fallthrough();
  std::filesystem::path cap_image, cap_out, cap_bank;
  std::string cap_tag, cap_target, cap_mech = "cadv", cap_col, cap_ex;
  captioning::CaptionAttackConfig ccfg;
  cap_cmd->add_option("--image", cap_image, "Input image")->required()->check(CLI::ExistingFile);
  cap_cmd->add_option("--captioner", cap_tag, "Captioner tag")->required();
  cap_cmd->add_option("--target", cap_target, "\"pos:word,...\" substitutions or a full caption")->required();
  cap_cmd->add_option("--out", cap_out, "Output directory")->required();
  cap_cmd->add_option("--mechanism", cap_mech, "cadv or tadv")->check(CLI::IsMember({"cadv", "tadv"}));
  cap_cmd->add_option("--colorizer", cap_col, "Colorizer tag (cadv)");
  cap_cmd->add_option("--extractor", cap_ex, "Feature extractor tag (tadv)");
  cap_cmd->add_option("--bank", cap_bank, "Texture bank directory (tadv)");
  cap_cmd->add_option("--lr", ccfg.lr, "Adam learning rate (cadv)");
  cap_cmd->add_option("--max-iters", ccfg.max_iters, "Iteration cap");
  cap_cmd->add_option("--anchor", ccfg.anchor_weight, "Weight of the loss keeping untargeted words");
  cap_cmd->add_option("--alpha", ccfg.texture.alpha, "Texture weight (tadv)");
  cap_cmd->add_option("--beta", ccfg.texture.beta, "Caption loss weight (tadv)");
  cap_cmd->callback([&] {
    action = [&] {
      ccfg.mechanism = captioning::parse_mechanism(cap_mech);
      ccfg.validate();
      const auto reg = models::ModelRegistry::from_env(weights);
      const auto cap = reg.captioner(cap_tag);
      const auto target = captioning::CaptionTarget::parse(cap_target, cap);
      auto img = io::load_image(cap_image);
      if (img.height() != cap.preprocess().height || img.width() != cap.preprocess().width)
        img = io::quantize8(io::resize(img, cap.preprocess().height, cap.preprocess().width));
      captioning::CaptionAttackResult res;
      if (ccfg.mechanism == captioning::Mechanism::Cadv) {
        if (cap_col.empty()) throw Error("attack caption: --colorizer is required for the cadv mechanism");
        res = captioning::attack_caption_cadv(cap, reg.colorizer(cap_col), img, target, ccfg);
      } else {
        if (cap_ex.empty() || cap_bank.empty())
          throw Error("attack caption: --extractor and --bank are required for the tadv mechanism");
        const auto ex = reg.extractor(cap_ex);
        const auto bank = tadv::TextureBank::load(cap_bank);
        res = captioning::attack_caption_tadv(cap, ex, img, target, captioning::nearest_source(img, bank, ex), ccfg);
      }
      std::filesystem::create_directories(cap_out);
      io::save_png(cap_out / "orig.png", res.original);
      io::save_png(cap_out / "adv.png", io::quantize8(res.adversarial));
      json attention = json::array();
      for (const auto& a : res.attention) attention.push_back(a.data());
      json j = {{"image", cap_image.string()},
                {"captioner", cap_tag},
                {"mechanism", cap_mech},
                {"original_caption", cap.detokenize(res.original_caption)},
                {"caption", cap.detokenize(res.caption)},
                {"target", cap_target},
                {"matches", res.matches},
                {"success", res.success},
                {"norms", norms_json(res.norms)},
                {"iterations", res.iterations},
                {"stop_reason", res.stop_reason},
                {"attention", attention},
                {"seconds", res.seconds}};
      detail::write_json(cap_out / "caption.json", j);
      out << j.dump(2) << "\n";
      return 0;
    };
  });

  // defend
  auto* defend_cmd = app.add_subcommand("defend", "Evaluate stored adversarial images under defenses");
  defend_cmd->fallthrough();
  std::vector<std::filesystem::path> runs;
  std::vector<std::string> defense_specs;
  defend_cmd->add_option("--run", runs, "Run directories")->required();
  defend_cmd->add_option("--defense", defense_specs, "Defense specs: jpeg:Q, bits:B, median:W, nlm, robust:TAG")->required();
  defend_cmd->callback([&] {
    action = [&] {
      const auto reg = models::ModelRegistry::from_env(weights);
      std::vector<defenses::DefenseReport> all;
      for (const auto& r : runs) {
        auto reps = defend_run(r, defense_specs, reg, warn);
        all.insert(all.end(), reps.begin(), reps.end());
      }
      out << defenses::defense_table_csv(all);
      return 0;
    };
  });

  // transfer
  auto* transfer_cmd = app.add_subcommand("transfer", "Transferability matrix of stored runs");
  transfer_cmd->fallthrough();
  std::vector<std::string> transfer_models;
  std::filesystem::path transfer_out;
  transfer_cmd->add_option("--run", runs, "Run directories (one batch per run)")->required();
  transfer_cmd->add_option("--model", transfer_models, "Evaluation classifier tags (default: the runs' victims)");
  transfer_cmd->add_option("--out", transfer_out, "Write transfer.csv and transfer.json here");
  transfer_cmd->callback([&] {
    action = [&] {
      const auto reg = models::ModelRegistry::from_env(weights);
      std::vector<AttackBatch> batches;
      std::vector<std::string> tags;
      for (const auto& r : runs) {
        const auto run = load_run(r, warn);
        batches.push_back({run.victim, run.results()});
        if (std::find(tags.begin(), tags.end(), run.victim) == tags.end()) tags.push_back(run.victim);
      }
      for (const auto& t : transfer_models)
        if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
      std::vector<models::Classifier> loaded;
      loaded.reserve(tags.size());
      for (const auto& t : tags) loaded.push_back(reg.classifier(t));
      std::vector<NamedClassifier> named;
      for (std::size_t i = 0; i < tags.size(); ++i) named.push_back({tags[i], &loaded[i]});
      const auto m = transfer_matrix(batches, named);
      if (!transfer_out.empty()) {
        std::filesystem::create_directories(transfer_out);
        std::ofstream(transfer_out / "transfer.csv") << m.csv();
        detail::write_json(transfer_out / "transfer.json", m.to_json());
      }
      out << m.csv();
      return 0;
    };
  });

  // report
  auto* report_cmd = app.add_subcommand("report", "Tables and perturbation images from run directories");
  report_cmd->fallthrough();
  std::filesystem::path results, report_out;
  report_cmd->add_option("--results", results, "A run directory or a directory of runs")->required();
  report_cmd->add_option("--out", report_out, "Output directory")->required();
  report_cmd->callback([&] {
    action = [&] {
      const auto t = make_report(results, report_out, warn);
      if (t.whitebox.empty()) warn("warning: no runs found under " + results.string());
      out << whitebox_csv(t.whitebox);
      return 0;
    };
  });

  // zoo
  auto* zoo_cmd = app.add_subcommand("zoo", "Train the desk-scale model zoo into a weights directory");
  zoo_cmd->fallthrough();
  std::filesystem::path zoo_out;
  zoo::ZooOptions zopt;
  zoo_cmd->add_option("--out", zoo_out, "Weights directory (default: --weights or $SEMADV_WEIGHTS)");
  zoo_cmd->add_option("--size", zopt.size, "Image side");
  zoo_cmd->add_option("--per-class", zopt.train_per_class, "Training images per class");
  zoo_cmd->add_option("--seed", zopt.seed, "Training set seed");
  zoo_cmd->callback([&] {
    action = [&] {
      auto dir = zoo_out.empty() ? models::ModelRegistry::from_env(weights).weights_dir() : zoo_out;
      if (dir.empty()) throw Error("zoo: no output directory (use --out, --weights or $SEMADV_WEIGHTS)");
      const auto acc = zoo::ensure_zoo(dir, zopt, log);
      json j = {{"weights", dir.string()}, {"tags", zoo::zoo_tags()}, {"held_out_accuracy", acc}};
      out << j.dump(2) << "\n";
      return 0;
    };
  });

  // dataset
  auto* data_cmd = app.add_subcommand("dataset", "Write the procedural 10-class image set");
  data_cmd->fallthrough();
  std::filesystem::path data_out;
  std::size_t data_per_class = 10, data_size = 32;
  std::uint64_t data_seed = 0;
  data_cmd->add_option("--out", data_out, "Output directory")->required();
  data_cmd->add_option("--per-class", data_per_class, "Images per class");
  data_cmd->add_option("--size", data_size, "Image side")->check(CLI::Range(8, 1024));
  data_cmd->add_option("--seed", data_seed, "Seed");
  data_cmd->callback([&] {
    action = [&] {
      const auto d = synthetic::write_dataset(data_out, data_per_class, data_size, data_seed);
      out << d.size() << " images written to " << data_out.string() << "\n";
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    return action ? action() : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace semadv::evalcli
