// Command-line front end: training, evaluation, threshold extraction,
// baselines, named experiments and config validation.
#include "aepam/experiments.hpp"
#include "aepam/systems.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace aepam;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Accepts a config document or a manifest.json written by `experiment`.
json load_config_json(const std::string& path) {
  json j = json::parse(read_file(path));
  if (j.is_object() && j.contains("config") && j.contains("config_hash")) j = j["config"];
  return j;
}

void emit(const json& j, const std::string& out_dir, const std::string& name) {
  std::cout << j.dump(2) << '\n';
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir);
  std::ofstream(std::filesystem::path(out_dir) / name) << j.dump(2) << '\n';
}

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  std::string grid = "desk";
};

void add_common(CLI::App* cmd, Common& c, bool with_grid) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output directory");
  if (with_grid) cmd->add_option("--grid", c.grid, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
}

// train/link sections of an optional config file, over the settings the
// experiments use for that channel
TrainConfig train_from(const Common& c, const std::string& channel) {
  TrainConfig t = default_experiment_config(channel == "memoryless" ? "fig5" : "fig8").train;
  if (!c.config.empty()) {
    const auto j = json::parse(read_file(c.config));
    if (j.contains("train")) t = train_config_from_json(j["train"], t);
  }
  t.seed = c.seed;
  return t;
}

LinkConfig link_from(const Common& c) {
  LinkConfig l;
  if (!c.config.empty()) {
    const auto j = json::parse(read_file(c.config));
    if (j.contains("link")) l = link_config_from_json(j["link"]);
  }
  return l;
}

json estimate_json(const BerEstimate& e) { return to_json(e); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aepam: autoencoder-optimized PAM over mixed thermal/ASE noise"};
  app.require_subcommand(1);

  // ------------------------------------------------------------------ train
  Common tr;
  int order = 4;
  double alpha = 0.0, snr = 18.0;
  std::string channel = "memoryless";
  double power = -13.0;
  int window = 5;
  auto* train_cmd = app.add_subcommand("train", "train an autoencoder and write a checkpoint");
  add_common(train_cmd, tr, false);
  train_cmd->add_option("--order", order, "constellation order")->check(CLI::IsMember({4, 8}));
  train_cmd->add_option("--channel", channel, "memoryless or link")->check(CLI::IsMember({"memoryless", "link"}));
  train_cmd->add_option("--alpha", alpha, "thermal share (memoryless)")->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--snr", snr, "SNR in dB (memoryless)");
  train_cmd->add_option("--power", power, "received power in dBm (link)");
  train_cmd->add_option("--window", window, "decoder window (link)")->check(CLI::PositiveNumber);

  // ------------------------------------------------------------ eval / thr
  Common ev;
  std::string checkpoint;
  std::optional<double> ev_alpha, ev_snr, ev_power;
  auto* eval_cmd = app.add_subcommand("eval", "BER of a trained checkpoint next to standard PAM");
  add_common(eval_cmd, ev, false);
  eval_cmd->add_option("checkpoint", checkpoint, "checkpoint written by train")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--alpha", ev_alpha, "override the trained alpha")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--snr", ev_snr, "override the trained SNR");
  eval_cmd->add_option("--power", ev_power, "override the trained received power");

  Common th;
  std::string th_checkpoint;
  auto* thr_cmd = app.add_subcommand("thresholds", "bisection thresholds of a W = 1 decoder");
  add_common(thr_cmd, th, false);
  thr_cmd->add_option("checkpoint", th_checkpoint, "checkpoint written by train")->required()->check(CLI::ExistingFile);

  // --------------------------------------------------------------- baseline
  Common bl;
  std::string kind = "standard";
  double bl_gain = 0.0, bl_wavelength = 1291.0;
  std::optional<double> bl_dispersion;
  auto* base_cmd = app.add_subcommand("baseline", "standard or iterative baseline levels and thresholds");
  add_common(base_cmd, bl, false);
  base_cmd->add_option("--kind", kind, "standard or iterative")->check(CLI::IsMember({"standard", "iterative"}));
  base_cmd->add_option("--order", order, "constellation order (standard)")->check(CLI::IsMember({4, 8}));
  base_cmd->add_option("--gain", bl_gain, "SOA gain in dB (iterative)");
  base_cmd->add_option("--wavelength", bl_wavelength, "wavelength in nm (iterative)");
  base_cmd->add_option("--dispersion", bl_dispersion, "ps/(nm km) for wavelengths off the CWDM grid");

  // ------------------------------------------------------------- experiment
  Common ex;
  std::string name;
  int threads = 0;
  std::string cache;
  auto* exp_cmd = app.add_subcommand("experiment", "run a named experiment");
  add_common(exp_cmd, ex, true);
  exp_cmd->add_option("name", name, "fig4|fig5|fig7|fig8|fig9|fig10|appendixB|osnr-b2b");
  exp_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  exp_cmd->add_option("--cache", cache, "checkpoint cache directory");

  // --------------------------------------------------------------- validate
  std::string validate_path;
  auto* val_cmd = app.add_subcommand("validate", "check a config file; exit 0 iff valid");
  val_cmd->add_option("--config,config", validate_path, "JSON config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto tcfg = train_from(tr, channel);
      json meta = {{"order", order}, {"channel", channel}, {"train", to_json(tcfg)}};
      TrainResult r = [&] {
        if (channel == "memoryless") {
          MemorylessChannel ch(split_noise(noise_for_snr(standard_pam(order), snr), alpha));
          meta["alpha"] = alpha;
          meta["snr_db"] = snr;
          return train(ch, order, 1, tcfg);
        }
        LinkConfig l = link_from(tr);
        l.rx_power_dbm = power;
        meta["link"] = to_json(l);
        return train_link_ae(order, window, l, tcfg);
      }();
      meta["best_validation"] = r.best_validation;
      meta["iterations"] = r.iterations;
      const std::filesystem::path dir = tr.out.empty() ? "." : tr.out;
      std::filesystem::create_directories(dir);
      save_checkpoint(dir / "model.ckpt", r.net, meta);
      json summary = meta;
      summary["constellation"] = to_json(r.extracted.constellation);
      summary["checkpoint"] = (dir / "model.ckpt").string();
      emit(summary, tr.out, "train.json");
      return 0;
    }

    if (*eval_cmd || *thr_cmd) {
      const std::string& path = *eval_cmd ? checkpoint : th_checkpoint;
      json meta;
      const Network net = load_checkpoint(path, &meta);
      const auto extracted = extract_constellation(net);
      const auto& c = extracted.constellation;
      const bool link = meta.value("channel", "memoryless") == "link";
      const LinkConfig lcfg = link ? link_config_from_json(meta["link"]) : LinkConfig{};
      auto ae_thresholds = [&](const LinkConfig* l) {
        if (net.window() != 1) throw std::runtime_error("thresholds need a W = 1 decoder");
        const auto levels = l ? link_detected_levels(c.detected_levels(), *l) : c.detected_levels();
        return bisection_thresholds(decoder_classifier(net, extracted.rank), levels);
      };
      if (*thr_cmd) {
        const auto t = ae_thresholds(link ? &lcfg : nullptr);
        const auto levels = link ? link_detected_levels(c.detected_levels(), lcfg) : c.detected_levels();
        emit({{"constellation", to_json(c)},
              {"detected_levels", levels},
              {"thresholds", to_json(t)},
              {"midpoints", to_json(midpoint_thresholds(levels))}},
             th.out, "thresholds.json");
        return 0;
      }
      BerOptions opt;
      opt.seed = ev.seed;
      json out = {{"constellation", to_json(c)}};
      if (!link) {
        const double a = ev_alpha.value_or(meta.value("alpha", 0.0));
        const double s = ev_snr.value_or(meta.value("snr_db", 18.0));
        const auto std_c = standard_pam(c.order());
        const auto std_n = split_noise(noise_for_snr(std_c, s), a);
        const auto std_t = midpoint_thresholds(std_c.detected_levels());
        const auto ae_n = split_noise(noise_for_snr(c, s), a);
        const auto t = ae_thresholds(nullptr);
        out["alpha"] = a;
        out["snr_db"] = s;
        out["thresholds"] = to_json(t);
        out["standard"] = estimate_json(estimate_ber(memoryless_threshold_runner(std_c, std_n, std_t), c.order(), opt));
        out["standard"]["ber_oracle"] = mixed_noise_ber_oracle(std_c, std_n, std_t);
        out["ae"] = estimate_json(estimate_ber(memoryless_threshold_runner(c, ae_n, t), c.order(), opt));
        out["ae"]["ber_oracle"] = mixed_noise_ber_oracle(c, ae_n, t);
      } else {
        LinkConfig l = lcfg;
        if (ev_power) l.rx_power_dbm = *ev_power;
        TrainResult tr_res{.net = net, .extracted = extracted, .loss_trace = {}, .validation_trace = {}};
        out["rx_power_dbm"] = l.rx_power_dbm;
        out["standard"] = estimate_json(evaluate_link(standard_link_system(l, 15), l, opt));
        out["ae"] = estimate_json(evaluate_link(decoder_link_system("ae", tr_res), l, opt));
      }
      emit(out, ev.out, "eval.json");
      return 0;
    }

    if (*base_cmd) {
      if (kind == "standard") {
        const auto c = standard_pam(order);
        emit({{"constellation", to_json(c)},
              {"detected_levels", c.detected_levels()},
              {"thresholds", to_json(midpoint_thresholds(c.detected_levels()))}},
             bl.out, "baseline.json");
        return 0;
      }
      LinkConfig l = link_from(bl);
      l.wavelength_nm = bl_wavelength;
      if (bl_dispersion) l.dispersion = *bl_dispersion;
      l.soa_gain_db = bl_gain;
      l.validate();
      const auto d = iterative_link_design(l, 3.6e-4, 1000000, bl.seed);
      emit({{"design_power_dbm", d.design_power_dbm},
            {"levels", d.result.levels},
            {"thresholds", to_json(d.result.thresholds)},
            {"link", to_json(d.design_config)}},
           bl.out, "baseline.json");
      return 0;
    }

    if (*exp_cmd) {
      json j = ex.config.empty() ? json::object() : load_config_json(ex.config);
      if (!name.empty()) j["experiment"] = name;
      if (!j.contains("experiment")) throw std::invalid_argument("experiment name required (argument or config)");
      if (exp_cmd->count("--grid") || !j.contains("grid")) j["grid"] = ex.grid;
      if (exp_cmd->count("--seed")) j["seed"] = ex.seed;
      if (!ex.out.empty()) j["out"] = ex.out;
      if (!cache.empty()) j["cache"] = cache;
      if (threads > 0) j["threads"] = threads;
      const auto report = validate_config_text(j.dump(2));
      if (!report.ok()) {
        std::cerr << report.format(ex.config.empty() ? "<arguments>" : ex.config);
        return 2;
      }
      const auto outcome = run_experiment(experiment_config_from_json(j));
      for (const auto& f : outcome.files) std::cout << f.string() << '\n';
      if (outcome.failures > 0) {
        std::cerr << outcome.failures << " operating point(s) failed; see " << (outcome.dir / "manifest.json").string()
                  << '\n';
        return 1;
      }
      return 0;
    }

    if (*val_cmd) {
      const auto report = validate_config_text(read_file(validate_path));
      if (report.ok()) {
        std::cout << validate_path << ": ok\n";
        return 0;
      }
      std::cerr << report.format(validate_path);
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
