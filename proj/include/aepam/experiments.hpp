#pragma once

#include "aepam/systems.hpp"
#include "json.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aepam {

enum class GridScale { kDesk, kPaper };

GridScale parse_grid_scale(const std::string& tag);
std::string to_string(GridScale g);

const std::vector<std::string>& experiment_names();

/// Everything a named experiment needs. Grids that an experiment does not use
/// are ignored.
struct ExperimentConfig {
  std::string experiment;
  GridScale grid = GridScale::kDesk;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  /// Checkpoint cache; empty means <out_dir>/cache.
  std::filesystem::path cache_dir;
  int threads = 1;

  std::vector<int> orders;
  std::vector<double> alphas;
  /// SNR grid per constellation order.
  std::map<int, std::vector<double>> snr_db;
  std::vector<double> gains_db;
  std::vector<double> lengths_km;
  std::vector<double> wavelengths_nm;
  std::vector<double> powers_dbm;
  std::vector<double> osnrs_db;
  /// ps/(nm km) for wavelengths outside the CWDM table.
  std::map<double, double> dispersion_table;

  TrainConfig train;
  LinkConfig link;
  BerOptions ber;

  /// Link sensitivity settings.
  int window = 5;
  int mmse_taps = 15;
  /// The first AE pass trains this far below the standard system's required
  /// power; later passes train at the AE's own measured requirement.
  double train_backoff_db = 3.0;
  int train_passes = 2;
  /// osnr-b2b: OSNR at which the transmitted constellation is learned.
  double design_osnr_db = 30.0;
  int histogram_bins = 120;
  long histogram_symbols = 1 << 17;

  /// Dispersion for a grid wavelength: table entry, then the CWDM table.
  std::optional<double> dispersion_for(double wavelength_nm) const;
  std::filesystem::path resolved_cache_dir() const;
};

/// Desk grids run in minutes; paper grids follow the figures and can take hours.
ExperimentConfig default_experiment_config(const std::string& name, GridScale grid = GridScale::kDesk);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Starts from the defaults of j["experiment"] at j["grid"]; throws
/// std::invalid_argument on the first problem. Use validate_config_text for
/// a full report.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// FNV-1a of the compact dump of a JSON value.
std::uint64_t config_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

struct Diagnostic {
  int line = 0;  // 1-based; 0 when no position is known
  int column = 0;
  std::string path;  // JSON pointer
  std::string message;
};

struct ValidationReport {
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
  /// One "source:line:col: path: message" line per diagnostic.
  std::string format(const std::string& source) const;
};

/// Parses and checks a config document. Every problem found is reported with
/// the line and column of the offending value.
ValidationReport validate_config_text(const std::string& text);

/// Checkpoints keyed by (config hash, seed). Existing entries are never
/// rewritten.
class CheckpointCache {
 public:
  explicit CheckpointCache(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::filesystem::path path_for(const nlohmann::json& key, std::uint64_t seed) const;
  /// Returns the cached result or trains, stores and returns a new one.
  TrainResult get_or_train(const nlohmann::json& key, std::uint64_t seed,
                           const std::function<TrainResult()>& trainer);
  int hits() const { return hits_; }
  int misses() const { return misses_; }

 private:
  std::filesystem::path dir_;
  std::atomic<int> hits_{0};
  std::atomic<int> misses_{0};
};

/// Standard + MMSE, iterative + MMSE and AE + decoder sensitivities at one
/// link operating point (cfg.rx_power_dbm is ignored).
struct LinkComparison {
  SensitivityResult standard;
  std::optional<SensitivityResult> iterative;
  SensitivityResult ae;
  std::vector<double> ae_train_power_dbm;  // one per pass
  std::vector<double> ae_levels;           // detected level powers
  std::optional<IterativeDesign> design;
  double alpha_at_standard = 0.0;  // thermal share at the standard requirement
};

struct LinkSweepOptions {
  std::vector<double> powers_dbm;
  BerOptions ber;
  TrainConfig train;
  int window = 5;
  int mmse_taps = 15;
  double train_backoff_db = 3.0;
  int train_passes = 2;
  CheckpointCache* cache = nullptr;
};

/// `design` supplies the zero-dispersion iterative construction; without it
/// the iterative system is skipped.
LinkComparison compare_link_systems(const LinkConfig& cfg, const LinkSweepOptions& opt,
                                    const IterativeDesign* design);

struct OsnrSweep {
  std::vector<double> osnr_db;
  std::vector<BerEstimate> standard;
  std::vector<BerEstimate> ae;
  std::vector<ThresholdSet> ae_thresholds;
  std::vector<double> ae_levels;
  /// OSNR at BER 1e-4, when bracketed.
  std::optional<double> standard_required_db;
  std::optional<double> ae_required_db;
};

/// Back-to-back OSNR sweep: one AE constellation learned at design_osnr_db,
/// decoder retrained per OSNR and replaced by its bisection thresholds.
OsnrSweep osnr_b2b_sweep(const LinkConfig& base, std::span<const double> osnr_db, double design_osnr_db,
                         const TrainConfig& train, const BerOptions& ber, CheckpointCache* cache);

struct ExperimentOutcome {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> files;
  int failures = 0;
};

/// Runs a named experiment into cfg.out_dir / cfg.experiment. CSV and JSON
/// bodies depend only on the config; wall time goes to manifest.json.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

}  // namespace aepam
