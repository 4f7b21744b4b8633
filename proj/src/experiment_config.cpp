#include "aepam/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace aepam {
namespace {

std::vector<double> steps(double lo, double hi, double step) {
  std::vector<double> v;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) v.push_back(lo + step * i);
  return v;
}

std::string number_key(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string pointer_escape(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

const std::set<std::string>& top_level_keys() {
  static const std::set<std::string> keys = {
      "experiment", "grid",     "seed",          "out",           "cache",           "threads",
      "orders",     "alphas",   "snr_db",        "gain_db",       "length_km",       "wavelength_nm",
      "power_dbm",  "osnr_db",  "dispersion_table", "train",     "link",            "ber",
      "window",     "mmse_taps", "train_backoff_db", "train_passes", "design_osnr_db", "histogram_bins",
      "histogram_symbols"};
  return keys;
}

bool uses(const std::string& exp, const char* what) {
  const std::string w = what;
  if (w == "orders" || w == "snr_db") return exp == "fig4" || exp == "fig5" || exp == "appendixB";
  if (w == "alphas") return exp == "fig4" || exp == "fig5" || exp == "appendixB";
  if (w == "link_grid") return exp == "fig7" || exp == "fig8" || exp == "fig9" || exp == "fig10";
  if (w == "power_dbm") return exp == "fig8" || exp == "fig9" || exp == "fig10";
  if (w == "osnr_db") return exp == "osnr-b2b";
  return false;
}

// Builds a config, recording every problem rather than stopping at the first.
class Builder {
 public:
  explicit Builder(std::vector<Diagnostic>& out) : diags_(out) {}

  void error(const std::string& path, const std::string& msg) { diags_.push_back({0, 0, path, msg}); }

  ExperimentConfig build(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (!j.is_object()) {
      error("", "config must be a JSON object");
      return cfg;
    }
    std::string name;
    if (!j.contains("experiment")) {
      error("", "missing required key 'experiment'");
    } else if (!j["experiment"].is_string()) {
      error("/experiment", "must be a string");
    } else {
      name = j["experiment"].get<std::string>();
      const auto& names = experiment_names();
      if (std::find(names.begin(), names.end(), name) == names.end()) {
        std::string all;
        for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
        error("/experiment", "unknown experiment '" + name + "' (expected one of " + all + ")");
        name.clear();
      }
    }
    GridScale grid = GridScale::kDesk;
    if (j.contains("grid")) {
      if (!j["grid"].is_string()) error("/grid", "must be \"desk\" or \"paper\"");
      else {
        try {
          grid = parse_grid_scale(j["grid"].get<std::string>());
        } catch (const std::exception& e) {
          error("/grid", e.what());
        }
      }
    }
    if (!name.empty()) cfg = default_experiment_config(name, grid);
    cfg.grid = grid;

    for (const auto& [key, _] : j.items()) {
      if (!top_level_keys().count(key)) error("/" + pointer_escape(key), "unknown key '" + key + "'");
    }

    read_uint(j, "seed", cfg.seed);
    read_int(j, "threads", cfg.threads, 1, 1024);
    read_path(j, "out", cfg.out_dir);
    read_path(j, "cache", cfg.cache_dir);

    if (j.contains("orders")) {
      cfg.orders.clear();
      each_number(j, "orders", [&](const std::string& p, const nlohmann::json& v) {
        if (!v.is_number_integer() || (v.get<int>() != 4 && v.get<int>() != 8)) error(p, "order must be 4 or 8");
        else cfg.orders.push_back(v.get<int>());
      });
    }
    read_grid(j, "alphas", cfg.alphas, [](double a) -> std::string {
      return a >= 0.0 && a <= 1.0 ? "" : "alpha must lie in [0, 1]";
    });
    if (j.contains("snr_db")) {
      const auto& s = j["snr_db"];
      if (!s.is_object()) {
        error("/snr_db", "must be an object keyed by order, e.g. {\"4\": [15, 18]}");
      } else {
        cfg.snr_db.clear();
        for (const auto& [key, val] : s.items()) {
          const std::string path = "/snr_db/" + pointer_escape(key);
          if (key != "4" && key != "8") {
            error(path, "order key must be \"4\" or \"8\"");
            continue;
          }
          auto& dst = cfg.snr_db[std::stoi(key)];
          read_grid_value(val, path, dst, [](double) { return std::string(); });
        }
      }
    }
    read_grid(j, "gain_db", cfg.gains_db, [](double g) -> std::string {
      return g >= 0.0 && g <= 40.0 ? "" : "SOA gain must lie in [0, 40] dB";
    });
    read_grid(j, "length_km", cfg.lengths_km, [](double l) -> std::string {
      return l >= 0.0 ? "" : "length must be >= 0";
    });
    read_grid(j, "power_dbm", cfg.powers_dbm, [](double) { return std::string(); });
    read_grid(j, "osnr_db", cfg.osnrs_db, [](double) { return std::string(); });

    if (j.contains("dispersion_table")) {
      const auto& t = j["dispersion_table"];
      if (!t.is_object()) {
        error("/dispersion_table", "must be an object of wavelength (nm) -> ps/(nm km)");
      } else {
        for (const auto& [key, val] : t.items()) {
          const std::string path = "/dispersion_table/" + pointer_escape(key);
          double nm = 0.0;
          std::size_t used = 0;
          try {
            nm = std::stod(key, &used);
          } catch (const std::exception&) {
            used = 0;
          }
          if (used != key.size() || !(nm > 0.0)) {
            error(path, "key must be a wavelength in nm");
            continue;
          }
          if (!val.is_number() || !std::isfinite(val.get<double>())) {
            error(path, "dispersion must be a finite number");
            continue;
          }
          cfg.dispersion_table[nm] = val.get<double>();
        }
      }
    }
    // wavelengths are checked after the table so its entries count
    if (j.contains("wavelength_nm")) {
      cfg.wavelengths_nm.clear();
      each_number(j, "wavelength_nm", [&](const std::string& p, const nlohmann::json& v) {
        const double nm = v.get<double>();
        if (!(nm > 0.0)) error(p, "wavelength must be positive");
        else cfg.wavelengths_nm.push_back(nm);
      });
    }
    for (std::size_t i = 0; i < cfg.wavelengths_nm.size(); ++i) {
      if (!cfg.dispersion_for(cfg.wavelengths_nm[i])) {
        const std::string path = j.contains("wavelength_nm") ? "/wavelength_nm/" + std::to_string(i) : "/experiment";
        error(path, "no dispersion entry for wavelength " + number_key(cfg.wavelengths_nm[i]) +
                        " nm; add it to dispersion_table");
      }
    }

    if (j.contains("train")) read_section(j["train"], "/train", to_json(TrainConfig{}), [&](const nlohmann::json& t) {
      cfg.train = train_config_from_json(t, cfg.train);
    });
    if (j.contains("link")) read_section(j["link"], "/link", to_json(LinkConfig{}), [&](const nlohmann::json& l) {
      auto link = link_config_from_json(l, cfg.link);
      if (!link.dispersion) {
        if (auto d = cfg.dispersion_for(link.wavelength_nm)) link.dispersion = *d;
      }
      link.validate();
      cfg.link = link;
    });
    if (j.contains("ber")) {
      const nlohmann::json known = {{"min_errors", 0}, {"min_symbols", 0}, {"max_symbols", 0}};
      read_section(j["ber"], "/ber", known, [&](const nlohmann::json& b) {
        if (b.contains("min_errors")) cfg.ber.min_errors = b["min_errors"].get<long>();
        if (b.contains("min_symbols")) cfg.ber.min_symbols = b["min_symbols"].get<long>();
        if (b.contains("max_symbols")) cfg.ber.max_symbols = b["max_symbols"].get<long>();
        if (cfg.ber.min_errors < 0) throw std::invalid_argument("min_errors must be >= 0");
        if (cfg.ber.min_symbols < 0) throw std::invalid_argument("min_symbols must be >= 0");
        if (cfg.ber.max_symbols < 1) throw std::invalid_argument("max_symbols must be >= 1");
      });
    }
    read_int(j, "window", cfg.window, 1, 63);
    if (j.contains("window") && cfg.window % 2 == 0) error("/window", "window must be odd");
    read_int(j, "mmse_taps", cfg.mmse_taps, 1, 255);
    if (j.contains("mmse_taps") && cfg.mmse_taps % 2 == 0) error("/mmse_taps", "mmse_taps must be odd");
    read_double(j, "train_backoff_db", cfg.train_backoff_db);
    read_int(j, "train_passes", cfg.train_passes, 1, 10);
    read_double(j, "design_osnr_db", cfg.design_osnr_db);
    read_int(j, "histogram_bins", cfg.histogram_bins, 2, 100000);
    long hs = cfg.histogram_symbols;
    if (j.contains("histogram_symbols")) {
      if (!j["histogram_symbols"].is_number_integer() || j["histogram_symbols"].get<long>() < 1000) {
        error("/histogram_symbols", "must be an integer >= 1000");
      } else {
        hs = j["histogram_symbols"].get<long>();
      }
    }
    cfg.histogram_symbols = hs;

    if (!name.empty()) require_grids(j, cfg);
    return cfg;
  }

 private:
  std::vector<Diagnostic>& diags_;

  void require_grids(const nlohmann::json& j, const ExperimentConfig& cfg) {
    const auto& e = cfg.experiment;
    auto need = [&](bool empty, const char* key) {
      if (empty) error(j.contains(key) ? std::string("/") + key : "/experiment", std::string(key) + " grid must not be empty for " + e);
    };
    if (uses(e, "orders") && e != "fig4") need(cfg.orders.empty(), "orders");
    if (uses(e, "alphas")) need(cfg.alphas.empty(), "alphas");
    if (uses(e, "snr_db")) {
      const std::vector<int> orders = e == "fig4" ? std::vector<int>{4} : cfg.orders;
      for (int m : orders) {
        auto it = cfg.snr_db.find(m);
        if (it == cfg.snr_db.end() || it->second.empty()) {
          error(j.contains("snr_db") ? "/snr_db" : "/experiment", "snr_db needs a nonempty grid for order " + std::to_string(m));
        }
      }
    }
    if (uses(e, "link_grid")) {
      need(cfg.gains_db.empty(), "gain_db");
      need(cfg.lengths_km.empty(), "length_km");
      need(cfg.wavelengths_nm.empty(), "wavelength_nm");
    }
    if (uses(e, "power_dbm")) {
      need(cfg.powers_dbm.empty(), "power_dbm");
      for (std::size_t i = 1; i < cfg.powers_dbm.size(); ++i) {
        if (!(cfg.powers_dbm[i] > cfg.powers_dbm[i - 1])) {
          error(j.contains("power_dbm") ? "/power_dbm/" + std::to_string(i) : "/power_dbm", "power grid must be strictly ascending");
          break;
        }
      }
    }
    if (uses(e, "osnr_db")) {
      need(cfg.osnrs_db.empty(), "osnr_db");
      for (std::size_t i = 1; i < cfg.osnrs_db.size(); ++i) {
        if (!(cfg.osnrs_db[i] > cfg.osnrs_db[i - 1])) {
          error(j.contains("osnr_db") ? "/osnr_db/" + std::to_string(i) : "/osnr_db", "OSNR grid must be strictly ascending");
          break;
        }
      }
    }
  }

  template <class F>
  void each_number(const nlohmann::json& j, const char* key, F&& f) {
    const std::string path = std::string("/") + key;
    const auto& v = j[key];
    if (!v.is_array()) {
      error(path, "must be an array of numbers");
      return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = path + "/" + std::to_string(i);
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) error(p, "must be a finite number");
      else f(p, v[i]);
    }
  }

  template <class Check>
  void read_grid_value(const nlohmann::json& v, const std::string& path, std::vector<double>& dst, Check&& check) {
    if (!v.is_array()) {
      error(path, "must be an array of numbers");
      return;
    }
    dst.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = path + "/" + std::to_string(i);
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        error(p, "must be a finite number");
        continue;
      }
      const double x = v[i].get<double>();
      const std::string msg = check(x);
      if (!msg.empty()) error(p, msg);
      else dst.push_back(x);
    }
  }

  template <class Check>
  void read_grid(const nlohmann::json& j, const char* key, std::vector<double>& dst, Check&& check) {
    if (j.contains(key)) read_grid_value(j[key], std::string("/") + key, dst, check);
  }

  void read_uint(const nlohmann::json& j, const char* key, std::uint64_t& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned()) error(std::string("/") + key, "must be a nonnegative integer");
    else dst = j[key].get<std::uint64_t>();
  }

  void read_int(const nlohmann::json& j, const char* key, int& dst, int lo, int hi) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    if (!v.is_number_integer() || v.get<long>() < lo || v.get<long>() > hi) {
      error(std::string("/") + key, "must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    } else {
      dst = v.get<int>();
    }
  }

  void read_double(const nlohmann::json& j, const char* key, double& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number() || !std::isfinite(j[key].get<double>())) error(std::string("/") + key, "must be a finite number");
    else dst = j[key].get<double>();
  }

  void read_path(const nlohmann::json& j, const char* key, std::filesystem::path& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) error(std::string("/") + key, "must be a string path");
    else dst = j[key].get<std::string>();
  }

  // Type-checks a nested section against the keys of `known`, then applies
  // it. A failure message naming a key is attributed to that key.
  template <class Apply>
  void read_section(const nlohmann::json& v, const std::string& path, const nlohmann::json& known, Apply&& apply) {
    if (!v.is_object()) {
      error(path, "must be an object");
      return;
    }
    bool typed = true;
    for (const auto& [key, val] : v.items()) {
      const std::string p = path + "/" + pointer_escape(key);
      if (!known.contains(key)) {
        error(p, "unknown key '" + key + "'");
        typed = false;
        continue;
      }
      const auto& ref = known[key];
      const bool ok = (ref.is_number() || ref.is_null()) ? (val.is_number() || val.is_null())
                      : ref.is_boolean()                 ? val.is_boolean()
                      : ref.is_string()                  ? val.is_string()
                                                         : true;
      if (!ok) {
        error(p, std::string("expected a ") + (ref.is_boolean() ? "boolean" : ref.is_string() ? "string" : "number"));
        typed = false;
      } else if (ref.is_number_integer() && val.is_number_float()) {
        error(p, "expected an integer");
        typed = false;
      }
    }
    if (!typed) return;
    try {
      apply(v);
    } catch (const std::exception& e) {
      const std::string msg = e.what();
      std::string where = path;
      std::size_t best = std::string::npos;
      for (const auto& [key, _] : v.items()) {
        // "wavelength" in a message names wavelength_nm
        auto at = msg.find(key);
        if (at == std::string::npos) at = msg.find(key.substr(0, key.find('_')));
        if (at != std::string::npos && (best == std::string::npos || at < best)) {
          best = at;
          where = path + "/" + pointer_escape(key);
        }
      }
      error(where, msg);
    }
  }
};

// Source positions of every value in a (syntactically valid) JSON text,
// keyed by JSON pointer. Object members map to the position of their key.
class PositionIndex {
 public:
  explicit PositionIndex(const std::string& text) : s_(text) {
    skip();
    value("");
  }
  std::pair<int, int> find(const std::string& pointer) const {
    std::string p = pointer;
    while (true) {
      auto it = pos_.find(p);
      if (it != pos_.end()) return line_col(it->second);
      if (p.empty()) return {0, 0};
      p = p.substr(0, p.rfind('/'));
    }
  }
  std::pair<int, int> line_col(std::size_t offset) const {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < s_.size(); ++i) {
      if (s_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return {line, col};
  }

 private:
  const std::string& s_;
  std::size_t i_ = 0;
  std::map<std::string, std::size_t> pos_;

  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  std::string string() {
    std::string out;
    ++i_;  // opening quote
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\') {
        out += s_[i_ + 1];
        i_ += 2;
      } else {
        out += s_[i_++];
      }
    }
    ++i_;
    return out;
  }
  void value(const std::string& path) {
    if (!pos_.count(path)) pos_[path] = i_;
    if (i_ >= s_.size()) return;
    const char c = s_[i_];
    if (c == '{') {
      ++i_;
      skip();
      while (i_ < s_.size() && s_[i_] != '}') {
        const std::size_t at = i_;
        const std::string key = string();
        const std::string child = path + "/" + pointer_escape(key);
        pos_[child] = at;
        skip();
        ++i_;  // colon
        skip();
        value(child);
        skip();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
        skip();
      }
      ++i_;
    } else if (c == '[') {
      ++i_;
      skip();
      for (int k = 0; i_ < s_.size() && s_[i_] != ']'; ++k) {
        value(path + "/" + std::to_string(k));
        skip();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
        skip();
      }
      ++i_;
    } else if (c == '"') {
      string();
    } else {
      while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != ',' && s_[i_] != '}' &&
             s_[i_] != ']') {
        ++i_;
      }
    }
  }
};

}  // namespace

GridScale parse_grid_scale(const std::string& tag) {
  if (tag == "desk") return GridScale::kDesk;
  if (tag == "paper") return GridScale::kPaper;
  throw std::invalid_argument("grid must be \"desk\" or \"paper\", got '" + tag + "'");
}

std::string to_string(GridScale g) { return g == GridScale::kDesk ? "desk" : "paper"; }

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"fig4", "fig5", "fig7", "fig8", "fig9", "fig10", "appendixB", "osnr-b2b"};
  return names;
}

std::optional<double> ExperimentConfig::dispersion_for(double wavelength_nm) const {
  for (const auto& [nm, d] : dispersion_table) {
    if (std::abs(nm - wavelength_nm) < 1e-9) return d;
  }
  return cwdm_dispersion(wavelength_nm);
}

std::filesystem::path ExperimentConfig::resolved_cache_dir() const {
  return cache_dir.empty() ? out_dir / "cache" : cache_dir;
}

ExperimentConfig default_experiment_config(const std::string& name, GridScale grid) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw std::invalid_argument("unknown experiment '" + name + "'");
  }
  const bool paper = grid == GridScale::kPaper;
  ExperimentConfig c;
  c.experiment = name;
  c.grid = grid;
  c.ber.min_errors = 100;
  c.ber.max_symbols = 500000;
  // u = 0 is a stationary point of s = u^2, so two symbols can stick together
  c.train.restarts = 3;
  // on the memoryless channel 0.05 overshoots low levels into that trap
  if (name == "fig4" || name == "fig5" || name == "appendixB") c.train.learning_rate = 0.01;
  if (name == "fig4") {
    c.orders = {4};
    c.alphas = paper ? steps(0.0, 1.0, 0.1) : std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0};
    c.snr_db = {{4, {18.0}}};
  } else if (name == "fig5") {
    c.orders = {4, 8};
    c.alphas = paper ? steps(0.0, 1.0, 0.2) : std::vector<double>{0.0, 0.5, 1.0};
    c.snr_db = {{4, paper ? steps(10.0, 22.0, 1.0) : steps(12.0, 22.0, 2.0)},
                {8, paper ? steps(16.0, 30.0, 1.0) : steps(18.0, 28.0, 2.0)}};
  } else if (name == "appendixB") {
    c.orders = {4, 8};
    c.alphas = paper ? steps(0.0, 1.0, 0.25) : std::vector<double>{0.0, 0.5, 1.0};
    c.snr_db = {{4, paper ? steps(15.0, 22.0, 1.0) : std::vector<double>{15.0, 18.0, 22.0}},
                {8, paper ? steps(22.0, 29.0, 1.0) : std::vector<double>{22.0, 25.0, 29.0}}};
  } else if (name == "fig7") {
    // 1250 nm is off the CWDM grid; standard-fibre dispersion there
    c.dispersion_table = {{1250.0, -5.93}};
    c.wavelengths_nm = {1250.0};
    c.lengths_km = {1.0};
    c.gains_db = {20.0};
    c.histogram_symbols = paper ? 1 << 20 : 1 << 17;
  } else if (name == "fig8" || name == "fig9" || name == "fig10") {
    c.powers_dbm = steps(-35.0, -5.0, paper ? 0.5 : 1.0);
    c.ber.min_errors = 100;
    c.ber.min_symbols = paper ? 500000 : 200000;
    c.ber.max_symbols = paper ? 500000 : 200000;
    if (name == "fig8") {
      c.wavelengths_nm = {1291.0};
      c.lengths_km = {1.0, 3.0};
      c.gains_db = paper ? steps(0.0, 20.0, 2.0) : std::vector<double>{0.0, 10.0, 20.0};
    } else if (name == "fig9") {
      c.wavelengths_nm = {1271.0, 1291.0, 1331.0};
      c.lengths_km = {1.0, 3.0};
      c.gains_db = paper ? steps(0.0, 20.0, 4.0) : std::vector<double>{10.0, 20.0};
    } else {
      c.wavelengths_nm = {1271.0, 1291.0, 1331.0};
      c.lengths_km = paper ? steps(0.0, 30.0, 2.0) : std::vector<double>{0.0, 2.0, 4.0};
      c.gains_db = {20.0};
    }
  } else if (name == "osnr-b2b") {
    c.osnrs_db = steps(18.0, 36.0, paper ? 1.0 : 2.0);
    c.link.soa_gain_db = 20.0;
    c.link.rx_power_dbm = -10.0;
    c.link.length_km = 0.0;
    c.train.restarts = 2;
    c.ber.min_errors = 200;
  }
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json snr = nlohmann::json::object();
  for (const auto& [m, v] : c.snr_db) snr[std::to_string(m)] = v;
  nlohmann::json table = nlohmann::json::object();
  for (const auto& [nm, d] : c.dispersion_table) table[number_key(nm)] = d;
  return {{"experiment", c.experiment},
          {"grid", to_string(c.grid)},
          {"seed", c.seed},
          {"out", c.out_dir.string()},
          {"cache", c.cache_dir.string()},
          {"threads", c.threads},
          {"orders", c.orders},
          {"alphas", c.alphas},
          {"snr_db", snr},
          {"gain_db", c.gains_db},
          {"length_km", c.lengths_km},
          {"wavelength_nm", c.wavelengths_nm},
          {"power_dbm", c.powers_dbm},
          {"osnr_db", c.osnrs_db},
          {"dispersion_table", table},
          {"train", to_json(c.train)},
          {"link", to_json(c.link)},
          {"ber", {{"min_errors", c.ber.min_errors}, {"min_symbols", c.ber.min_symbols}, {"max_symbols", c.ber.max_symbols}}},
          {"window", c.window},
          {"mmse_taps", c.mmse_taps},
          {"train_backoff_db", c.train_backoff_db},
          {"train_passes", c.train_passes},
          {"design_osnr_db", c.design_osnr_db},
          {"histogram_bins", c.histogram_bins},
          {"histogram_symbols", c.histogram_symbols}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  std::vector<Diagnostic> diags;
  auto cfg = Builder(diags).build(j);
  if (!diags.empty()) {
    const auto& d = diags.front();
    throw std::invalid_argument("config " + (d.path.empty() ? std::string("/") : d.path) + ": " + d.message);
  }
  return cfg;
}

std::uint64_t config_hash(const nlohmann::json& j) {
  const std::string dump = j.dump();
  return fnv1a64(dump.data(), dump.size());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string ValidationReport::format(const std::string& source) const {
  std::ostringstream os;
  for (const auto& d : diagnostics) {
    os << source << ':' << d.line << ':' << d.column << ": " << (d.path.empty() ? "/" : d.path) << ": " << d.message
       << '\n';
  }
  return os.str();
}

ValidationReport validate_config_text(const std::string& text) {
  ValidationReport report;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    PositionIndex none("null");
    // byte is one past the offending character
    int line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    const auto at = msg.find("syntax error");
    report.diagnostics.push_back({line, col, "", at == std::string::npos ? msg : msg.substr(at)});
    return report;
  }
  Builder(report.diagnostics).build(j);
  const PositionIndex index(text);
  for (auto& d : report.diagnostics) {
    const auto [line, col] = index.find(d.path);
    d.line = line;
    d.column = col;
  }
  return report;
}

}  // namespace aepam
