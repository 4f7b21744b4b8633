#pragma once

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aepam {

/// Which physical quantity is equispaced when building a standard PAM alphabet.
enum class PamDomain { kField, kIntensity };

PamDomain parse_pam_domain(const std::string& tag);
std::string to_string(PamDomain domain);

/// Reflected Gray code words for an M-ary alphabet, M in {4, 8}.
std::vector<unsigned> gray_codes(int order);
/// Gray labels rendered as bit strings, most significant bit first.
std::vector<std::string> gray_map(int order);

int bits_per_symbol(int order);

/// Scales levels so the mean of their squares is one. Order is preserved.
/// Throws std::invalid_argument on empty, negative, non-finite or all-zero input.
std::vector<double> normalize_levels(std::span<const double> levels);

struct Moments {
  double es2 = 0.0;  // E[s^2]
  double es4 = 0.0;  // E[s^4]
};

/// Moments of equiprobable levels.
Moments moments(std::span<const double> levels);

/// Ordered PAM field-amplitude alphabet with Gray labels, unit mean-square.
///
/// Detected (post-photodiode) levels are the squares of the stored amplitudes.
class Constellation {
 public:
  /// Normalizes `levels` and validates: order 4 or 8, nonnegative, strictly
  /// ascending after normalization.
  static Constellation from_levels(std::span<const double> levels);

  int order() const { return static_cast<int>(levels_.size()); }
  const std::vector<double>& levels() const { return levels_; }
  std::vector<double> detected_levels() const;
  const std::vector<unsigned>& codes() const { return codes_; }
  std::vector<std::string> labels() const { return gray_map(order()); }
  Moments moments() const { return aepam::moments(levels_); }

  friend bool operator==(const Constellation&, const Constellation&) = default;

 private:
  Constellation(std::vector<double> levels, std::vector<unsigned> codes)
      : levels_(std::move(levels)), codes_(std::move(codes)) {}

  std::vector<double> levels_;
  std::vector<unsigned> codes_;
};

/// Equispaced alphabet in the chosen domain. With `er_floor`, the lowest
/// power equals er_floor times the highest power.
Constellation standard_pam(int order, PamDomain domain = PamDomain::kIntensity,
                           std::optional<double> er_floor = std::nullopt);

nlohmann::json to_json(const Constellation& c);
Constellation constellation_from_json(const nlohmann::json& j);

}  // namespace aepam
