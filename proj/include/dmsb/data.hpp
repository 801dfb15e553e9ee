#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmsb/errors.hpp"
#include "dmsb/nnet.hpp"
#include "dmsb/random.hpp"

namespace dmsb {

struct Marginal {
  double time = 0.0;
  RowMatrix<double> positions;
  std::optional<RowMatrix<double>> velocities;
  bool left_out = false;

  Eigen::Index size() const { return positions.rows(); }
};

/// Empirical position snapshots (optionally with velocities) at t_0 < ... < t_N.
struct MarginalSet {
  int dim = 0;
  std::vector<Marginal> marginals;

  int count() const { return static_cast<int>(marginals.size()); }
  int segments() const { return count() - 1; }
  bool has_velocities() const {
    for (const auto& m : marginals)
      if (!m.velocities) return false;
    return !marginals.empty();
  }

  std::vector<double> times() const {
    std::vector<double> t;
    for (const auto& m : marginals) t.push_back(m.time);
    return t;
  }

  /// Indices of marginals that take part in training.
  std::vector<int> visible() const {
    std::vector<int> idx;
    for (int i = 0; i < count(); ++i)
      if (!marginals[i].left_out) idx.push_back(i);
    return idx;
  }

  void validate() const {
    if (dim < 1) throw ConfigError("marginal set dimension must be >= 1");
    if (marginals.size() < 2) throw ConfigError("need at least two marginals");
    for (std::size_t i = 0; i < marginals.size(); ++i) {
      const auto& m = marginals[i];
      if (m.positions.cols() != dim)
        throw DimensionError("marginal " + std::to_string(i) + " has dimension " +
                             std::to_string(m.positions.cols()) + ", expected " + std::to_string(dim));
      if (m.positions.rows() == 0) throw ConfigError("marginal " + std::to_string(i) + " is empty");
      if (m.velocities && (m.velocities->rows() != m.positions.rows() || m.velocities->cols() != dim))
        throw DimensionError("velocities of marginal " + std::to_string(i) + " do not match its positions");
      if (i > 0 && !(m.time > marginals[i - 1].time))
        throw ConfigError("marginal times must be strictly increasing");
    }
  }
};

/// Marks intermediate marginal k as held out of training.
inline MarginalSet leave_out(MarginalSet set, int k) {
  if (k <= 0 || k >= set.segments())
    throw ConfigError("leave-out index " + std::to_string(k) + " must be an intermediate marginal (0 < k < " +
                      std::to_string(set.segments()) + ")");
  set.marginals[k].left_out = true;
  return set;
}

// ---------------------------------------------------------------------------
// Synthetic generators

namespace detail {

inline RowMatrix<double> sample_mixture(Eigen::Index n, const std::vector<std::pair<double, double>>& centers,
                                        double scale, Rng rng) {
  RowMatrix<double> out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = centers[rng.below(centers.size())];
    out(i, 0) = c.first + scale * rng.normal();
    out(i, 1) = c.second + scale * rng.normal();
  }
  return out;
}

inline std::vector<std::pair<double, double>> ring(int modes, double radius, double phase_deg) {
  std::vector<std::pair<double, double>> c;
  for (int k = 0; k < modes; ++k) {
    const double a = (phase_deg + 360.0 * k / modes) * std::numbers::pi / 180.0;
    c.emplace_back(radius * std::cos(a), radius * std::sin(a));
  }
  return c;
}

inline void require_positive(Eigen::Index n) {
  if (n < 1) throw ConfigError("samples per marginal must be >= 1");
}

}  // namespace detail

struct GmmLayout {
  static constexpr double kInnerRadius = 5.0;  // 4 modes on the diagonals
  static constexpr double kOuterRadius = 8.0;  // 8 modes at multiples of 45 degrees
  static constexpr double kModeScale = 0.5;

  static std::vector<std::pair<double, double>> four() { return detail::ring(4, kInnerRadius, 45.0); }
  static std::vector<std::pair<double, double>> eight() { return detail::ring(8, kOuterRadius, 0.0); }
};

/// 2-D, t = 0..4: N(0, I), 4-mode GMM, 8-mode GMM, 4-mode GMM, N(0, I).
inline MarginalSet gen_gmm(Eigen::Index n, std::uint64_t seed) {
  detail::require_positive(n);
  const Rng rng = Rng(seed).split("gmm");
  MarginalSet set{2, {}};
  const std::vector<std::pair<double, double>> origin{{0.0, 0.0}};
  const std::vector<std::pair<double, double>>* centers[] = {nullptr, nullptr, nullptr, nullptr, nullptr};
  const auto four = GmmLayout::four(), eight = GmmLayout::eight();
  centers[0] = &origin, centers[1] = &four, centers[2] = &eight, centers[3] = &four, centers[4] = &origin;
  for (int i = 0; i < 5; ++i) {
    const double scale = (i == 0 || i == 4) ? 1.0 : GmmLayout::kModeScale;
    set.marginals.push_back({static_cast<double>(i), detail::sample_mixture(n, *centers[i], scale, rng.split(i)), {}, false});
  }
  return set;
}

/// Root cluster, four branches, eight petal tips (each branch splits in two). t = 0, 1, 2.
inline MarginalSet gen_petal(Eigen::Index n, std::uint64_t seed) {
  detail::require_positive(n);
  const Rng rng = Rng(seed).split("petal");
  constexpr double kScale = 0.3;
  std::vector<std::pair<double, double>> tips;
  for (const auto& deg : {-20.0, 20.0, 70.0, 110.0, 160.0, 200.0, 250.0, 290.0}) {
    const double a = deg * std::numbers::pi / 180.0;
    tips.emplace_back(5.0 * std::cos(a), 5.0 * std::sin(a));
  }
  MarginalSet set{2, {}};
  set.marginals.push_back({0.0, detail::sample_mixture(n, {{0.0, 0.0}}, kScale, rng.split(0)), {}, false});
  set.marginals.push_back({1.0, detail::sample_mixture(n, detail::ring(4, 2.5, 0.0), kScale, rng.split(1)), {}, false});
  set.marginals.push_back({2.0, detail::sample_mixture(n, tips, kScale, rng.split(2)), {}, false});
  return set;
}

/// Four blobs walking along the upper half of a radius-4 circle. t = 0..3.
inline MarginalSet gen_semicircle(Eigen::Index n, std::uint64_t seed) {
  detail::require_positive(n);
  const Rng rng = Rng(seed).split("semicircle");
  MarginalSet set{2, {}};
  for (int i = 0; i < 4; ++i) {
    const double a = std::numbers::pi * (1.0 - i / 3.0);
    set.marginals.push_back(
        {static_cast<double>(i), detail::sample_mixture(n, {{4.0 * std::cos(a), 4.0 * std::sin(a)}}, 0.4, rng.split(i)), {}, false});
  }
  return set;
}

inline MarginalSet generate_dataset(std::string_view name, Eigen::Index n, std::uint64_t seed) {
  if (name == "gmm") return gen_gmm(n, seed);
  if (name == "petal") return gen_petal(n, seed);
  if (name == "semicircle") return gen_semicircle(n, seed);
  throw ConfigError("unknown dataset '" + std::string(name) + "' (expected gmm, petal or semicircle)");
}

// ---------------------------------------------------------------------------
// Train/test split

/// Per-marginal random split; rows keep their relative order in each part.
inline std::pair<MarginalSet, MarginalSet> train_test_split(const MarginalSet& set, double train_fraction,
                                                            std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  MarginalSet train{set.dim, {}}, test{set.dim, {}};
  const Rng rng = Rng(seed).split("split");
  for (int i = 0; i < set.count(); ++i) {
    const Marginal& m = set.marginals[i];
    const Eigen::Index n = m.size();
    std::vector<Eigen::Index> perm(n);
    for (Eigen::Index j = 0; j < n; ++j) perm[j] = j;
    Rng r = rng.split(i);
    for (Eigen::Index j = n - 1; j > 0; --j) std::swap(perm[j], perm[r.below(j + 1)]);
    const auto n_train = static_cast<Eigen::Index>(std::llround(train_fraction * n));
    std::vector<Eigen::Index> tr(perm.begin(), perm.begin() + n_train), te(perm.begin() + n_train, perm.end());
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    auto take = [&](const std::vector<Eigen::Index>& rows) {
      Marginal out{m.time, RowMatrix<double>(rows.size(), set.dim), {}, m.left_out};
      if (m.velocities) out.velocities = RowMatrix<double>(rows.size(), set.dim);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        out.positions.row(j) = m.positions.row(rows[j]);
        if (m.velocities) out.velocities->row(j) = m.velocities->row(rows[j]);
      }
      return out;
    };
    train.marginals.push_back(take(tr));
    test.marginals.push_back(take(te));
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// CSV
//
// Single file: header "t,<features...>", first column is the integer marginal index.
// Per-marginal files: header "<features...>", one file per marginal in order.
// Feature columns named "v_*" are velocities; all others are positions.

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

inline double parse_cell(std::string_view cell, const std::string& where, std::size_t line, std::size_t col) {
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [p, ec] = std::from_chars(cell.data(), end, v);
  if (cell.empty() || ec != std::errc() || p != end)
    throw ParseError(where + ":" + std::to_string(line) + ": column " + std::to_string(col + 1) +
                     " is not a number: '" + std::string(cell) + "'");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_commas(line);
    if (table.header.empty()) {
      for (auto c : cells) table.header.emplace_back(c);
      continue;
    }
    if (cells.size() != table.header.size())
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(table.header.size()) + " columns, found " + std::to_string(cells.size()));
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) row.push_back(parse_cell(cells[c], path.string(), lineno, c));
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw ParseError(path.string() + ": missing header row");
  return table;
}

struct FeatureColumns {
  std::vector<std::size_t> position, velocity;
};

inline FeatureColumns classify(const std::vector<std::string>& header, std::size_t first, const std::string& where) {
  FeatureColumns f;
  for (std::size_t c = first; c < header.size(); ++c)
    (header[c].rfind("v_", 0) == 0 ? f.velocity : f.position).push_back(c);
  if (f.position.empty()) throw ParseError(where + ": no position columns in header");
  if (!f.velocity.empty() && f.velocity.size() != f.position.size())
    throw ParseError(where + ": velocity column count differs from position column count");
  return f;
}

inline Marginal rows_to_marginal(const std::vector<const std::vector<double>*>& rows, const FeatureColumns& f,
                                 double time) {
  const auto d = static_cast<Eigen::Index>(f.position.size());
  Marginal m{time, RowMatrix<double>(rows.size(), d), {}, false};
  if (!f.velocity.empty()) m.velocities = RowMatrix<double>(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::Index j = 0; j < d; ++j) {
      m.positions(r, j) = (*rows[r])[f.position[j]];
      if (m.velocities) (*m.velocities)(r, j) = (*rows[r])[f.velocity[j]];
    }
  return m;
}

inline double time_for(const std::vector<double>& times, std::size_t i) {
  return times.empty() ? static_cast<double>(i) : times.at(i);
}

}  // namespace detail

/// Single file with a leading integer marginal-index column. `times` maps index to
/// physical time (default t_i = i).
inline MarginalSet load_csv(const std::filesystem::path& path, const std::vector<double>& times = {}) {
  const auto table = detail::read_table(path);
  const auto f = detail::classify(table.header, 1, path.string());
  std::vector<std::vector<const std::vector<double>*>> groups;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double idx = table.rows[r][0];
    if (idx < 0 || idx != std::floor(idx))
      throw ParseError(path.string() + ": row " + std::to_string(r + 2) + " has a non-integer marginal index");
    const auto k = static_cast<std::size_t>(idx);
    if (groups.size() <= k) groups.resize(k + 1);
    groups[k].push_back(&table.rows[r]);
  }
  if (!times.empty() && times.size() != groups.size())
    throw ParseError(path.string() + ": " + std::to_string(groups.size()) + " marginals but " +
                     std::to_string(times.size()) + " times configured");
  MarginalSet set{static_cast<int>(f.position.size()), {}};
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].empty()) throw ParseError(path.string() + ": marginal " + std::to_string(k) + " has no rows");
    set.marginals.push_back(detail::rows_to_marginal(groups[k], f, detail::time_for(times, k)));
  }
  set.validate();
  return set;
}

/// One file per marginal, in marginal order.
inline MarginalSet load_csv(const std::vector<std::filesystem::path>& paths, const std::vector<double>& times = {}) {
  if (paths.size() < 2) throw ConfigError("need at least two marginal files");
  if (!times.empty() && times.size() != paths.size()) throw ConfigError("marginal file count differs from time count");
  MarginalSet set;
  std::vector<std::string> first_header;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const auto table = detail::read_table(paths[k]);
    if (k == 0) {
      first_header = table.header;
    } else if (table.header != first_header) {
      throw ParseError("header of " + paths[k].string() + " does not match header of " + paths[0].string());
    }
    if (table.rows.empty()) throw ParseError(paths[k].string() + ": marginal has no rows");
    const auto f = detail::classify(table.header, 0, paths[k].string());
    std::vector<const std::vector<double>*> rows;
    for (const auto& r : table.rows) rows.push_back(&r);
    set.dim = static_cast<int>(f.position.size());
    set.marginals.push_back(detail::rows_to_marginal(rows, f, detail::time_for(times, k)));
  }
  set.validate();
  return set;
}

namespace detail {

inline void write_features_header(std::ostream& out, int dim, bool velocities) {
  for (int j = 0; j < dim; ++j) out << (j ? "," : "") << "x_" << j;
  if (velocities)
    for (int j = 0; j < dim; ++j) out << ",v_" << j;
}

inline void write_row(std::ostream& out, const Marginal& m, Eigen::Index r) {
  for (Eigen::Index j = 0; j < m.positions.cols(); ++j) out << (j ? "," : "") << m.positions(r, j);
  if (m.velocities)
    for (Eigen::Index j = 0; j < m.velocities->cols(); ++j) out << "," << (*m.velocities)(r, j);
}

}  // namespace detail

/// Single-file form readable by `load_csv(path)`.
inline void save_csv(const MarginalSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out.precision(17);
  out << "t,";
  detail::write_features_header(out, set.dim, set.has_velocities());
  out << "\n";
  for (int k = 0; k < set.count(); ++k)
    for (Eigen::Index r = 0; r < set.marginals[k].size(); ++r) {
      out << k << ",";
      detail::write_row(out, set.marginals[k], r);
      out << "\n";
    }
}

/// One file per marginal: `<dir>/<stem>_<i>.csv`. Returns the written paths.
inline std::vector<std::filesystem::path> save_csv_per_marginal(const MarginalSet& set,
                                                                const std::filesystem::path& dir,
                                                                const std::string& stem = "marginal") {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (int k = 0; k < set.count(); ++k) {
    auto p = dir / (stem + "_" + std::to_string(k) + ".csv");
    std::ofstream out(p);
    if (!out) throw ParseError("cannot write " + p.string());
    out.precision(17);
    detail::write_features_header(out, set.dim, set.has_velocities());
    out << "\n";
    for (Eigen::Index r = 0; r < set.marginals[k].size(); ++r) {
      detail::write_row(out, set.marginals[k], r);
      out << "\n";
    }
    paths.push_back(std::move(p));
  }
  return paths;
}

}  // namespace dmsb
