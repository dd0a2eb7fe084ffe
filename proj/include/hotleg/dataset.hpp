#pragma once

// Scenario datasets: coordinates, inlet-velocity inputs, and the three field
// channels, plus min-max scaling, seeded splits, k-fold indexing, directory
// persistence with checksums, and delimited-table ingestion.

#include "hotleg/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hotleg {

using ordered_json = nlohmann::ordered_json;

inline constexpr std::array<const char*, 3> kParamNames = {"P", "V_o", "k"};
inline constexpr int kNumParams = 3;

// ---------------------------------------------------------------------------
// Dataset container
//
// Field tensor layout: row per scenario, columns [P(0..N-1) | V_o(..) | k(..)],
// matching the (scenario, parameter, node) ordering used everywhere else.

struct ScenarioDataset {
  Mat coords;   // N x 3  (x, y, z) in meters, model scale
  Mat inputs;   // M x n  average inlet velocity, m/s
  Mat fields;   // M x (3*N)
  ordered_json meta = ordered_json::object();

  int n_points() const { return static_cast<int>(coords.rows()); }
  int n_scenarios() const { return static_cast<int>(inputs.rows()); }
  int n_input() const { return static_cast<int>(inputs.cols()); }

  double field(int scenario, int param, int node) const {
    return fields(scenario, static_cast<Eigen::Index>(param) * n_points() + node);
  }
  auto field_block(int scenario, int param) const {
    return fields.row(scenario).segment(static_cast<Eigen::Index>(param) * n_points(),
                                        n_points());
  }
};

inline void validate_dataset(const ScenarioDataset& ds) {
  if (ds.n_points() < 1 || ds.n_scenarios() < 1) {
    throw std::invalid_argument("dataset: need at least one node and one scenario");
  }
  if (ds.coords.cols() != 3) throw shape_error("dataset: coords must be N x 3");
  if (ds.fields.rows() != ds.inputs.rows() ||
      ds.fields.cols() != static_cast<Eigen::Index>(kNumParams) * ds.n_points()) {
    throw shape_error("dataset: field tensor shape inconsistent with M, N");
  }
  if (!ds.coords.allFinite() || !ds.inputs.allFinite() || !ds.fields.allFinite()) {
    throw numeric_error("dataset: non-finite values");
  }
  std::vector<int> order(ds.n_points());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < 3; ++c) {
      if (ds.coords(a, c) != ds.coords(b, c)) return ds.coords(a, c) < ds.coords(b, c);
    }
    return false;
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (ds.coords.row(order[i]) == ds.coords.row(order[i - 1])) {
      throw std::invalid_argument("dataset: duplicate coordinate row at node " +
                                  std::to_string(order[i]));
    }
  }
}

// ---------------------------------------------------------------------------
// Min-max scaling (Eq. style: (X - min) / (max - min); linear, never clamped)

struct ChannelScale {
  double min = 0.0;
  double max = 1.0;

  double span() const { return max - min; }
  double apply(double x) const { return span() > 0.0 ? (x - min) / span() : 0.0; }
  double invert(double s) const { return span() > 0.0 ? s * span() + min : min; }
};

struct ScalerParams {
  ChannelScale input;                       // inlet velocity u
  std::array<ChannelScale, 3> field;        // P, V_o, k
  std::array<ChannelScale, 3> coord;        // x, y, z (constant axes map to 0)
  bool fitted = false;
};

/// Channel-wise min/max over the training subset only. Constant field or
/// input channels are rejected; constant coordinate axes (a planar dataset
/// has one) are recorded with min == max and scale to 0.
inline ScalerParams fit_scaler(const ScenarioDataset& ds,
                               const std::vector<int>& train_indices) {
  if (train_indices.empty()) {
    throw std::invalid_argument("fit_scaler: empty training index set");
  }
  ScalerParams p;
  auto fit_channel = [](double lo, double hi, const char* name) {
    if (!(hi > lo)) {
      throw config_error(std::string("fit_scaler: degenerate channel '") + name +
                         "' (min == max)");
    }
    return ChannelScale{lo, hi};
  };
  double ulo = std::numeric_limits<double>::infinity(), uhi = -ulo;
  std::array<double, 3> flo, fhi;
  flo.fill(std::numeric_limits<double>::infinity());
  fhi.fill(-std::numeric_limits<double>::infinity());
  for (int idx : train_indices) {
    ulo = std::min(ulo, ds.inputs.row(idx).minCoeff());
    uhi = std::max(uhi, ds.inputs.row(idx).maxCoeff());
    for (int k = 0; k < kNumParams; ++k) {
      flo[k] = std::min(flo[k], ds.field_block(idx, k).minCoeff());
      fhi[k] = std::max(fhi[k], ds.field_block(idx, k).maxCoeff());
    }
  }
  p.input = fit_channel(ulo, uhi, "u");
  for (int k = 0; k < kNumParams; ++k) {
    p.field[k] = fit_channel(flo[k], fhi[k], kParamNames[k]);
  }
  for (int c = 0; c < 3; ++c) {
    p.coord[c] = {ds.coords.col(c).minCoeff(), ds.coords.col(c).maxCoeff()};
  }
  p.fitted = true;
  return p;
}

inline Mat apply_coord_scaler(const Mat& coords, const ScalerParams& p) {
  Mat out(coords.rows(), coords.cols());
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
      out(i, c) = p.coord[c].apply(coords(i, c));
    }
  }
  return out;
}

inline ordered_json scaler_to_json(const ScalerParams& p) {
  ordered_json j;
  j["input"] = {{"min", p.input.min}, {"max", p.input.max}};
  j["fields"] = ordered_json::array();
  for (int k = 0; k < kNumParams; ++k) {
    j["fields"].push_back({{"name", kParamNames[k]},
                           {"min", p.field[k].min},
                           {"max", p.field[k].max}});
  }
  j["coords"] = ordered_json::array();
  const char* axes = "xyz";
  for (int c = 0; c < 3; ++c) {
    j["coords"].push_back({{"axis", std::string(1, axes[c])},
                           {"min", p.coord[c].min},
                           {"max", p.coord[c].max}});
  }
  return j;
}

inline ScalerParams scaler_from_json(const ordered_json& j) {
  ScalerParams p;
  p.input = {j.at("input").at("min").get<double>(),
             j.at("input").at("max").get<double>()};
  for (int k = 0; k < kNumParams; ++k) {
    const auto& f = j.at("fields").at(k);
    if (f.at("name").get<std::string>() != kParamNames[k]) {
      throw corruption_error("scaler: unexpected parameter order in header");
    }
    p.field[k] = {f.at("min").get<double>(), f.at("max").get<double>()};
  }
  for (int c = 0; c < 3; ++c) {
    const auto& a = j.at("coords").at(c);
    p.coord[c] = {a.at("min").get<double>(), a.at("max").get<double>()};
  }
  p.fitted = true;
  return p;
}

// ---------------------------------------------------------------------------
// Splits and folds

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};

/// Seeded shuffle then partition. round(M * fraction) scenarios go to train,
/// clamped so both sides are non-empty.
inline Split split_dataset(int n_scenarios, const SplitSpec& spec) {
  if (n_scenarios < 2) {
    throw std::invalid_argument("split_dataset: need at least 2 scenarios");
  }
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("split_dataset: train fraction must be in (0,1)");
  }
  std::vector<int> order(n_scenarios);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order);
  long n_train = std::lround(n_scenarios * spec.train_fraction);
  n_train = std::clamp(n_train, 1l, static_cast<long>(n_scenarios) - 1);
  Split split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.test.assign(order.begin() + n_train, order.end());
  return split;
}

struct Fold {
  std::vector<int> train;
  std::vector<int> val;
};

/// Disjoint, exhaustive validation folds with sizes differing by at most 1.
inline std::vector<Fold> kfold_indices(const std::vector<int>& train_indices,
                                       int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_indices: k must be >= 2");
  if (static_cast<int>(train_indices.size()) < k) {
    throw std::invalid_argument("kfold_indices: k exceeds index count");
  }
  std::vector<int> order = train_indices;
  Rng rng(seed);
  rng.shuffle(order);
  const int n = static_cast<int>(order.size());
  const int base = n / k, extra = n % k;
  std::vector<Fold> folds(k);
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int len = base + (f < extra ? 1 : 0);
    folds[f].val.assign(order.begin() + pos, order.begin() + pos + len);
    folds[f].train.reserve(n - len);
    folds[f].train.insert(folds[f].train.end(), order.begin(), order.begin() + pos);
    folds[f].train.insert(folds[f].train.end(), order.begin() + pos + len, order.end());
    pos += len;
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Persistence
//
// Directory layout: manifest.json + coords.f32le + inputs.f32le + fields.f32le
// (row-major little-endian float32, sha256 per blob recorded in the manifest).

inline constexpr int kDatasetFormatVersion = 1;

inline std::string dataset_checksum(const ordered_json& manifest) {
  const auto& sums = manifest.at("checksums");
  return sha256_hex(sums.at("coords").get<std::string>() +
                    sums.at("inputs").get<std::string>() +
                    sums.at("fields").get<std::string>());
}

inline void save_dataset(const ScenarioDataset& ds, const std::filesystem::path& dir) {
  validate_dataset(ds);
  std::filesystem::create_directories(dir);
  write_f32le(dir / "coords.f32le", ds.coords.data(), ds.coords.size());
  write_f32le(dir / "inputs.f32le", ds.inputs.data(), ds.inputs.size());
  write_f32le(dir / "fields.f32le", ds.fields.data(), ds.fields.size());
  ordered_json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["n_scenarios"] = ds.n_scenarios();
  manifest["n_points"] = ds.n_points();
  manifest["n_input"] = ds.n_input();
  manifest["dtype"] = "float32";
  manifest["endianness"] = "little";
  manifest["parameter_order"] = {"P", "V_o", "k"};
  manifest["units"] = {{"coords", "m"},
                       {"u", "m/s (assumed, model scale)"},
                       {"P", "Pa (assumed)"},
                       {"V_o", "m/s"},
                       {"k", "m^2/s^2"}};
  manifest["provenance"] = ds.meta;
  manifest["checksums"] = {
      {"coords", sha256_file(dir / "coords.f32le")},
      {"inputs", sha256_file(dir / "inputs.f32le")},
      {"fields", sha256_file(dir / "fields.f32le")},
  };
  manifest["dataset_sha256"] = dataset_checksum(manifest);
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline ScenarioDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw io_error("load_dataset: missing " + manifest_path.string());
  }
  ordered_json manifest = ordered_json::parse(read_text(manifest_path));
  if (manifest.at("format_version").get<int>() != kDatasetFormatVersion) {
    throw corruption_error("load_dataset: unsupported format version");
  }
  const int m = manifest.at("n_scenarios").get<int>();
  const int n = manifest.at("n_points").get<int>();
  const int ni = manifest.at("n_input").get<int>();
  for (const char* blob : {"coords", "inputs", "fields"}) {
    const auto path = dir / (std::string(blob) + ".f32le");
    if (!std::filesystem::exists(path)) {
      throw corruption_error("load_dataset: missing blob " + path.string());
    }
    const std::string expected =
        manifest.at("checksums").at(blob).get<std::string>();
    const std::string actual = sha256_file(path);
    if (actual != expected) {
      throw corruption_error("load_dataset: checksum mismatch for " + path.string());
    }
  }
  ScenarioDataset ds;
  auto fill = [](Mat& dst, int rows, int cols, const std::vector<double>& raw) {
    dst.resize(rows, cols);
    std::copy(raw.begin(), raw.end(), dst.data());
  };
  fill(ds.coords, n, 3, read_f32le(dir / "coords.f32le", static_cast<std::size_t>(n) * 3));
  fill(ds.inputs, m, ni, read_f32le(dir / "inputs.f32le", static_cast<std::size_t>(m) * ni));
  fill(ds.fields, m, 3 * n,
       read_f32le(dir / "fields.f32le", static_cast<std::size_t>(m) * 3 * n));
  ds.meta = manifest.value("provenance", ordered_json::object());
  validate_dataset(ds);
  return ds;
}

/// Sha256 identity of a persisted dataset (from its manifest).
inline std::string dataset_checksum_of_dir(const std::filesystem::path& dir) {
  ordered_json manifest = ordered_json::parse(read_text(dir / "manifest.json"));
  return manifest.at("dataset_sha256").get<std::string>();
}

// ---------------------------------------------------------------------------
// Node subsampling (canonical sort by (x,y,z), then every `stride`-th node)

inline ScenarioDataset subsample_nodes(const ScenarioDataset& ds, int stride) {
  if (stride < 1) throw std::invalid_argument("subsample_nodes: stride must be >= 1");
  const int n = ds.n_points();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < 3; ++c) {
      if (ds.coords(a, c) != ds.coords(b, c)) return ds.coords(a, c) < ds.coords(b, c);
    }
    return false;
  });
  std::vector<int> keep;
  for (int i = 0; i < n; i += stride) keep.push_back(order[i]);
  ScenarioDataset out;
  out.inputs = ds.inputs;
  out.coords.resize(keep.size(), 3);
  out.fields.resize(ds.n_scenarios(), static_cast<Eigen::Index>(kNumParams) * keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.coords.row(i) = ds.coords.row(keep[i]);
    for (int s = 0; s < ds.n_scenarios(); ++s) {
      for (int k = 0; k < kNumParams; ++k) {
        out.fields(s, static_cast<Eigen::Index>(k) * keep.size() + i) =
            ds.field(s, k, keep[i]);
      }
    }
  }
  out.meta = ds.meta;
  out.meta["subsampled"] = {{"stride", stride}, {"from_n_points", n}};
  return out;
}

// ---------------------------------------------------------------------------
// Delimited-table ingestion (CSV or TSV with a header row)

struct ColumnMap {
  std::string scenario = "scenario";
  std::string inlet_velocity = "u";
  std::string x = "x", y = "y", z = "z";
  std::string pressure = "P", velocity = "V_o", tke = "k";
};

namespace detail {
inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(cell);
  return out;
}
}  // namespace detail

/// Reads rows of (scenario id, u, x, y, z, P, V_o, k), validates that every
/// scenario shares one node set, sorts nodes canonically by (x, y, z).
inline ScenarioDataset import_table(const std::filesystem::path& path,
                                    const ColumnMap& columns = {}) {
  std::ifstream in(path);
  if (!in) throw io_error("import_table: cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw io_error("import_table: empty file");
  const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
  const auto names = detail::split_line(header, delim);
  auto col = [&](const std::string& want) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == want) return static_cast<int>(i);
    }
    throw config_error("import_table: missing column '" + want + "'");
  };
  const int c_sc = col(columns.scenario), c_u = col(columns.inlet_velocity);
  const int c_x = col(columns.x), c_y = col(columns.y), c_z = col(columns.z);
  const int c_p = col(columns.pressure), c_v = col(columns.velocity);
  const int c_k = col(columns.tke);

  struct Row {
    std::array<double, 3> xyz;
    std::array<double, 3> pvk;
  };
  std::map<std::string, std::vector<Row>> scenarios;
  std::map<std::string, double> velocity;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_line(line, delim);
    const int max_col = std::max({c_sc, c_u, c_x, c_y, c_z, c_p, c_v, c_k});
    if (static_cast<int>(cells.size()) <= max_col) {
      throw corruption_error("import_table: truncated row at line " +
                             std::to_string(line_no));
    }
    auto num = [&](int c) {
      try {
        return std::stod(cells[c]);
      } catch (const std::exception&) {
        throw corruption_error("import_table: bad number at line " +
                               std::to_string(line_no) + ", column " + names[c]);
      }
    };
    const std::string id = cells[c_sc];
    scenarios[id].push_back(
        {{num(c_x), num(c_y), num(c_z)}, {num(c_p), num(c_v), num(c_k)}});
    velocity[id] = num(c_u);
  }
  if (scenarios.empty()) throw io_error("import_table: no data rows");

  auto canonical = [](std::vector<Row>& rows) {
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.xyz < b.xyz; });
  };
  for (auto& [id, rows] : scenarios) {
    canonical(rows);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].xyz == rows[i - 1].xyz) {
        throw std::invalid_argument("import_table: duplicate coordinate in scenario '" +
                                    id + "'");
      }
    }
  }
  const auto& ref = scenarios.begin()->second;
  std::vector<std::string> offenders;
  for (const auto& [id, rows] : scenarios) {
    bool same = rows.size() == ref.size();
    for (std::size_t i = 0; same && i < rows.size(); ++i) {
      same = rows[i].xyz == ref[i].xyz;
    }
    if (!same) offenders.push_back(id);
  }
  if (!offenders.empty()) {
    std::string msg = "import_table: inconsistent node sets in scenarios:";
    for (const auto& id : offenders) msg += " '" + id + "'";
    throw corruption_error(msg);
  }

  ScenarioDataset ds;
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(scenarios.size());
  ds.coords.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    ds.coords(i, 0) = ref[i].xyz[0];
    ds.coords(i, 1) = ref[i].xyz[1];
    ds.coords(i, 2) = ref[i].xyz[2];
  }
  ds.inputs.resize(m, 1);
  ds.fields.resize(m, 3 * static_cast<Eigen::Index>(n));
  int s = 0;
  for (const auto& [id, rows] : scenarios) {
    ds.inputs(s, 0) = velocity[id];
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < kNumParams; ++k) {
        ds.fields(s, static_cast<Eigen::Index>(k) * n + i) = rows[i].pvk[k];
      }
    }
    ++s;
  }
  ds.meta = {{"source", "import"}, {"path", path.string()}};
  validate_dataset(ds);
  return ds;
}

}  // namespace hotleg
