#include "ccgm/datagen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ccgm::data {

namespace {

using diff::Matrix;

// Independent streams derived from one user seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kSampleStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kFeatureStream = 3;
constexpr std::uint64_t kSplitStream = 4;
constexpr std::uint64_t kPerturbStream = 5;

}  // namespace

void ConceptDataset::validate() const {
  if (features.rows() != labels.rows()) {
    throw std::invalid_argument("dataset: features have " + std::to_string(features.rows()) +
                                " rows but labels have " + std::to_string(labels.rows()));
  }
  if (concept_names.size() != labels.cols()) {
    throw std::invalid_argument("dataset: " + std::to_string(concept_names.size()) +
                                " names for " + std::to_string(labels.cols()) + " label columns");
  }
  std::set<std::string> seen;
  for (const auto& n : concept_names) {
    if (!seen.insert(n).second) throw std::invalid_argument("dataset: duplicate name " + n);
  }
  for (double v : labels.values()) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("dataset: label outside {0,1}");
  }
  if (!features.all_finite()) throw std::invalid_argument("dataset: non-finite feature");
  if (ground_truth_graph) {
    for (const auto& e : *ground_truth_graph) {
      if (e.parent >= labels.cols() || e.child >= labels.cols()) {
        throw std::invalid_argument("dataset: ground-truth edge references unknown column");
      }
    }
  }
}

ConceptDataset ConceptDataset::subset(std::span<const std::size_t> rows) const {
  ConceptDataset out;
  out.features = diff::take_rows(features, rows);
  out.labels = diff::take_rows(labels, rows);
  out.concept_names = concept_names;
  out.ground_truth_graph = ground_truth_graph;
  out.seed = seed;
  out.generator = generator;
  return out;
}

std::size_t ConceptDataset::index_of(const std::string& name) const {
  auto it = std::find(concept_names.begin(), concept_names.end(), name);
  if (it == concept_names.end()) throw std::invalid_argument("unknown variable: " + name);
  return static_cast<std::size_t>(it - concept_names.begin());
}

std::string edge_string(const std::vector<std::string>& names, const LabelEdge& e) {
  return names.at(e.parent) + "->" + names.at(e.child);
}

ConceptDataset gen_checkmark(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("gen_checkmark: n must be at least 1");
  auto rng = stream(seed, kSampleStream);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  ConceptDataset ds;
  ds.features = Matrix(n, 3);
  ds.labels = Matrix(n, 4);
  for (std::size_t r = 0; r < n; ++r) {
    const double a = unif(rng);
    const double b = unif(rng);
    const double c = -b;
    ds.features(r, 0) = a;
    ds.features(r, 1) = b;
    ds.features(r, 2) = c;
    const bool va = a > 0.0;
    const bool vb = b > 0.0;
    const bool vc = c > 0.0;
    ds.labels(r, 0) = va;
    ds.labels(r, 1) = vb;
    ds.labels(r, 2) = vc;
    ds.labels(r, 3) = va && vc;
  }
  ds.concept_names = {"a", "b", "c", "d"};
  ds.ground_truth_graph = std::vector<LabelEdge>{{1, 2}, {0, 3}, {1, 3}};
  ds.seed = seed;
  ds.generator = {{"name", "checkmark"}, {"n", n}};
  return ds;
}

int StructuralEquation::evaluate(std::span<const int> values, int noise) const {
  std::size_t index = 0;
  for (std::size_t q = 0; q < parents.size(); ++q) {
    if (values[parents[q]] != 0) index |= std::size_t{1} << q;
  }
  if (noise != 0) index |= std::size_t{1} << parents.size();
  return table.at(index);
}

StructuralEquation root_equation(double p) {
  return StructuralEquation{{}, {0, 1}, p};
}

StructuralEquation deterministic_equation(std::vector<std::size_t> parents,
                                          int (*rule)(std::span<const int>)) {
  StructuralEquation eq;
  eq.parents = std::move(parents);
  eq.noise_prob = 0.0;
  const std::size_t combos = std::size_t{1} << eq.parents.size();
  eq.table.resize(combos * 2);
  std::vector<int> vals(eq.parents.size());
  for (std::size_t idx = 0; idx < combos; ++idx) {
    for (std::size_t q = 0; q < vals.size(); ++q) vals[q] = static_cast<int>((idx >> q) & 1U);
    const int v = rule(vals) != 0 ? 1 : 0;
    eq.table[idx] = v;
    eq.table[idx + combos] = v;
  }
  return eq;
}

void GroundTruthScm::validate() const {
  if (variables.size() != equations.size()) {
    throw std::invalid_argument("scm: one equation per variable required");
  }
  for (std::size_t i = 0; i < equations.size(); ++i) {
    const auto& eq = equations[i];
    if (eq.noise_prob < 0.0 || eq.noise_prob > 1.0) {
      throw std::invalid_argument("scm: noise probability outside [0,1] for " + variables[i]);
    }
    if (eq.table.size() != (std::size_t{1} << (eq.parents.size() + 1))) {
      throw std::invalid_argument("scm: truth table has wrong size for " + variables[i]);
    }
    for (std::size_t p : eq.parents) {
      if (p >= variables.size()) throw std::invalid_argument("scm: unknown parent index");
    }
  }
  (void)ancestral_order();
}

std::vector<std::size_t> GroundTruthScm::ancestral_order() const {
  const std::size_t k = variables.size();
  std::vector<std::size_t> indegree(k, 0);
  std::vector<std::vector<std::size_t>> children(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t p : equations[i].parents) {
      children[p].push_back(i);
      ++indegree[i];
    }
  }
  std::vector<std::size_t> order;
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < k; ++i)
    if (indegree[i] == 0) ready.insert(i);
  while (!ready.empty()) {
    const std::size_t v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (std::size_t c : children[v])
      if (--indegree[c] == 0) ready.insert(c);
  }
  if (order.size() != k) throw std::invalid_argument("scm: parent relation is cyclic");
  return order;
}

std::vector<LabelEdge> GroundTruthScm::edges() const {
  std::vector<LabelEdge> out;
  for (std::size_t i = 0; i < equations.size(); ++i)
    for (std::size_t p : equations[i].parents) out.push_back({p, i});
  return out;
}

GroundTruthScm dsprites_lite_scm() {
  GroundTruthScm scm;
  scm.variables = {"shape", "size", "vertical", "horizontal", "colour", "label"};
  // heart on the right => large; otherwise a fair coin.
  StructuralEquation size;
  size.parents = {0, 3};
  size.noise_prob = 0.5;
  size.table.resize(8);
  for (std::size_t idx = 0; idx < 8; ++idx) {
    const bool heart = idx & 1U;
    const bool right = idx & 2U;
    const bool noise = idx & 4U;
    size.table[idx] = (heart && right) || noise;
  }
  // heart at the top => red; otherwise a fair coin.
  StructuralEquation colour;
  colour.parents = {0, 2};
  colour.noise_prob = 0.5;
  colour.table.resize(8);
  for (std::size_t idx = 0; idx < 8; ++idx) {
    const bool heart = idx & 1U;
    const bool top = idx & 2U;
    const bool noise = idx & 4U;
    colour.table[idx] = (heart && top) || noise;
  }
  scm.equations = {
      root_equation(0.5),
      size,
      root_equation(0.5),
      root_equation(0.5),
      colour,
      deterministic_equation({4, 1}, [](std::span<const int> v) { return v[0] & v[1]; }),
  };
  scm.nuisance_dims = 2;
  scm.value_jitter = 0.5;
  return scm;
}

ConceptDataset gen_scm_dataset(const GroundTruthScm& scm, std::size_t n, std::uint64_t seed,
                               double label_noise) {
  scm.validate();
  if (label_noise < 0.0 || label_noise >= 0.5) {
    throw std::invalid_argument("gen_scm_dataset: label_noise must be in [0, 0.5)");
  }
  const std::size_t k = scm.variables.size();
  const auto order = scm.ancestral_order();
  auto sample_rng = stream(seed, kSampleStream);
  auto noise_rng = stream(seed, kNoiseStream);
  auto feature_rng = stream(seed, kFeatureStream);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ConceptDataset ds;
  ds.features = Matrix(n, k + scm.nuisance_dims);
  ds.labels = Matrix(n, k);
  std::vector<int> values(k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t v : order) {
      const auto& eq = scm.equations[v];
      const int noise = unif(sample_rng) < eq.noise_prob ? 1 : 0;
      values[v] = eq.evaluate(values, noise);
    }
    for (std::size_t v = 0; v < k; ++v) {
      ds.features(r, v) = 2.0 * values[v] - 1.0 + scm.value_jitter * gauss(feature_rng);
    }
    for (std::size_t q = 0; q < scm.nuisance_dims; ++q) ds.features(r, k + q) = gauss(feature_rng);
    for (std::size_t v = 0; v < k; ++v) {
      const bool flip = unif(noise_rng) < label_noise;
      ds.labels(r, v) = flip ? 1 - values[v] : values[v];
    }
  }
  ds.concept_names = scm.variables;
  ds.ground_truth_graph = scm.edges();
  ds.seed = seed;
  ds.generator = {{"name", "scm"},
                  {"n", n},
                  {"label_noise", label_noise},
                  {"nuisance_dims", scm.nuisance_dims},
                  {"value_jitter", scm.value_jitter}};
  return ds;
}

ConceptDataset gen_incompleteness(std::size_t n, std::uint64_t seed, double ratio,
                                  std::size_t factors) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("gen_incompleteness: ratio must be in [0, 1)");
  }
  if (factors == 0) throw std::invalid_argument("gen_incompleteness: need at least one factor");
  const auto exposed = static_cast<std::size_t>(
      std::ceil((1.0 - ratio) * static_cast<double>(factors) - 1e-9));
  const std::size_t d = 2 * factors;

  // Mixing matrix and task weights depend on the seed only, never on the ratio.
  auto feature_rng = stream(seed, kFeatureStream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix mixing(factors, d);
  for (double& w : mixing.values()) w = gauss(feature_rng) / std::sqrt(static_cast<double>(factors));
  std::vector<double> task_w(factors);
  for (double& w : task_w) w = gauss(feature_rng);

  auto sample_rng = stream(seed, kSampleStream);
  auto noise_rng = stream(seed, kNoiseStream);
  std::bernoulli_distribution coin(0.5);

  ConceptDataset ds;
  ds.features = Matrix(n, d);
  ds.labels = Matrix(n, exposed + 1);
  std::vector<double> z(factors);
  for (std::size_t r = 0; r < n; ++r) {
    double score = 0.0;
    for (std::size_t f = 0; f < factors; ++f) {
      const int bit = coin(sample_rng) ? 1 : 0;
      z[f] = 2.0 * bit - 1.0;
      score += task_w[f] * z[f];
      if (f < exposed) ds.labels(r, f) = bit;
    }
    ds.labels(r, exposed) = score > 0.0 ? 1.0 : 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t f = 0; f < factors; ++f) acc += z[f] * mixing(f, j);
      ds.features(r, j) = acc + 0.1 * gauss(noise_rng);
    }
  }
  for (std::size_t f = 0; f < exposed; ++f) ds.concept_names.push_back("z" + std::to_string(f));
  ds.concept_names.push_back("y");
  std::vector<LabelEdge> gt;
  for (std::size_t f = 0; f < exposed; ++f) gt.push_back({f, exposed});
  ds.ground_truth_graph = gt;
  ds.seed = seed;
  ds.generator = {{"name", "incompleteness"},
                  {"n", n},
                  {"ratio", ratio},
                  {"factors", factors},
                  {"exposed", exposed}};
  return ds;
}

std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n,
                                                      std::array<double, 3> fractions,
                                                      std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split_dataset: fractions must be positive");
  }
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: fractions sum to " + std::to_string(total) +
                                ", expected 1");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = stream(seed, kSplitStream);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min(
      n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  std::array<std::vector<std::size_t>, 3> parts;
  parts[0].assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  parts[1].assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                  perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  parts[2].assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return parts;
}

std::array<ConceptDataset, 3> split_dataset(const ConceptDataset& ds,
                                            std::array<double, 3> fractions, std::uint64_t seed) {
  const auto parts = split_indices(ds.rows(), fractions, seed);
  return {ds.subset(parts[0]), ds.subset(parts[1]), ds.subset(parts[2])};
}

ConceptDataset perturb_features(const ConceptDataset& ds, double strength, std::uint64_t seed) {
  if (!(strength >= 0.0)) throw std::invalid_argument("perturb_features: strength must be >= 0");
  ConceptDataset out = ds;
  if (strength == 0.0) return out;
  auto rng = stream(seed, kPerturbStream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& x : out.features.values()) x += strength * gauss(rng);
  return out;
}

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  return std::filesystem::path(csv_path.string() + ".meta.json");
}

void write_csv(const ConceptDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < ds.feature_dim(); ++j) out << (j ? "," : "") << "x_" << j;
  for (std::size_t j = 0; j < ds.concept_count(); ++j)
    out << (ds.feature_dim() + j ? "," : "") << "v_" << j;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t j = 0; j < ds.feature_dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(r, j));
      out << (j ? "," : "") << buf;
    }
    for (std::size_t j = 0; j < ds.concept_count(); ++j)
      out << (ds.feature_dim() + j ? "," : "") << (ds.labels(r, j) != 0.0 ? '1' : '0');
    out << '\n';
  }

  nlohmann::json meta;
  meta["concept_names"] = ds.concept_names;
  meta["seed"] = ds.seed;
  meta["generator"] = ds.generator;
  meta["feature_dim"] = ds.feature_dim();
  if (ds.ground_truth_graph) {
    std::vector<std::string> edges;
    for (const auto& e : *ds.ground_truth_graph) edges.push_back(edge_string(ds.concept_names, e));
    meta["ground_truth_graph"] = edges;
  }
  std::ofstream mout(metadata_path(path), std::ios::binary);
  if (!mout) throw std::runtime_error("cannot write " + metadata_path(path).string());
  mout << meta.dump(2) << '\n';
}

ConceptDataset read_csv(const std::filesystem::path& path) {
  std::ifstream meta_in(metadata_path(path));
  if (!meta_in) throw std::runtime_error("missing dataset metadata " + metadata_path(path).string());
  const nlohmann::json meta = nlohmann::json::parse(meta_in);

  ConceptDataset ds;
  ds.concept_names = meta.at("concept_names").get<std::vector<std::string>>();
  ds.seed = meta.value("seed", std::uint64_t{0});
  ds.generator = meta.value("generator", nlohmann::json::object());
  const std::size_t k = ds.concept_names.size();

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file " + path.string());
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (columns < k) throw std::runtime_error("dataset header has fewer columns than concepts");
  const std::size_t d = columns - k;

  std::vector<double> feats;
  std::vector<double> labs;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = std::stod(cell);
      if (col < d) feats.push_back(v);
      else labs.push_back(v);
      ++col;
    }
    if (col != columns) {
      throw std::runtime_error("dataset row " + std::to_string(rows + 1) + " has " +
                               std::to_string(col) + " cells, expected " + std::to_string(columns));
    }
    ++rows;
  }
  ds.features = Matrix(rows, d);
  ds.labels = Matrix(rows, k);
  std::copy(feats.begin(), feats.end(), ds.features.values().begin());
  std::copy(labs.begin(), labs.end(), ds.labels.values().begin());
  if (meta.contains("ground_truth_graph")) {
    std::vector<LabelEdge> edges;
    for (const auto& s : meta["ground_truth_graph"]) {
      const std::string e = s.get<std::string>();
      const auto pos = e.find("->");
      if (pos == std::string::npos) throw std::runtime_error("bad edge in metadata: " + e);
      edges.push_back({ds.index_of(e.substr(0, pos)), ds.index_of(e.substr(pos + 2))});
    }
    ds.ground_truth_graph = edges;
  }
  ds.validate();
  return ds;
}

}  // namespace ccgm::data
