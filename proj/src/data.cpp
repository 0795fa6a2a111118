#include "dpsurv/data.hpp"

#include "dpsurv/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace dpsurv {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

SurvivalDataset SurvivalDataset::subset(const std::vector<Eigen::Index>& rows) const {
  SurvivalDataset out;
  out.feature_names = feature_names;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.durations.resize(static_cast<Eigen::Index>(rows.size()));
  out.events.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    out.features.row(i) = features.row(rows[r]);
    out.durations[i] = durations[rows[r]];
    out.events[i] = events[rows[r]];
  }
  return out;
}

void SurvivalDataset::validate() const {
  if (features.rows() != durations.size() || events.size() != durations.size())
    throw DataError("dataset has inconsistent row counts");
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (!(durations[i] > 0.0) || !std::isfinite(durations[i]))
      throw DataError("row " + std::to_string(i) + ": duration must be positive");
    if (events[i] != 0 && events[i] != 1) throw DataError("row " + std::to_string(i) + ": event must be 0 or 1");
  }
  if (!features.allFinite()) throw DataError("dataset has non-finite features");
}

SurvivalDataset concatenate(const std::vector<SurvivalDataset>& parts) {
  SurvivalDataset out;
  if (parts.empty()) return out;
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.size();
  out.feature_names = parts.front().feature_names;
  out.features.resize(rows, parts.front().feature_count());
  out.durations.resize(rows);
  out.events.resize(rows);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.features.middleRows(r, p.size()) = p.features;
    out.durations.segment(r, p.size()) = p.durations;
    out.events.segment(r, p.size()) = p.events;
    r += p.size();
  }
  return out;
}

SurvivalDataset parse_csv(const std::string& text, const std::string& duration_column,
                          const std::string& event_column) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: missing header row");
  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);
  long duration_idx = -1;
  long event_idx = -1;
  std::vector<std::size_t> feature_cols;
  SurvivalDataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == duration_column)
      duration_idx = static_cast<long>(c);
    else if (header[c] == event_column)
      event_idx = static_cast<long>(c);
    else {
      feature_cols.push_back(c);
      data.feature_names.emplace_back(header[c]);
    }
  }
  if (duration_idx < 0) throw DataError("csv: no '" + duration_column + "' column");
  if (event_idx < 0) throw DataError("csv: no '" + event_column + "' column");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw DataError("csv row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    std::vector<double> values(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto f = fields[c];
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v))
        throw DataError("csv row " + std::to_string(line_no) + ", column '" + header[c] +
                        "': missing or non-numeric value");
      values[c] = v;
    }
    const double ev = values[static_cast<std::size_t>(event_idx)];
    if (ev != 0.0 && ev != 1.0)
      throw DataError("csv row " + std::to_string(line_no) + ": event value " + format_double(ev) + " is not 0 or 1");
    if (!(values[static_cast<std::size_t>(duration_idx)] > 0.0))
      throw DataError("csv row " + std::to_string(line_no) + ": duration must be positive");
    rows.push_back(std::move(values));
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  data.features.resize(n, static_cast<Eigen::Index>(feature_cols.size()));
  data.durations.resize(n);
  data.events.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < feature_cols.size(); ++c)
      data.features(i, static_cast<Eigen::Index>(c)) = r[feature_cols[c]];
    data.durations[i] = r[static_cast<std::size_t>(duration_idx)];
    data.events[i] = static_cast<int>(r[static_cast<std::size_t>(event_idx)]);
  }
  return data;
}

SurvivalDataset load_csv(const std::filesystem::path& path, const std::string& duration_column,
                         const std::string& event_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), duration_column, event_column);
}

std::string to_csv(const SurvivalDataset& data) {
  std::string out;
  for (Eigen::Index c = 0; c < data.feature_count(); ++c) {
    out += c < static_cast<Eigen::Index>(data.feature_names.size()) ? data.feature_names[static_cast<std::size_t>(c)]
                                                                    : "x" + std::to_string(c);
    out += ',';
  }
  out += "duration,event\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index c = 0; c < data.feature_count(); ++c) {
      out += format_double(data.features(i, c));
      out += ',';
    }
    out += format_double(data.durations[i]);
    out += ',';
    out += std::to_string(data.events[i]);
    out += '\n';
  }
  return out;
}

void write_csv(const SurvivalDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_csv(data);
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& train) {
  if (train.rows() == 0) throw DataError("standardize: empty training split");
  Standardizer s;
  s.mean = train.colwise().mean();
  s.scale = ((train.rowwise() - s.mean).array().square().colwise().mean()).sqrt().matrix();
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw DataError("standardize: feature count mismatch");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (scale[c] > 0.0)
      out.col(c) = (x.col(c).array() - mean[c]) / scale[c];
    else
      out.col(c).setZero();
  }
  return out;
}

SurvivalDataset Standardizer::apply(SurvivalDataset data) const {
  data.features = apply(data.features);
  return data;
}

FederatedSplit split_and_partition(const SurvivalDataset& data, double test_fraction, int clients,
                                   std::uint64_t seed, int min_shard_events) {
  if (clients < 1) throw DataError("split: need at least one client");
  if (test_fraction < 0.0 || test_fraction >= 1.0) throw DataError("split: test fraction must lie in [0, 1)");
  const Eigen::Index n = data.size();
  const auto test_count = static_cast<Eigen::Index>(std::floor(test_fraction * static_cast<double>(n) + 1e-9));
  const Eigen::Index train_count = n - test_count;
  if (train_count < clients) throw DataError("split: fewer training rows than clients");

  constexpr int kMaxAttempts = 100;
  int worst = 0;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng = make_stream(seed, {stream_tag("split"), static_cast<std::uint64_t>(attempt)});
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);

    FederatedSplit split;
    split.test.assign(perm.begin(), perm.begin() + test_count);
    const Eigen::Index base = train_count / clients;
    const Eigen::Index extra = train_count % clients;
    auto it = perm.begin() + test_count;
    bool ok = true;
    worst = std::numeric_limits<int>::max();
    for (int k = 0; k < clients; ++k) {
      const Eigen::Index size = base + (k < extra ? 1 : 0);
      std::vector<Eigen::Index> shard(it, it + size);
      it += size;
      int ev = 0;
      for (auto i : shard) ev += data.events[i];
      worst = std::min(worst, ev);
      if (ev < min_shard_events) ok = false;
      split.shards.push_back(std::move(shard));
    }
    if (ok) return split;
  }
  throw DataError("split: could not give every one of " + std::to_string(clients) + " shards " +
                  std::to_string(min_shard_events) + " events in " + std::to_string(kMaxAttempts) +
                  " attempts (last draw had a shard with " + std::to_string(worst) + ")");
}

void SynthSpec::validate() const {
  if (samples < 10) throw DataError("synthetic spec: need at least 10 samples");
  if (features < 1) throw DataError("synthetic spec: need at least one feature");
  if (beta.size() != features) throw DataError("synthetic spec: beta must have one coefficient per feature");
  if (!(weibull_shape > 0.0) || !(weibull_scale > 0.0) || !(censoring_rate > 0.0))
    throw DataError("synthetic spec: shape, scale and censoring rate must be positive");
}

namespace {

// Draws the covariates, latent event times and unit-rate censoring variates.
struct SynthDraws {
  Eigen::MatrixXd x;
  Eigen::VectorXd event_time;
  Eigen::VectorXd unit_censor;
};

SynthDraws draw_synthetic(const SynthSpec& spec) {
  Rng rng = make_stream(spec.seed, {stream_tag("synthetic")});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> unit_exp(1.0);
  SynthDraws d;
  d.x.resize(spec.samples, spec.features);
  d.event_time.resize(spec.samples);
  d.unit_censor.resize(spec.samples);
  for (Eigen::Index i = 0; i < spec.samples; ++i) {
    for (Eigen::Index c = 0; c < spec.features; ++c) d.x(i, c) = normal(rng);
    const double lp = d.x.row(i).dot(spec.beta);
    // S(t|x) = exp(-(t/scale)^shape * exp(lp))
    d.event_time[i] = spec.weibull_scale * std::pow(unit_exp(rng) * std::exp(-lp), 1.0 / spec.weibull_shape);
    d.unit_censor[i] = unit_exp(rng);
  }
  return d;
}

}  // namespace

SurvivalDataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const SynthDraws d = draw_synthetic(spec);
  SurvivalDataset data;
  data.features = d.x;
  data.durations.resize(spec.samples);
  data.events.resize(spec.samples);
  for (Eigen::Index i = 0; i < spec.samples; ++i) {
    const double censor = d.unit_censor[i] / spec.censoring_rate;
    data.events[i] = d.event_time[i] <= censor ? 1 : 0;
    data.durations[i] = std::min(d.event_time[i], censor);
  }
  for (Eigen::Index c = 0; c < spec.features; ++c) data.feature_names.push_back("x" + std::to_string(c));
  return data;
}

double censoring_rate_for_fraction(SynthSpec spec, double target_fraction, Eigen::Index mc_samples) {
  if (!(target_fraction > 0.0 && target_fraction < 1.0)) throw DataError("target censoring fraction must lie in (0, 1)");
  spec.samples = mc_samples;
  spec.validate();
  const SynthDraws d = draw_synthetic(spec);
  auto censored_fraction = [&](double rate) {
    Eigen::Index censored = 0;
    for (Eigen::Index i = 0; i < mc_samples; ++i) censored += d.unit_censor[i] / rate < d.event_time[i] ? 1 : 0;
    return static_cast<double>(censored) / static_cast<double>(mc_samples);
  };
  double lo = 1e-8;
  double hi = 1e3;
  for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-9; ++it) {
    const double mid = std::sqrt(lo * hi);
    (censored_fraction(mid) < target_fraction ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

std::pair<TimeBins, Eigen::VectorXi> discretize(const Eigen::VectorXd& durations, double width) {
  if (!(width > 0.0)) throw DataError("discretize: bin width must be positive");
  const double max_t = durations.size() ? durations.maxCoeff() : 0.0;
  const auto count = static_cast<Eigen::Index>(std::floor(max_t / width)) + 1;
  TimeBins bins;
  for (Eigen::Index k = 0; k <= count; ++k) bins.edges.push_back(static_cast<double>(k) * width);
  Eigen::VectorXi index(durations.size());
  for (Eigen::Index i = 0; i < durations.size(); ++i) index[i] = static_cast<int>(bins.index_of(durations[i]));
  return {std::move(bins), std::move(index)};
}

}  // namespace dpsurv
