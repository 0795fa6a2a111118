#include "dpsurv/experiment.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dpsurv {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_list(std::string_view value) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const auto item = trim(value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config '" + std::string(key) + "': '" + std::string(v) + "' is not a number");
  return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config '" + std::string(key) + "': '" + std::string(v) + "' is not an integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config '" + std::string(key) + "': '" + std::string(v) + "' is not a boolean");
}

template <typename T, typename Fn>
std::vector<T> parse_list(std::string_view key, std::string_view value, Fn&& parse) {
  std::vector<T> out;
  for (auto item : split_list(value)) out.push_back(parse(item));
  if (out.empty()) throw ConfigError("config '" + std::string(key) + "': empty list");
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T, typename Fn>
std::string join(const std::vector<T>& items, Fn&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

// Default coefficients for a synthetic feature count other than the built-in 7.
void resize_beta(SynthSpec& s, Eigen::Index p) {
  const Eigen::VectorXd old = s.beta;
  s.beta = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < std::min(p, old.size()); ++i) s.beta[i] = old[i];
  s.features = p;
}

}  // namespace

void ExperimentConfig::validate() const {
  fed.validate();
  if (data_source == "synthetic") synth.validate();
  if (models.empty()) throw ConfigError("config: no models");
  if (schemes.empty()) throw ConfigError("config: no schemes");
  if (seeds.empty()) throw ConfigError("config: seed list is empty");
  if (grid_points < 2) throw ConfigError("config: metrics.grid must be at least 2");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("config: privacy.delta must lie in (0, 1)");
  if (!(post_clip_factor > 0.0)) throw ConfigError("config: privacy.P_factor must be positive");
  if (sensitivity && !(*sensitivity > 0.0)) throw ConfigError("config: privacy.S must be positive");
  for (auto s : schemes)
    if (is_private(s) && sigmas.empty()) throw ConfigError("config: private schemes need privacy.sigma");
  for (double s : sigmas)
    if (!(s >= 0.0)) throw ConfigError("config: privacy.sigma must be non-negative");
  if (workers < 1) throw ConfigError("config: workers must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("config: data.test_fraction must lie in (0, 1)");
}

void apply_setting(ExperimentConfig& c, std::string_view key_in, std::string_view value_in) {
  const auto key = trim(key_in);
  const auto v = trim(value_in);
  const std::string k(key);
  if (k == "data.source") c.data_source = std::string(v);
  else if (k == "data.duration_col") c.duration_column = std::string(v);
  else if (k == "data.event_col") c.event_column = std::string(v);
  else if (k == "data.test_fraction") c.test_fraction = to_double(key, v);
  else if (k == "synth.n") c.synth.samples = to_int<Eigen::Index>(key, v);
  else if (k == "synth.p") resize_beta(c.synth, to_int<Eigen::Index>(key, v));
  else if (k == "synth.beta") {
    const auto beta = parse_list<double>(key, v, [&](std::string_view x) { return to_double(key, x); });
    c.synth.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    c.synth.features = c.synth.beta.size();
  }
  else if (k == "synth.shape") c.synth.weibull_shape = to_double(key, v);
  else if (k == "synth.scale") c.synth.weibull_scale = to_double(key, v);
  else if (k == "synth.censor_rate") c.synth.censoring_rate = to_double(key, v);
  else if (k == "synth.seed") c.synth.seed = to_int<std::uint64_t>(key, v);
  else if (k == "model") c.models = parse_list<ModelKind>(key, v, parse_model_kind);
  else if (k == "scheme") c.schemes = parse_list<Scheme>(key, v, parse_scheme);
  else if (k == "fed.N") c.fed.clients = to_int<int>(key, v);
  else if (k == "fed.K") c.fed.selected = to_int<int>(key, v);
  else if (k == "fed.E") c.fed.local_epochs = to_int<int>(key, v);
  else if (k == "fed.B") c.fed.batch_size = to_int<int>(key, v);
  else if (k == "fed.rounds") c.fed.rounds = to_int<int>(key, v);
  else if (k == "fed.lr") c.fed.learning_rate = to_double(key, v);
  else if (k == "fed.local_opt") c.fed.optimizer = parse_optimizer(v);
  else if (k == "fed.eval_every") c.fed.eval_every = to_int<int>(key, v);
  else if (k == "fed.client_workers") c.fed.workers = to_int<int>(key, v);
  else if (k == "privacy.sigma") c.sigmas = parse_list<double>(key, v, [&](std::string_view x) { return to_double(key, x); });
  else if (k == "privacy.delta") c.delta = to_double(key, v);
  else if (k == "privacy.S") c.sensitivity = v == "median" ? std::nullopt : std::optional<double>(to_double(key, v));
  else if (k == "privacy.P_factor") c.post_clip_factor = to_double(key, v);
  else if (k == "privacy.max_order") c.accountant_max_order = to_int<int>(key, v);
  else if (k == "seeds") c.seeds = parse_list<std::uint64_t>(key, v, [&](std::string_view x) { return to_int<std::uint64_t>(key, x); });
  else if (k == "metrics.grid") c.grid_points = to_int<int>(key, v);
  else if (k == "model.hidden")
    c.model_options.hidden = parse_list<Eigen::Index>(key, v, [&](std::string_view x) { return to_int<Eigen::Index>(key, x); });
  else if (k == "coxcc.controls") c.model_options.controls_per_case = to_int<int>(key, v);
  else if (k == "deephit.bin_width") c.model_options.bin_width = to_double(key, v);
  else if (k == "deephit.alpha") c.model_options.deephit.alpha = to_double(key, v);
  else if (k == "deephit.sigma_rank") c.model_options.deephit.sigma_rank = to_double(key, v);
  else if (k == "out") c.out_dir = std::string(v);
  else if (k == "workers") c.workers = to_int<int>(key, v);
  else if (k == "traces") c.write_traces = to_bool(key, v);
  else throw ConfigError("config: unknown key '" + k + "'");
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "data.source = " << c.data_source << '\n'
      << "data.duration_col = " << c.duration_column << '\n'
      << "data.event_col = " << c.event_column << '\n'
      << "data.test_fraction = " << format_number(c.test_fraction) << '\n'
      << "synth.n = " << c.synth.samples << '\n'
      << "synth.beta = "
      << join(std::vector<double>(c.synth.beta.data(), c.synth.beta.data() + c.synth.beta.size()), format_number)
      << '\n'
      << "synth.shape = " << format_number(c.synth.weibull_shape) << '\n'
      << "synth.scale = " << format_number(c.synth.weibull_scale) << '\n'
      << "synth.censor_rate = " << format_number(c.synth.censoring_rate) << '\n'
      << "synth.seed = " << c.synth.seed << '\n'
      << "model = " << join(c.models, [](ModelKind m) { return std::string(model_name(m)); }) << '\n'
      << "scheme = " << join(c.schemes, [](Scheme s) { return std::string(scheme_name(s)); }) << '\n'
      << "fed.N = " << c.fed.clients << '\n'
      << "fed.K = " << c.fed.selected << '\n'
      << "fed.E = " << c.fed.local_epochs << '\n'
      << "fed.B = " << c.fed.batch_size << '\n'
      << "fed.rounds = " << c.fed.rounds << '\n'
      << "fed.lr = " << format_number(c.fed.learning_rate) << '\n'
      << "fed.local_opt = " << optimizer_name(c.fed.optimizer) << '\n'
      << "fed.eval_every = " << c.fed.eval_every << '\n'
      << "fed.client_workers = " << c.fed.workers << '\n'
      << "privacy.sigma = " << join(c.sigmas, format_number) << '\n'
      << "privacy.delta = " << format_number(c.delta) << '\n'
      << "privacy.S = " << (c.sensitivity ? format_number(*c.sensitivity) : std::string("median")) << '\n'
      << "privacy.P_factor = " << format_number(c.post_clip_factor) << '\n'
      << "privacy.max_order = " << c.accountant_max_order << '\n'
      << "seeds = " << join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }) << '\n'
      << "metrics.grid = " << c.grid_points << '\n'
      << "model.hidden = " << join(c.model_options.hidden, [](Eigen::Index h) { return std::to_string(h); }) << '\n'
      << "coxcc.controls = " << c.model_options.controls_per_case << '\n'
      << "deephit.bin_width = " << format_number(c.model_options.bin_width) << '\n'
      << "deephit.alpha = " << format_number(c.model_options.deephit.alpha) << '\n'
      << "deephit.sigma_rank = " << format_number(c.model_options.deephit.sigma_rank) << '\n'
      << "out = " << c.out_dir << '\n'
      << "workers = " << c.workers << '\n'
      << "traces = " << (c.write_traces ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace dpsurv
