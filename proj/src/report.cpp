#include "dpsurv/experiment.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dpsurv {
namespace {

constexpr const char* kCsvHeader =
    "scheme,model,sigma,epsilon,epsilon_order,seeds,cindex_mean,cindex_std,ibs_mean,ibs_std,nibll_mean,nibll_std,"
    "errors";

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

std::string column_label(const CellKey& key) {
  std::string label(scheme_name(key.scheme));
  if (key.sigma) label += " s=" + shortest(*key.sigma);
  return label;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> csv_fields(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("report csv: '" + s + "' is not a number");
  return v;
}

nlohmann::json triple_json(const MetricTriple& t) {
  return {{"cindex", t.concordance}, {"ibs", t.ibs}, {"nibll", t.nibll}};
}

nlohmann::json key_json(const CellKey& key) {
  nlohmann::json j = {{"scheme", scheme_name(key.scheme)}, {"model", model_name(key.model)}};
  j["sigma"] = key.sigma ? nlohmann::json(*key.sigma) : nlohmann::json(nullptr);
  return j;
}

std::vector<CellKey> columns(const ExperimentReport& report) {
  std::vector<CellKey> out;
  for (const auto& c : report.cells) {
    CellKey k{c.key.scheme, ModelKind::coxph, c.key.sigma};
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

std::vector<ModelKind> models(const ExperimentReport& report) {
  std::vector<ModelKind> out;
  for (const auto& c : report.cells)
    if (std::find(out.begin(), out.end(), c.key.model) == out.end()) out.push_back(c.key.model);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::string format_table(const ExperimentReport& report) {
  std::ostringstream out;
  const auto cols = columns(report);
  const auto mods = models(report);
  constexpr int kModelWidth = 10;
  constexpr int kCellWidth = 22;
  for (auto metric : {Metric::concordance, Metric::ibs, Metric::nibll}) {
    out << metric_name(metric) << (lower_is_better(metric) ? " (lower is better)\n" : " (higher is better)\n");
    out << std::left << std::setw(kModelWidth) << "model";
    for (const auto& k : cols) out << std::setw(kCellWidth) << column_label(k);
    out << '\n';
    for (auto m : mods) {
      out << std::setw(kModelWidth) << model_name(m);
      for (const auto& k : cols) {
        const CellResult* cell = report.find(k.scheme, m, k.sigma);
        std::string text = "-";
        if (cell && !cell->per_seed.empty())
          text = fixed(metric_value(cell->mean, metric), 4) + " +- " + fixed(metric_value(cell->stddev, metric), 4);
        if (cell && !cell->errors.empty()) text += " (" + std::to_string(cell->errors.size()) + " failed)";
        out << std::setw(kCellWidth) << text;
      }
      out << '\n';
    }
    out << '\n';
  }

  bool has_epsilon = false;
  for (const auto& k : cols) {
    for (const auto& c : report.cells) {
      if (c.key.scheme == k.scheme && c.key.sigma == k.sigma && c.epsilon) {
        if (!has_epsilon) out << "privacy\n";
        has_epsilon = true;
        out << "  " << column_label(k) << ": epsilon " << fixed(*c.epsilon, 3);
        if (c.epsilon_order) out << " (order " << *c.epsilon_order << ")";
        out << '\n';
        break;
      }
    }
  }
  if (has_epsilon) out << '\n';

  auto present = [&](Scheme s) {
    return std::any_of(report.cells.begin(), report.cells.end(), [&](const CellResult& c) { return c.key.scheme == s; });
  };
  auto print_delta = [&](Scheme a, Scheme b, std::optional<double> sigma) {
    const auto d = compute_delta(report, a, b, sigma);
    if (d.entries.empty()) return;
    out << "delta " << scheme_name(a) << " -> " << scheme_name(b);
    if (sigma) out << " (s=" << shortest(*sigma) << ")";
    out << ": average " << fixed(d.average, 4) << '\n';
    for (const auto& e : d.entries)
      out << "  " << std::setw(kModelWidth) << model_name(e.model) << " cindex " << fixed(e.delta.concordance, 4)
          << "  ibs " << fixed(e.delta.ibs, 4) << "  nibll " << fixed(e.delta.nibll, 4) << '\n';
    for (const auto& n : d.notes) out << "  note: " << n << '\n';
  };
  std::vector<double> sigmas;
  for (const auto& k : cols)
    if (k.sigma && std::find(sigmas.begin(), sigmas.end(), *k.sigma) == sigmas.end()) sigmas.push_back(*k.sigma);
  if (present(Scheme::centralized) && present(Scheme::stdfed))
    print_delta(Scheme::centralized, Scheme::stdfed, std::nullopt);
  for (double s : sigmas) {
    if (present(Scheme::stdfed) && present(Scheme::dpfed)) print_delta(Scheme::stdfed, Scheme::dpfed, s);
    if (present(Scheme::dpfed) && present(Scheme::dpfed_post)) print_delta(Scheme::dpfed, Scheme::dpfed_post, s);
  }

  out << "\nrstd (std / mean, averaged over metrics and models)\n";
  for (const auto& k : cols) {
    const double r = average_rstd(report, k.scheme, k.sigma);
    out << "  " << std::setw(kCellWidth) << column_label(k) << (std::isfinite(r) ? fixed(r, 4) : "-") << '\n';
  }

  bool header = false;
  for (const auto& c : report.cells)
    for (const auto& e : c.errors) {
      if (!header) out << "\nfailures\n";
      header = true;
      out << "  " << e << '\n';
    }
  return out.str();
}

std::string format_csv(const ExperimentReport& report) {
  std::string out = std::string(kCsvHeader) + '\n';
  for (const auto& c : report.cells) {
    std::string errors;
    for (std::size_t i = 0; i < c.errors.size(); ++i) errors += (i ? " | " : "") + c.errors[i];
    out += std::string(scheme_name(c.key.scheme)) + ',' + std::string(model_name(c.key.model)) + ',' +
           (c.key.sigma ? shortest(*c.key.sigma) : "") + ',' + (c.epsilon ? shortest(*c.epsilon) : "") + ',' +
           (c.epsilon_order ? std::to_string(*c.epsilon_order) : "") + ',' + std::to_string(c.seed_count) + ',' +
           shortest(c.mean.concordance) + ',' + shortest(c.stddev.concordance) + ',' + shortest(c.mean.ibs) + ',' +
           shortest(c.stddev.ibs) + ',' + shortest(c.mean.nibll) + ',' + shortest(c.stddev.nibll) + ',' +
           csv_quote(errors) + '\n';
  }
  return out;
}

ExperimentReport parse_report_csv(std::string_view text) {
  ExperimentReport report;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::invalid_argument("report csv: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != 13) throw std::invalid_argument("report csv: expected 13 fields, got " + std::to_string(f.size()));
    CellResult c;
    c.key.scheme = parse_scheme(f[0]);
    c.key.model = parse_model_kind(f[1]);
    if (!f[2].empty()) c.key.sigma = parse_double(f[2]);
    if (!f[3].empty()) c.epsilon = parse_double(f[3]);
    if (!f[4].empty()) c.epsilon_order = std::stoi(f[4]);
    c.seed_count = std::stoi(f[5]);
    c.mean = {parse_double(f[6]), parse_double(f[8]), parse_double(f[10])};
    c.stddev = {parse_double(f[7]), parse_double(f[9]), parse_double(f[11])};
    std::string_view errors = f[12];
    while (!errors.empty()) {
      const auto sep = errors.find(" | ");
      c.errors.emplace_back(errors.substr(0, sep));
      if (sep == std::string_view::npos) break;
      errors.remove_prefix(sep + 3);
    }
    report.cells.push_back(std::move(c));
  }
  return report;
}

std::string format_records(const ExperimentReport& report) {
  std::string out;
  for (const auto& c : report.cells) {
    auto j = key_json(c.key);
    j["epsilon"] = c.epsilon ? nlohmann::json(*c.epsilon) : nlohmann::json(nullptr);
    j["epsilon_order"] = c.epsilon_order ? nlohmann::json(*c.epsilon_order) : nlohmann::json(nullptr);
    j["seed_count"] = c.seed_count;
    j["seeds"] = c.seeds;
    j["mean"] = triple_json(c.mean);
    j["std"] = triple_json(c.stddev);
    auto per_seed = nlohmann::json::array();
    for (const auto& m : c.per_seed) per_seed.push_back(triple_json(m));
    j["per_seed"] = per_seed;
    j["sensitivity"] = c.sensitivities;
    j["errors"] = c.errors;
    out += j.dump() + '\n';
  }
  return out;
}

std::string format_trace(const std::vector<RoundRecord>& rounds) {
  std::string out;
  for (const auto& r : rounds) {
    nlohmann::json j = {{"round", r.round},
                        {"selected", r.selected},
                        {"update_norms", r.update_norms},
                        {"clipped_norms", r.clipped_norms},
                        {"aggregate_norm", r.aggregate_norm},
                        {"applied_norm", r.applied_norm},
                        {"noise_tag", r.noise_tag}};
    j["metrics"] = r.metrics ? triple_json(*r.metrics) : nlohmann::json(nullptr);
    out += j.dump() + '\n';
  }
  return out;
}

std::filesystem::path emit_report(const ExperimentReport& report, ReportFormat format,
                                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  switch (format) {
    case ReportFormat::table: {
      const auto path = dir / "report.txt";
      write_file(path, format_table(report));
      return path;
    }
    case ReportFormat::csv: {
      const auto path = dir / "report.csv";
      write_file(path, format_csv(report));
      return path;
    }
    case ReportFormat::records: {
      const auto path = dir / "report.jsonl";
      write_file(path, format_records(report));
      return path;
    }
  }
  throw std::logic_error("emit_report: unknown format");
}

std::filesystem::path trace_filename(const CellTrace& trace) {
  std::string name = "trace_" + std::string(scheme_name(trace.key.scheme)) + "_" + std::string(model_name(trace.key.model));
  if (trace.key.sigma) name += "_s" + shortest(*trace.key.sigma);
  return name + "_seed" + std::to_string(trace.seed) + ".jsonl";
}

}  // namespace dpsurv
