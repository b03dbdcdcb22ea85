#include "nar/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#ifndef NAR_VERSION
#define NAR_VERSION "0.1.0"
#endif

namespace nar {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorKind::IoError, "write to '" + path + "' failed");
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  size_t e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, int row, int col) {
  const std::string t = trim(cell);
  if (t.empty())
    fail(ErrorKind::ParseError, "empty cell at row " + std::to_string(row) +
                                    ", column " + std::to_string(col));
  const char* begin = t.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + t.size())
    fail(ErrorKind::ParseError, "unparseable value '" + t + "' at row " +
                                    std::to_string(row) + ", column " +
                                    std::to_string(col));
  if (!std::isfinite(v))
    fail(ErrorKind::NonFiniteCell, "non-finite value at row " +
                                       std::to_string(row) + ", column " +
                                       std::to_string(col));
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(slurp(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, "'" + path + "': " + e.what());
  }
}

constexpr const char* kTypePrefix = "#type:";

}  // namespace

TimeSeriesPanel read_panel_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) fail(ErrorKind::EmptyPanel, "'" + path + "' is empty");

  TimeSeriesPanel panel;
  panel.node_ids = split_csv_line(lines[0]);
  if (panel.node_ids.empty())
    fail(ErrorKind::ParseError, "missing header row in '" + path + "'");
  const size_t m = panel.node_ids.size();
  for (size_t c = 0; c < m; ++c)
    if (panel.node_ids[c].empty())
      fail(ErrorKind::ParseError,
           "empty node id in column " + std::to_string(c + 1));

  size_t first_data = 1;
  if (lines.size() > 1 && lines[1].rfind(kTypePrefix, 0) == 0) {
    panel.node_types = split_csv_line(lines[1].substr(std::strlen(kTypePrefix)));
    if (panel.node_types.size() != m)
      fail(ErrorKind::RaggedRows, "type row has " +
                                      std::to_string(panel.node_types.size()) +
                                      " cells, expected " + std::to_string(m));
    for (const auto& t : panel.node_types)
      if (!valid_node_type(t))
        fail(ErrorKind::ParseError, "unknown node type '" + t + "'");
    first_data = 2;
  }

  std::vector<Eigen::RowVectorXd> rows;
  for (size_t r = first_data; r < lines.size(); ++r) {
    if (lines[r].empty() && r + 1 == lines.size()) break;  // trailing newline
    const auto cells = split_csv_line(lines[r]);
    if (cells.size() != m)
      fail(ErrorKind::RaggedRows, "row " + std::to_string(r + 1) + " has " +
                                      std::to_string(cells.size()) +
                                      " cells, expected " + std::to_string(m));
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(m));
    for (size_t c = 0; c < m; ++c)
      row(static_cast<Eigen::Index>(c)) =
          parse_cell(cells[c], static_cast<int>(r + 1), static_cast<int>(c + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::EmptyPanel, "'" + path + "' has no data rows");

  panel.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(m));
  for (size_t r = 0; r < rows.size(); ++r)
    panel.values.row(static_cast<Eigen::Index>(r)) = rows[r];
  panel.validate();
  return panel;
}

void write_panel_csv(const std::string& path, const TimeSeriesPanel& panel) {
  panel.validate();
  std::ostringstream out;
  for (int c = 0; c < panel.cols(); ++c) {
    if (c) out << ',';
    out << (panel.node_ids.empty() ? "n" + std::to_string(c + 1)
                                   : panel.node_ids[static_cast<size_t>(c)]);
  }
  out << '\n';
  if (!panel.node_types.empty()) {
    out << kTypePrefix;
    for (int c = 0; c < panel.cols(); ++c) {
      if (c) out << ',';
      out << panel.node_types[static_cast<size_t>(c)];
    }
    out << '\n';
  }
  for (int r = 0; r < panel.rows(); ++r) {
    for (int c = 0; c < panel.cols(); ++c) {
      if (c) out << ',';
      out << format_double(panel.values(r, c));
    }
    out << '\n';
  }
  spill(path, out.str());
}

void write_coefficients_csv(const std::string& path, const CoefficientTensor& B) {
  std::ostringstream out;
  out << "lag,source,target,value\n";
  for (int l = 0; l < B.p(); ++l)
    for (int i = 0; i < B.m(); ++i)
      for (int j = 0; j < B.m(); ++j)
        out << (l + 1) << ',' << (i + 1) << ',' << (j + 1) << ','
            << format_double(B.lag(l)(i, j)) << '\n';
  spill(path, out.str());
}

CoefficientTensor read_coefficients_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != "lag,source,target,value")
    fail(ErrorKind::ParseError, "'" + path + "' lacks the coefficient header");
  struct Entry {
    int l, i, j;
    double v;
  };
  std::vector<Entry> entries;
  int p = 0, m = 0;
  for (size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty() && r + 1 == lines.size()) break;
    const auto cells = split_csv_line(lines[r]);
    if (cells.size() != 4)
      fail(ErrorKind::RaggedRows, "row " + std::to_string(r + 1) + " has " +
                                      std::to_string(cells.size()) +
                                      " cells, expected 4");
    Entry e;
    e.l = static_cast<int>(parse_cell(cells[0], static_cast<int>(r + 1), 1));
    e.i = static_cast<int>(parse_cell(cells[1], static_cast<int>(r + 1), 2));
    e.j = static_cast<int>(parse_cell(cells[2], static_cast<int>(r + 1), 3));
    e.v = parse_cell(cells[3], static_cast<int>(r + 1), 4);
    if (e.l < 1 || e.i < 1 || e.j < 1)
      fail(ErrorKind::ParseError, "indices must be 1-based positive at row " +
                                      std::to_string(r + 1));
    p = std::max(p, e.l);
    m = std::max(m, std::max(e.i, e.j));
    entries.push_back(e);
  }
  if (entries.empty())
    fail(ErrorKind::ParseError, "'" + path + "' has no coefficient rows");
  CoefficientTensor B(p, m);
  for (const auto& e : entries) B.lag(e.l - 1)(e.i - 1, e.j - 1) = e.v;
  return B;
}

Segmentation read_segmentation_json(const std::string& path, int expected_m) {
  const nlohmann::json j = parse_json_file(path);
  std::vector<std::vector<int>> groups;
  try {
    groups = j.at("groups").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, "'" + path + "': " + e.what());
  }
  int max_node = 0;
  for (const auto& g : groups)
    for (int node : g) max_node = std::max(max_node, node);
  const int m = expected_m >= 0 ? expected_m : max_node;
  std::vector<std::vector<int>> zero_based;
  for (const auto& g : groups) {
    std::vector<int> grp;
    for (int node : g) grp.push_back(node - 1);
    zero_based.push_back(std::move(grp));
  }
  return Segmentation(std::move(zero_based), m);
}

void write_segmentation_json(const std::string& path, const Segmentation& seg) {
  nlohmann::ordered_json j;
  std::vector<std::vector<int>> groups;
  for (int k = 0; k < seg.group_count(); ++k) {
    std::vector<int> g;
    for (int node : seg.group(k)) g.push_back(node + 1);
    groups.push_back(std::move(g));
  }
  j["groups"] = groups;
  spill(path, j.dump(2) + "\n");
}

namespace {

nlohmann::ordered_json indicators_to_json(const IndicatorSet& ind) {
  std::vector<std::vector<int>> gamma;
  std::vector<std::vector<std::vector<int>>> eta;
  for (int l = 0; l < ind.p(); ++l) {
    std::vector<int> grow;
    std::vector<std::vector<int>> erow;
    for (int i = 0; i < ind.m(); ++i) {
      grow.push_back(ind.gamma(l, i));
      std::vector<int> ks;
      for (int k = 0; k < ind.g(); ++k) ks.push_back(ind.eta(l, i, k));
      erow.push_back(std::move(ks));
    }
    gamma.push_back(std::move(grow));
    eta.push_back(std::move(erow));
  }
  nlohmann::ordered_json j;
  j["gamma"] = gamma;
  j["eta"] = eta;
  return j;
}

IndicatorSet indicators_from_json(const nlohmann::json& j, int p, int m, int g) {
  IndicatorSet ind(p, m, g);
  try {
    const auto gamma = j.at("gamma").get<std::vector<std::vector<int>>>();
    const auto eta =
        j.at("eta").get<std::vector<std::vector<std::vector<int>>>>();
    if (static_cast<int>(gamma.size()) != p || static_cast<int>(eta.size()) != p)
      fail(ErrorKind::ShapeMismatch, "indicator arrays have the wrong lag count");
    for (int l = 0; l < p; ++l) {
      if (static_cast<int>(gamma[static_cast<size_t>(l)].size()) != m ||
          static_cast<int>(eta[static_cast<size_t>(l)].size()) != m)
        fail(ErrorKind::ShapeMismatch, "indicator arrays have the wrong node count");
      for (int i = 0; i < m; ++i) {
        ind.set_gamma(l, i, gamma[static_cast<size_t>(l)][static_cast<size_t>(i)] != 0);
        const auto& ks = eta[static_cast<size_t>(l)][static_cast<size_t>(i)];
        if (static_cast<int>(ks.size()) != g)
          fail(ErrorKind::ShapeMismatch, "indicator arrays have the wrong group count");
        for (int k = 0; k < g; ++k)
          ind.set_eta(l, i, k, ks[static_cast<size_t>(k)] != 0);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("indicators: ") + e.what());
  }
  return ind;
}

}  // namespace

void write_indicators_json(const std::string& path, const IndicatorSet& ind,
                           const Segmentation& seg) {
  if (ind.m() != seg.node_count() || ind.g() != seg.group_count())
    fail(ErrorKind::ShapeMismatch, "indicators do not match segmentation");
  nlohmann::ordered_json j;
  j["p"] = ind.p();
  j["m"] = ind.m();
  std::vector<std::vector<int>> groups;
  for (int k = 0; k < seg.group_count(); ++k) {
    std::vector<int> g;
    for (int node : seg.group(k)) g.push_back(node + 1);
    groups.push_back(std::move(g));
  }
  j["groups"] = groups;
  const nlohmann::ordered_json flags = indicators_to_json(ind);
  j["gamma"] = flags["gamma"];
  j["eta"] = flags["eta"];
  spill(path, j.dump(2) + "\n");
}

IndicatorsFile read_indicators_json(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  IndicatorsFile out;
  try {
    const int p = j.at("p").get<int>();
    const int m = j.at("m").get<int>();
    const auto groups = j.at("groups").get<std::vector<std::vector<int>>>();
    std::vector<std::vector<int>> zero_based;
    for (const auto& g : groups) {
      std::vector<int> grp;
      for (int node : g) grp.push_back(node - 1);
      zero_based.push_back(std::move(grp));
    }
    out.seg = Segmentation(std::move(zero_based), m);
    out.indicators = indicators_from_json(j, p, m, out.seg.group_count());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, "'" + path + "': " + e.what());
  }
  return out;
}

EngineConfig read_engine_config_json(const std::string& path) {
  return EngineConfig::from_json_text(slurp(path));
}

void write_truth_json(const std::string& path, const ScenarioSpec& spec,
                      const GroundTruth& truth) {
  nlohmann::ordered_json j;
  j["scenario"] = nlohmann::ordered_json::parse(spec.to_json_text());
  j["rescale"] = truth.rescale;
  j["spectral_radius"] = truth.spectral_radius;
  j["indicators"] = indicators_to_json(truth.indicators);
  nlohmann::ordered_json coefs = nlohmann::ordered_json::array();
  const CoefficientTensor& B = truth.coefficients;
  for (int l = 0; l < B.p(); ++l)
    for (int i = 0; i < B.m(); ++i)
      for (int jcol = 0; jcol < B.m(); ++jcol) {
        if (B.lag(l)(i, jcol) == 0.0) continue;
        nlohmann::ordered_json entry;
        entry["lag"] = l + 1;
        entry["source"] = i + 1;
        entry["target"] = jcol + 1;
        entry["value"] = B.lag(l)(i, jcol);
        coefs.push_back(std::move(entry));
      }
  j["coefficients"] = std::move(coefs);
  spill(path, j.dump(2) + "\n");
}

TruthFile read_truth_json(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  TruthFile out;
  try {
    out.scenario = ScenarioSpec::from_json_text(j.at("scenario").dump());
    out.indicators =
        indicators_from_json(j.at("indicators"), out.scenario.p, out.scenario.m,
                             out.scenario.seg.group_count());
    out.coefficients = CoefficientTensor(out.scenario.p, out.scenario.m);
    for (const auto& entry : j.at("coefficients")) {
      const int l = entry.at("lag").get<int>() - 1;
      const int i = entry.at("source").get<int>() - 1;
      const int t = entry.at("target").get<int>() - 1;
      out.coefficients.lag(l)(i, t) = entry.at("value").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, "'" + path + "': " + e.what());
  }
  return out;
}

void write_elbo_trace_csv(const std::string& path, const std::vector<double>& trace) {
  std::ostringstream out;
  out << "iter,elbo\n";
  for (size_t i = 0; i < trace.size(); ++i)
    out << i << ',' << format_double(trace[i]) << '\n';
  spill(path, out.str());
}

void write_forecast_csv(const std::string& path,
                        const std::vector<std::string>& node_ids,
                        const Eigen::RowVectorXd& forecast) {
  if (!node_ids.empty() &&
      node_ids.size() != static_cast<size_t>(forecast.size()))
    fail(ErrorKind::ShapeMismatch, "node ids do not match the forecast width");
  std::ostringstream out;
  out << "node,value\n";
  for (Eigen::Index c = 0; c < forecast.size(); ++c) {
    const std::string id = node_ids.empty()
                               ? "n" + std::to_string(c + 1)
                               : node_ids[static_cast<size_t>(c)];
    out << id << ',' << format_double(forecast(c)) << '\n';
  }
  spill(path, out.str());
}

void write_backtest_csv(const std::string& path, const BacktestReport& report,
                        const std::vector<std::string>& node_ids) {
  if (!node_ids.empty() &&
      node_ids.size() != static_cast<size_t>(report.actuals.cols()))
    fail(ErrorKind::ShapeMismatch, "node ids do not match the report width");
  std::ostringstream out;
  out << "step,node,actual,forecast\n";
  for (Eigen::Index s = 0; s < report.actuals.rows(); ++s)
    for (Eigen::Index c = 0; c < report.actuals.cols(); ++c) {
      const std::string id = node_ids.empty()
                                 ? "n" + std::to_string(c + 1)
                                 : node_ids[static_cast<size_t>(c)];
      out << (s + 1) << ',' << id << ',' << format_double(report.actuals(s, c))
          << ',' << format_double(report.forecasts(s, c)) << '\n';
    }
  spill(path, out.str());
}

void write_backtest_summary_json(const std::string& path,
                                 const BacktestReport& report) {
  nlohmann::ordered_json j;
  j["mape"] = report.mape_percent;
  j["nrmse"] = report.nrmse;
  if (report.mape_excluded > 0) j["mape_excluded_cells"] = report.mape_excluded;
  spill(path, j.dump(2) + "\n");
}

void write_manifest_json(const std::string& path, const ManifestInfo& info) {
  nlohmann::ordered_json j;
  j["command"] = info.command;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& kv : info.config) cfg[kv.first] = kv.second;
  j["config"] = std::move(cfg);
  if (info.seed) j["seed"] = *info.seed;
  j["version"] = version_string();
  j["wall_clock_seconds"] = info.wall_seconds;
  j["outputs"] = info.outputs;
  spill(path, j.dump(2) + "\n");
}

std::string version_string() { return NAR_VERSION; }

}  // namespace nar
