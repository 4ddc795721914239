#include "causalreg/data_model.hpp"

#include "causalreg/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace causalreg {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    // from_chars rejects "nan"/"inf" spellings on some toolchains; treat them explicitly.
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    if (lower == "nan" || lower == "inf" || lower == "-inf" || lower == "+inf" ||
        lower == "infinity" || lower == "-infinity") {
      throw DataError("non-finite value in column " + column + " at row " + std::to_string(row));
    }
    throw DataError("malformed value '" + s + "' in column " + column + " at row " +
                    std::to_string(row));
  }
  if (!std::isfinite(v)) {
    throw DataError("non-finite value in column " + column + " at row " + std::to_string(row));
  }
  return v;
}

bool is_indexed_name(const std::string& name, char prefix) {
  if (name.size() < 2 || name[0] != prefix) return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::size_t name_index(const std::string& name) { return std::stoul(name.substr(1)); }

}  // namespace

EnvDataset::EnvDataset(Vector y, Matrix x, Matrix a, std::optional<std::vector<int>> env_labels,
                       std::optional<CenteringInfo> centering)
    : y_(std::move(y)),
      x_(std::move(x)),
      a_(std::move(a)),
      env_(std::move(env_labels)),
      centering_(std::move(centering)) {
  const auto n = y_.size();
  if (n < 1) throw DataError("dataset must contain at least one row");
  if (x_.rows() != n) throw DataError("covariate matrix rows do not match response length");
  if (a_.rows() != n) throw DataError("anchor matrix rows do not match response length");
  if (!all_finite(y_) || !all_finite(x_) || !all_finite(a_)) {
    throw DataError("dataset contains non-finite values");
  }
  if (env_ && static_cast<Eigen::Index>(env_->size()) != n) {
    throw DataError("environment labels do not match response length");
  }
}

EnvironmentPartition::EnvironmentPartition(std::vector<std::vector<std::size_t>> groups,
                                           std::size_t n, std::size_t min_group_size)
    : groups_(std::move(groups)), n_(n) {
  std::vector<char> seen(n, 0);
  std::size_t total = 0;
  for (auto& g : groups_) {
    if (g.size() < min_group_size) {
      throw DataError("environment group has " + std::to_string(g.size()) +
                      " rows, minimum is " + std::to_string(min_group_size));
    }
    std::sort(g.begin(), g.end());
    for (auto i : g) {
      if (i >= n) throw DataError("environment group index out of range");
      if (seen[i]) throw DataError("environment groups overlap");
      seen[i] = 1;
      ++total;
    }
  }
  if (total != n) throw DataError("environment groups do not cover all rows");
}

EnvironmentPartition EnvironmentPartition::from_labels(const std::vector<int>& labels,
                                                       std::size_t min_group_size) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(by_label.size());
  for (auto& [label, rows] : by_label) groups.push_back(std::move(rows));
  return EnvironmentPartition(std::move(groups), labels.size(), min_group_size);
}

SubsetS::SubsetS(std::vector<std::size_t> indices, std::optional<std::size_t> p)
    : idx_(std::move(indices)) {
  std::sort(idx_.begin(), idx_.end());
  idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
  if (p && !idx_.empty() && idx_.back() >= *p) throw DataError("subset index out of range");
}

bool SubsetS::contains(std::size_t j) const {
  return std::binary_search(idx_.begin(), idx_.end(), j);
}

bool SubsetS::is_subset_of(const SubsetS& other) const {
  return std::includes(other.idx_.begin(), other.idx_.end(), idx_.begin(), idx_.end());
}

SubsetS SubsetS::intersect(const SubsetS& other) const {
  std::vector<std::size_t> out;
  std::set_intersection(idx_.begin(), idx_.end(), other.idx_.begin(), other.idx_.end(),
                        std::back_inserter(out));
  return SubsetS(std::move(out));
}

std::string SubsetS::label() const {
  std::string s = "{";
  for (std::size_t k = 0; k < idx_.size(); ++k) {
    if (k) s += ",";
    s += "X" + std::to_string(idx_[k] + 1);
  }
  return s + "}";
}

ColumnSchema ColumnSchema::infer(const std::vector<std::string>& header) {
  ColumnSchema schema;
  bool has_y = false;
  std::vector<std::string> xs, as;
  for (const auto& h : header) {
    if (h == "Y") {
      has_y = true;
    } else if (h == "ENV") {
      schema.env = h;
    } else if (is_indexed_name(h, 'X')) {
      xs.push_back(h);
    } else if (is_indexed_name(h, 'A')) {
      as.push_back(h);
    } else {
      throw DataError("unrecognised column '" + h + "'");
    }
  }
  if (!has_y) throw DataError("header has no Y column");
  auto by_index = [](const std::string& l, const std::string& r) {
    return name_index(l) < name_index(r);
  };
  std::sort(xs.begin(), xs.end(), by_index);
  std::sort(as.begin(), as.end(), by_index);
  schema.x = std::move(xs);
  schema.a = std::move(as);
  return schema;
}

EnvDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty file " + path.string());
  return load_csv(path, ColumnSchema::infer(split_csv_line(header)));
}

EnvDataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file " + path.string());
  const auto header = split_csv_line(line);

  auto find = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("schema column '" + name + "' missing from header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t y_col = find(schema.y);
  std::vector<std::size_t> x_cols, a_cols;
  for (const auto& c : schema.x) x_cols.push_back(find(c));
  for (const auto& c : schema.a) a_cols.push_back(find(c));
  std::optional<std::size_t> env_col;
  if (schema.env) env_col = find(*schema.env);

  std::vector<double> ys;
  std::vector<std::vector<double>> xs, as;
  std::vector<int> envs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    ys.push_back(parse_double(cells[y_col], row, schema.y));
    std::vector<double> xr, ar;
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      xr.push_back(parse_double(cells[x_cols[k]], row, schema.x[k]));
    for (std::size_t k = 0; k < a_cols.size(); ++k)
      ar.push_back(parse_double(cells[a_cols[k]], row, schema.a[k]));
    xs.push_back(std::move(xr));
    as.push_back(std::move(ar));
    if (env_col) {
      const double v = parse_double(cells[*env_col], row, *schema.env);
      if (v != std::floor(v)) throw DataError("non-integer environment label at row " + std::to_string(row));
      envs.push_back(static_cast<int>(v));
    }
  }
  const auto n = static_cast<Eigen::Index>(ys.size());
  if (n == 0) throw DataError("no data rows in " + path.string());
  Vector y = Eigen::Map<Vector>(ys.data(), n);
  Matrix x(n, static_cast<Eigen::Index>(x_cols.size()));
  Matrix a(n, static_cast<Eigen::Index>(a_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = xs[i][j];
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = as[i][j];
  }
  std::optional<std::vector<int>> env;
  if (env_col) env = std::move(envs);
  return EnvDataset(std::move(y), std::move(x), std::move(a), std::move(env));
}

void save_csv(const std::filesystem::path& path, const EnvDataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "Y";
  for (std::size_t j = 0; j < data.p(); ++j) out << ",X" << j + 1;
  for (std::size_t j = 0; j < data.r(); ++j) out << ",A" << j + 1;
  if (data.env_labels()) out << ",ENV";
  out << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    put(data.y()(ii));
    for (Eigen::Index j = 0; j < data.x().cols(); ++j) {
      out << ',';
      put(data.x()(ii, j));
    }
    for (Eigen::Index j = 0; j < data.a().cols(); ++j) {
      out << ',';
      put(data.a()(ii, j));
    }
    if (data.env_labels()) out << ',' << (*data.env_labels())[i];
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Matrix dummy_encode(const std::vector<int>& labels, int levels) {
  if (levels < 1) throw DataError("number of levels must be positive");
  std::vector<std::size_t> counts(static_cast<std::size_t>(levels), 0);
  for (int l : labels) {
    if (l < 1 || l > levels) throw DataError("label " + std::to_string(l) + " outside 1.." + std::to_string(levels));
    ++counts[static_cast<std::size_t>(l - 1)];
  }
  for (int k = 0; k < levels; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw DataError("level " + std::to_string(k + 1) + " absent from labels");
    }
  }
  Matrix d = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), levels - 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) d(static_cast<Eigen::Index>(i), labels[i] - 2) = 1.0;
  }
  return d;
}

// Two-pass mean (the second pass absorbs rounding of the first); a constant
// column returns its value exactly so the centered column is exactly zero.
static double column_mean(const Eigen::Ref<const Vector>& v) {
  if ((v.array() == v(0)).all()) return v(0);
  const double m = v.mean();
  return m + (v.array() - m).mean();
}

EnvDataset center(const EnvDataset& data) {
  const double ym = column_mean(data.y());
  Vector xm(data.x().cols());
  for (Eigen::Index j = 0; j < xm.size(); ++j) xm(j) = column_mean(data.x().col(j));
  Vector am(data.a().cols());
  for (Eigen::Index j = 0; j < am.size(); ++j) am(j) = column_mean(data.a().col(j));
  Vector y = data.y().array() - ym;
  Matrix x = data.x().rowwise() - xm.transpose();
  Matrix a = data.a().rowwise() - am.transpose();

  CenteringInfo info{ym, xm, am};
  if (data.centering()) {
    info.y_mean += data.centering()->y_mean;
    info.x_mean += data.centering()->x_mean;
    info.a_mean += data.centering()->a_mean;
  }
  return EnvDataset(std::move(y), std::move(x), std::move(a), data.env_labels(), std::move(info));
}

}  // namespace causalreg
