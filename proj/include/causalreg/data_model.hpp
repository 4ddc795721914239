#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace causalreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Column means removed by center(); accumulated when centering is repeated.
struct CenteringInfo {
  double y_mean = 0.0;
  Vector x_mean;
  Vector a_mean;
};

/// Response, covariates, anchors and optional discrete environment labels,
/// row-aligned. Immutable after construction; the constructor validates shape
/// and finiteness.
class EnvDataset {
 public:
  EnvDataset(Vector y, Matrix x, Matrix a,
             std::optional<std::vector<int>> env_labels = std::nullopt,
             std::optional<CenteringInfo> centering = std::nullopt);

  const Vector& y() const noexcept { return y_; }
  const Matrix& x() const noexcept { return x_; }
  const Matrix& a() const noexcept { return a_; }
  const std::optional<std::vector<int>>& env_labels() const noexcept { return env_; }
  const std::optional<CenteringInfo>& centering() const noexcept { return centering_; }

  std::size_t n() const noexcept { return static_cast<std::size_t>(y_.size()); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(x_.cols()); }
  std::size_t r() const noexcept { return static_cast<std::size_t>(a_.cols()); }

 private:
  Vector y_;
  Matrix x_;
  Matrix a_;
  std::optional<std::vector<int>> env_;
  std::optional<CenteringInfo> centering_;
};

/// Disjoint groups of row indices covering 0..n-1.
class EnvironmentPartition {
 public:
  EnvironmentPartition(std::vector<std::vector<std::size_t>> groups, std::size_t n,
                       std::size_t min_group_size = 2);

  /// Groups rows by label; groups are ordered by ascending label.
  static EnvironmentPartition from_labels(const std::vector<int>& labels,
                                          std::size_t min_group_size = 2);

  const std::vector<std::vector<std::size_t>>& groups() const noexcept { return groups_; }
  std::size_t size() const noexcept { return groups_.size(); }
  std::size_t n() const noexcept { return n_; }

 private:
  std::vector<std::vector<std::size_t>> groups_;
  std::size_t n_;
};

/// Sorted set of zero-based covariate indices (possibly empty).
class SubsetS {
 public:
  SubsetS() = default;
  explicit SubsetS(std::vector<std::size_t> indices, std::optional<std::size_t> p = std::nullopt);

  const std::vector<std::size_t>& indices() const noexcept { return idx_; }
  std::size_t size() const noexcept { return idx_.size(); }
  bool empty() const noexcept { return idx_.empty(); }
  bool contains(std::size_t j) const;
  bool is_subset_of(const SubsetS& other) const;
  SubsetS intersect(const SubsetS& other) const;

  /// "{X2,X3}" style label with one-based names.
  std::string label() const;

  friend bool operator==(const SubsetS&, const SubsetS&) = default;

 private:
  std::vector<std::size_t> idx_;
};

struct ColumnSchema {
  std::string y = "Y";
  std::vector<std::string> x;
  std::vector<std::string> a;
  std::optional<std::string> env;

  /// Y, X1..Xp, A1..Ar, optional ENV, recognised by name from a header row.
  static ColumnSchema infer(const std::vector<std::string>& header);
};

EnvDataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema);
EnvDataset load_csv(const std::filesystem::path& path);

/// Writes Y, X1..Xp, A1..Ar[, ENV] with 17 significant digits so that a
/// reload reproduces every value exactly.
void save_csv(const std::filesystem::path& path, const EnvDataset& data);

/// Indicator columns for levels 2..m (level 1 is the reference).
Matrix dummy_encode(const std::vector<int>& labels, int levels);

/// Subtracts column means of y, x and a; the removed means are recorded.
EnvDataset center(const EnvDataset& data);

}  // namespace causalreg
