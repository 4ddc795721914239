#include "causalreg/importance.hpp"

#include "causalreg/error.hpp"
#include "causalreg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace causalreg {

namespace {

double median_abs(const Vector& r) {
  std::vector<double> v(static_cast<std::size_t>(r.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) v[static_cast<std::size_t>(i)] = std::abs(r(i));
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

std::vector<std::size_t> importance_ranks(const Vector& importance) {
  std::vector<std::size_t> order(static_cast<std::size_t>(importance.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importance(static_cast<Eigen::Index>(a)) < importance(static_cast<Eigen::Index>(b));
  });
  std::vector<std::size_t> ranks(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) ranks[order[pos]] = pos + 1;
  return ranks;
}

ImportanceReport permutation_importance(const Predictor& predictor, const EnvDataset& data,
                                        const ImportanceOptions& options) {
  const std::size_t n = data.n();
  const std::size_t p = data.p();
  if (n < 2) throw DataError("permutation importance needs at least two rows");
  if (options.repetitions < 1) throw UsageError("repetitions must be at least 1");

  const Vector base_res = data.y() - predictor.predict(data.x());
  const double rss = base_res.squaredNorm() / static_cast<double>(n);
  const double h = median_abs(base_res);
  if (!(rss > 0.0) || !(h > 0.0))
    throw NumericError("permutation importance: the predictor fits the training data exactly");

  ImportanceReport report;
  report.imp_rss = Vector::Zero(static_cast<Eigen::Index>(p));
  report.imp_med = Vector::Zero(static_cast<Eigen::Index>(p));
  report.seed = options.seed;
  report.repetitions = options.repetitions;

  parallel_for(p, options.threads, [&](std::size_t j) {
    const auto col = static_cast<Eigen::Index>(j);
    Matrix xp = data.x();
    std::vector<std::size_t> perm(n);
    double sum_rss = 0.0;
    double sum_med = 0.0;
    for (std::size_t rep = 0; rep < options.repetitions; ++rep) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      if (!options.identity_permutation) {
        std::mt19937_64 rng(derive_seed(derive_seed(options.seed, j), rep));
        std::shuffle(perm.begin(), perm.end(), rng);
      }
      for (std::size_t i = 0; i < n; ++i)
        xp(static_cast<Eigen::Index>(i), col) = data.x()(static_cast<Eigen::Index>(perm[i]), col);
      const Vector res = data.y() - predictor.predict(xp);
      sum_rss += (res.squaredNorm() / static_cast<double>(n) - rss) / rss;
      sum_med += (median_abs(res) - h) / h;
    }
    report.imp_rss(col) = sum_rss / static_cast<double>(options.repetitions);
    report.imp_med(col) = sum_med / static_cast<double>(options.repetitions);
  });

  report.rank_rss = importance_ranks(report.imp_rss);
  report.rank_med = importance_ranks(report.imp_med);
  return report;
}

Vector forest_oob_importance(const Forest& forest, const Matrix& x, const Vector& y, std::uint64_t seed) {
  const auto p = x.cols();
  const auto n = static_cast<std::size_t>(x.rows());
  Vector total = Vector::Zero(p);
  std::size_t used = 0;
  for (std::size_t t = 0; t < forest.trees().size(); ++t) {
    const auto& inbag = forest.inbag()[t];
    if (inbag.size() != n) throw UsageError("OOB importance needs the forest's training data");
    std::vector<Eigen::Index> oob;
    for (std::size_t i = 0; i < n; ++i)
      if (inbag[i] == 0) oob.push_back(static_cast<Eigen::Index>(i));
    if (oob.size() < 2) continue;
    ++used;
    const auto m = static_cast<Eigen::Index>(oob.size());
    Matrix xo(m, p);
    Vector yo(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      xo.row(k) = x.row(oob[static_cast<std::size_t>(k)]);
      yo(k) = y(oob[static_cast<std::size_t>(k)]);
    }
    const Tree& tree = forest.trees()[t];
    const double base = (yo - tree.predict(xo)).squaredNorm() / static_cast<double>(m);
    std::mt19937_64 rng(derive_seed(seed, t));
    std::vector<Eigen::Index> perm(oob.size());
    for (Eigen::Index j = 0; j < p; ++j) {
      std::iota(perm.begin(), perm.end(), Eigen::Index{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix xpj = xo;
      for (Eigen::Index k = 0; k < m; ++k) xpj(k, j) = xo(perm[static_cast<std::size_t>(k)], j);
      total(j) += (yo - tree.predict(xpj)).squaredNorm() / static_cast<double>(m) - base;
    }
  }
  if (used == 0) throw NumericError("OOB importance: no tree has out-of-bag rows");
  return total / static_cast<double>(used);
}

std::string importance_csv(const ImportanceReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "variable,imp_rss,imp_med,rank_rss,rank_med\n";
  for (Eigen::Index j = 0; j < report.imp_rss.size(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    out << 'X' << j + 1 << ',' << report.imp_rss(j) << ',' << report.imp_med(j) << ','
        << report.rank_rss[k] << ',' << report.rank_med[k] << '\n';
  }
  return out.str();
}

}  // namespace causalreg
