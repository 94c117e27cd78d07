#include "rollcast/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>

namespace rollcast {

Tensor latitude_weights(const std::vector<double>& latitudes) {
  if (latitudes.empty()) throw DataError("latitude_weights: empty latitude list");
  Tensor w({latitudes.size()});
  double mean = 0.0;
  for (std::size_t i = 0; i < latitudes.size(); ++i) {
    if (std::abs(latitudes[i]) >= 90.0) {
      throw DataError("latitude_weights: |latitude| must be < 90");
    }
    w[i] = std::cos(latitudes[i] * M_PI / 180.0);
    mean += w[i];
  }
  mean /= static_cast<double>(latitudes.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] /= mean;
  return w;
}

Tensor cell_weights(const GridSpec& grid) {
  grid.validate();
  Tensor row_w = latitude_weights(grid.latitudes);
  Tensor w({grid.cells()});
  std::size_t i = 0;
  for (std::size_t v = 0; v < grid.V; ++v)
    for (std::size_t h = 0; h < grid.H; ++h)
      for (std::size_t x = 0; x < grid.W; ++x) w[i++] = row_w[h];
  return w;
}

void write_metric_csv(const std::string& path,
                      const std::vector<MetricSeries>& series) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FileFormatError("cannot open metric csv for writing: " + path);
  os << "metric,variable,lead_day,value,run_id\n";
  os.precision(17);
  for (const MetricSeries& s : series) {
    if (s.lead_days.size() != s.values.size()) {
      throw std::invalid_argument("MetricSeries: lead/value lengths differ");
    }
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      os << s.metric << ',' << s.variable << ',' << s.lead_days[i] << ','
         << s.values[i] << ',' << s.run_id << '\n';
    }
  }
}

namespace {

void check_fields(const Tensor& pred, const Tensor& truth, const Tensor& w,
                  const char* op) {
  if (pred.rank() != 2 || !pred.same_shape(truth)) {
    throw ShapeError(std::string(op) + ": fields must be [B,N] with equal shapes; got " +
                     shape_str(pred) + " vs " + shape_str(truth));
  }
  if (w.rank() != 1 || w.size() != pred.shape()[1]) {
    throw ShapeError(std::string(op) + ": weights must be [N]");
  }
}

}  // namespace

MetricResult metric_pcc(const Tensor& pred_anom, const Tensor& true_anom,
                        const Tensor& weights) {
  check_fields(pred_anom, true_anom, weights, "metric_pcc");
  std::size_t B = pred_anom.shape()[0], N = pred_anom.shape()[1];
  MetricResult res;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* p = pred_anom.data() + b * N;
    const double* t = true_anom.data() + b * N;
    double num = 0, dp = 0, dt = 0;
    for (std::size_t i = 0; i < N; ++i) {
      num += weights[i] * p[i] * t[i];
      dp += weights[i] * p[i] * p[i];
      dt += weights[i] * t[i] * t[i];
    }
    if (!(dp > 0.0) || !(dt > 0.0) || !std::isfinite(num)) {
      if (B == 1) {
        throw DataError("metric_pcc: zero-norm anomaly field; correlation undefined");
      }
      ++res.excluded;
      continue;
    }
    // derived from the loss so that metric_pcc == 1 - loss_pcc holds bitwise
    double corr = num / std::sqrt(dp * dt);
    double loss = (corr * -1.0) + 1.0;
    sum += 1.0 - loss;
    ++used;
  }
  if (used == 0) throw DataError("metric_pcc: every sample degenerate");
  res.value = sum / static_cast<double>(used);
  return res;
}

MetricResult metric_tcc(const Tensor& pred_anom, const Tensor& true_anom,
                        const Tensor& weights) {
  check_fields(pred_anom, true_anom, weights, "metric_tcc");
  std::size_t B = pred_anom.shape()[0], N = pred_anom.shape()[1];
  if (B < 2) throw DataError("metric_tcc: needs at least 2 samples");
  MetricResult res;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < N; ++i) {
    double num = 0, dp = 0, dt = 0;
    for (std::size_t b = 0; b < B; ++b) {
      double p = pred_anom[b * N + i];
      double t = true_anom[b * N + i];
      num += p * t;
      dp += p * p;
      dt += t * t;
    }
    if (!(dp > 0.0) || !(dt > 0.0) || !std::isfinite(num)) {
      ++res.excluded;
      continue;
    }
    sum += weights[i] * (num / std::sqrt(dp * dt));
    ++used;
  }
  if (used == 0) throw DataError("metric_tcc: every pixel degenerate");
  res.value = sum / static_cast<double>(used);
  return res;
}

double bivariate_cor(const Tensor& pred_index, const Tensor& true_index) {
  if (pred_index.rank() != 2 || pred_index.shape()[1] != 2 ||
      !pred_index.same_shape(true_index)) {
    throw ShapeError("bivariate_cor: indices must be [B,2] with equal shapes");
  }
  std::size_t B = pred_index.shape()[0];
  if (B < 2) throw DataError("bivariate_cor: needs at least 2 samples");
  double num = 0, np = 0, nt = 0;
  for (std::size_t b = 0; b < B; ++b) {
    double p1 = pred_index[2 * b], p2 = pred_index[2 * b + 1];
    double t1 = true_index[2 * b], t2 = true_index[2 * b + 1];
    num += p1 * t1 + p2 * t2;
    np += p1 * p1 + p2 * p2;
    nt += t1 * t1 + t2 * t2;
  }
  if (!(np > 0.0) || !(nt > 0.0)) {
    throw DataError("bivariate_cor: zero-norm index series");
  }
  return num / (std::sqrt(np) * std::sqrt(nt));
}

double linear_cka(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.shape()[0] != y.shape()[0]) {
    throw ShapeError("linear_cka: features must be [n,p] and [n,q] with equal n");
  }
  std::size_t n = x.shape()[0];
  if (n < 2) throw DataError("linear_cka: needs n >= 2 rows");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> mx(x.data(), static_cast<Eigen::Index>(n),
                              static_cast<Eigen::Index>(x.shape()[1]));
  Eigen::Map<const RowMat> my(y.data(), static_cast<Eigen::Index>(n),
                              static_cast<Eigen::Index>(y.shape()[1]));
  RowMat xc = mx.rowwise() - mx.colwise().mean();
  RowMat yc = my.rowwise() - my.colwise().mean();
  double nxx = (xc.transpose() * xc).norm();  // ||X^T X||_F
  double nyy = (yc.transpose() * yc).norm();
  if (!(nxx > 0.0) || !(nyy > 0.0)) {
    throw DataError("linear_cka: zero-variance feature matrix");
  }
  double nxy = (yc.transpose() * xc).squaredNorm();  // ||Y^T X||_F^2
  return nxy / (nxx * nyy);
}

}  // namespace rollcast
