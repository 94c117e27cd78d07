#pragma once

#include <string>
#include <vector>

#include "rollcast/dynamics.hpp"
#include "rollcast/tensor.hpp"

namespace rollcast {

/// Cosine latitude weights normalized to mean 1 over rows.
Tensor latitude_weights(const std::vector<double>& latitudes);

/// Latitude weights expanded to one value per grid cell ([V*H*W]).
Tensor cell_weights(const GridSpec& grid);

/// Per-lead-time skill values for CSV emission.
struct MetricSeries {
  std::string metric;
  std::string variable = "all";
  std::string run_id;
  std::vector<int> lead_days;
  std::vector<double> values;
};

void write_metric_csv(const std::string& path,
                      const std::vector<MetricSeries>& series);

/// Aggregate-metric result; degenerate samples/pixels are excluded and
/// counted rather than silently zeroed.
struct MetricResult {
  double value = 0.0;
  std::size_t excluded = 0;
};

/// Spatial uncentered weighted correlation per sample, averaged over the
/// test set. Fields are [B, N]; weights [N]. A zero-norm field in a sample
/// excludes that sample (error when B == 1).
MetricResult metric_pcc(const Tensor& pred_anom, const Tensor& true_anom,
                        const Tensor& weights);

/// Per-pixel temporal uncentered correlation over the test set, weighted
/// spatial mean. Fields are [B, N]; weights [N]. Zero-variance pixels are
/// excluded (error when every pixel degenerates).
MetricResult metric_tcc(const Tensor& pred_anom, const Tensor& true_anom,
                        const Tensor& weights);

/// Bivariate correlation for two-component index series ([B, 2] each).
double bivariate_cor(const Tensor& pred_index, const Tensor& true_index);

/// Linear centered kernel alignment between feature matrices X [n, p] and
/// Y [n, q]; features are column-centered internally. Value in [0, 1].
double linear_cka(const Tensor& x, const Tensor& y);

}  // namespace rollcast
