#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "scnn/data.hpp"
#include "scnn/tensor.hpp"

namespace scnn {

enum class Unit { Meters, DisparityPx };

/// Focal length (px) times stereo baseline (m) of the KITTI camera rig.
inline constexpr double kKittiFocalBaseline = 721.5377 * 0.54;

/// Error statistics over pixels that are valid in the ground truth.
///
/// delta_i is the fraction of pixels with max(pred/gt, gt/pred) < 1.25^i
/// (strict). A pixel is a KITTI outlier when its error is at least 3 px and
/// at least 5% of the ground truth; the rate is only defined for disparities.
/// `density` is the observed fraction of the input mask, when one was given.
struct MetricsReport {
  MetricsReport(Eigen::Index n_valid, double mae, double rmse, double delta1, double delta2,
                double delta3, std::optional<double> kitti_outlier_rate = std::nullopt,
                std::optional<double> density = std::nullopt);

  Eigen::Index n_valid;
  double mae;
  double rmse;
  double delta1;
  double delta2;
  double delta3;
  std::optional<double> kitti_outlier_rate;
  std::optional<double> density;
};

/// Pools pixels over any number of images before reducing; images are
/// consumed in call order so the result is deterministic.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(Unit unit = Unit::Meters) : unit_(unit) {}

  /// `pred` is (1,1,h,w) or an h x w plane. Every pixel with gt > 0 is
  /// scored; `input_mask`, when given, only feeds the reported density.
  void add(const Tensor4& pred, const DepthMap& gt, const Mask* input_mask = nullptr);
  void add(const DepthMap& pred, const DepthMap& gt, const Mask* input_mask = nullptr);

  Eigen::Index n_valid() const { return n_; }
  /// Throws DegenerateError when no pixel has been scored.
  MetricsReport report() const;

 private:
  void add_plane(const Eigen::Ref<const DepthArray>& pred, const DepthMap& gt, const Mask* input_mask);

  Unit unit_;
  Eigen::Index n_ = 0;
  double abs_sum_ = 0.0;
  double sq_sum_ = 0.0;
  std::array<Eigen::Index, 3> inliers_{};
  Eigen::Index outliers_ = 0;
  Eigen::Index mask_observed_ = 0;
  Eigen::Index mask_total_ = 0;
};

MetricsReport evaluate(const Tensor4& pred, const DepthMap& gt, Unit unit = Unit::Meters,
                       const Mask* input_mask = nullptr);
MetricsReport evaluate(const DepthMap& pred, const DepthMap& gt, Unit unit = Unit::Meters,
                       const Mask* input_mask = nullptr);

/// focal_baseline / depth on observed pixels, 0 elsewhere. Works in both
/// directions since the map is its own inverse.
DepthMap depth_to_disparity(const DepthMap& d, double focal_baseline);

/// Field order shared by the JSON object and CSV row.
std::string_view report_csv_header();
std::string report_to_csv_row(const MetricsReport& r);
std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(std::string_view text);

}  // namespace scnn
