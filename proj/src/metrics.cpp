#include "scnn/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace scnn {

MetricsReport::MetricsReport(Eigen::Index n_valid_, double mae_, double rmse_, double delta1_,
                             double delta2_, double delta3_,
                             std::optional<double> kitti_outlier_rate_,
                             std::optional<double> density_)
    : n_valid(n_valid_),
      mae(mae_),
      rmse(rmse_),
      delta1(delta1_),
      delta2(delta2_),
      delta3(delta3_),
      kitti_outlier_rate(kitti_outlier_rate_),
      density(density_) {
  if (n_valid < 1) throw DegenerateError("metrics report needs at least one valid pixel");
}

void MetricsAccumulator::add(const Tensor4& pred, const DepthMap& gt, const Mask* input_mask) {
  if (pred.batch() != 1 || pred.channels() != 1) {
    throw ShapeError("evaluate expects a (1,1,h,w) prediction, got " + to_string(pred.shape()));
  }
  add_plane(pred.plane(0, 0).array(), gt, input_mask);
}

void MetricsAccumulator::add(const DepthMap& pred, const DepthMap& gt, const Mask* input_mask) {
  add_plane(pred.depth(), gt, input_mask);
}

void MetricsAccumulator::add_plane(const Eigen::Ref<const DepthArray>& pred, const DepthMap& gt,
                                   const Mask* input_mask) {
  if (pred.rows() != gt.height() || pred.cols() != gt.width()) {
    throw ShapeError("prediction " + std::to_string(pred.rows()) + "x" +
                     std::to_string(pred.cols()) + " vs ground truth " +
                     std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  if (input_mask) {
    const Shape4& s = input_mask->shape();
    if (s.n != 1 || s.h != gt.height() || s.w != gt.width()) {
      throw ShapeError("input mask " + to_string(s) + " not aligned with ground truth");
    }
    mask_observed_ += input_mask->count();
    mask_total_ += gt.size();
  }
  const std::array<double, 3> thresholds{1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25};
  for (Eigen::Index y = 0; y < gt.height(); ++y)
    for (Eigen::Index x = 0; x < gt.width(); ++x) {
      const double g = gt(y, x);
      if (!(g > 0.0)) continue;
      const double p = pred(y, x);
      const double e = std::abs(p - g);
      ++n_;
      abs_sum_ += e;
      sq_sum_ += e * e;
      if (p > 0.0) {
        const double ratio = std::max(p / g, g / p);
        for (int i = 0; i < 3; ++i)
          if (ratio < thresholds[i]) ++inliers_[i];
      }
      if (e >= 3.0 && e / g >= 0.05) ++outliers_;
    }
}

MetricsReport MetricsAccumulator::report() const {
  if (n_ == 0) throw DegenerateError("no ground-truth-valid pixels to evaluate");
  const double n = static_cast<double>(n_);
  std::optional<double> kitti;
  if (unit_ == Unit::DisparityPx) kitti = static_cast<double>(outliers_) / n;
  std::optional<double> density;
  if (mask_total_ > 0) density = static_cast<double>(mask_observed_) / static_cast<double>(mask_total_);
  return MetricsReport(n_, abs_sum_ / n, std::sqrt(sq_sum_ / n), inliers_[0] / n, inliers_[1] / n,
                       inliers_[2] / n, kitti, density);
}

MetricsReport evaluate(const Tensor4& pred, const DepthMap& gt, Unit unit, const Mask* input_mask) {
  MetricsAccumulator acc(unit);
  acc.add(pred, gt, input_mask);
  return acc.report();
}

MetricsReport evaluate(const DepthMap& pred, const DepthMap& gt, Unit unit, const Mask* input_mask) {
  MetricsAccumulator acc(unit);
  acc.add(pred, gt, input_mask);
  return acc.report();
}

DepthMap depth_to_disparity(const DepthMap& d, double focal_baseline) {
  if (!(focal_baseline > 0.0)) throw ConfigError("focal_baseline must be > 0");
  DepthArray out = (d.depth() > 0.0).select(focal_baseline / d.depth(), 0.0);
  return DepthMap(std::move(out));
}

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v, const char* missing) {
  return v ? fmt9(*v) : std::string(missing);
}

}  // namespace

std::string_view report_csv_header() {
  return "n_valid,mae,rmse,delta1,delta2,delta3,kitti_outlier_rate,density";
}

std::string report_to_csv_row(const MetricsReport& r) {
  return std::to_string(r.n_valid) + "," + fmt9(r.mae) + "," + fmt9(r.rmse) + "," +
         fmt9(r.delta1) + "," + fmt9(r.delta2) + "," + fmt9(r.delta3) + "," +
         fmt_opt(r.kitti_outlier_rate, "") + "," + fmt_opt(r.density, "");
}

std::string report_to_json(const MetricsReport& r) {
  return "{\"n_valid\":" + std::to_string(r.n_valid) + ",\"mae\":" + fmt9(r.mae) +
         ",\"rmse\":" + fmt9(r.rmse) + ",\"delta1\":" + fmt9(r.delta1) +
         ",\"delta2\":" + fmt9(r.delta2) + ",\"delta3\":" + fmt9(r.delta3) +
         ",\"kitti_outlier_rate\":" + fmt_opt(r.kitti_outlier_rate, "null") +
         ",\"density\":" + fmt_opt(r.density, "null") + "}";
}

MetricsReport report_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::BadHeader, std::string("metrics JSON: ") + e.what());
  }
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  try {
    return MetricsReport(j.at("n_valid").get<Eigen::Index>(), j.at("mae").get<double>(),
                         j.at("rmse").get<double>(), j.at("delta1").get<double>(),
                         j.at("delta2").get<double>(), j.at("delta3").get<double>(),
                         opt("kitti_outlier_rate"), opt("density"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Inconsistent, std::string("metrics JSON: ") + e.what());
  }
}

}  // namespace scnn
