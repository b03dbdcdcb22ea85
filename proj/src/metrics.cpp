#include "nar/metrics.hpp"

#include <cmath>

#include "json.hpp"

namespace nar {

SelectionScore selection_score(const std::vector<CoefficientMask>& truth,
                               const std::vector<CoefficientMask>& selected) {
  if (truth.empty() || truth.size() != selected.size())
    fail(ErrorKind::ShapeMismatch, "need matching nonempty replicate lists");
  double tpr_sum = 0.0, fpr_sum = 0.0, ams_sum = 0.0;
  int tpr_count = 0, fpr_count = 0;
  for (size_t r = 0; r < truth.size(); ++r) {
    const CoefficientMask& t = truth[r];
    const CoefficientMask& s = selected[r];
    if (t.p != s.p || t.m != s.m || t.active.size() != s.active.size())
      fail(ErrorKind::ShapeMismatch,
           "replicate " + std::to_string(r + 1) + " shapes differ");
    long tp = 0, fp = 0, pos = 0, neg = 0, chosen = 0;
    for (size_t c = 0; c < t.active.size(); ++c) {
      const bool ta = t.active[c] != 0, sa = s.active[c] != 0;
      if (ta) {
        ++pos;
        if (sa) ++tp;
      } else {
        ++neg;
        if (sa) ++fp;
      }
      if (sa) ++chosen;
    }
    ams_sum += static_cast<double>(chosen);
    if (pos > 0) {
      tpr_sum += static_cast<double>(tp) / static_cast<double>(pos);
      ++tpr_count;
    }
    if (neg > 0) {
      fpr_sum += static_cast<double>(fp) / static_cast<double>(neg);
      ++fpr_count;
    }
  }
  SelectionScore score;
  score.replicates = static_cast<int>(truth.size());
  score.ams = ams_sum / static_cast<double>(truth.size());
  // a rate whose truth class never appears stays absent
  if (tpr_count > 0) score.tpr = tpr_sum / tpr_count;
  if (fpr_count > 0) score.fpr = fpr_sum / fpr_count;
  return score;
}

namespace {

void check_pair(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted) {
  if (actual.rows() != predicted.rows() || actual.cols() != predicted.cols())
    fail(ErrorKind::ShapeMismatch, "actual and predicted shapes differ");
  if (actual.size() == 0) fail(ErrorKind::EmptyPanel, "no cells to score");
}

}  // namespace

double mspe(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted) {
  check_pair(actual, predicted);
  return (actual - predicted).squaredNorm() / static_cast<double>(actual.size());
}

MapeResult mape(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted) {
  check_pair(actual, predicted);
  double sum = 0.0;
  long used = 0;
  MapeResult out;
  for (Eigen::Index c = 0; c < actual.cols(); ++c)
    for (Eigen::Index r = 0; r < actual.rows(); ++r) {
      const double a = actual(r, c);
      if (std::abs(a) < 1e-12) {
        ++out.excluded;
        continue;
      }
      sum += std::abs((a - predicted(r, c)) / a);
      ++used;
    }
  if (used == 0)
    fail(ErrorKind::AllCellsExcluded, "every actual value is within 1e-12 of zero");
  out.percent = 100.0 * sum / static_cast<double>(used);
  return out;
}

double nrmse(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted) {
  check_pair(actual, predicted);
  const double denom = actual.mean();
  if (denom == 0.0)
    fail(ErrorKind::ZeroNormalizer, "mean of the actual values is zero");
  const double mse =
      (actual - predicted).squaredNorm() / static_cast<double>(actual.size());
  return mse / denom;
}

double nrmse_conventional(const Eigen::MatrixXd& actual,
                          const Eigen::MatrixXd& predicted) {
  check_pair(actual, predicted);
  const double denom = actual.mean();
  if (denom == 0.0)
    fail(ErrorKind::ZeroNormalizer, "mean of the actual values is zero");
  const double mse =
      (actual - predicted).squaredNorm() / static_cast<double>(actual.size());
  return std::sqrt(mse) / denom;
}

std::string MetricsBundle::to_json_text() const {
  nlohmann::ordered_json j;
  if (tpr) j["tpr"] = *tpr;
  if (fpr) j["fpr"] = *fpr;
  if (ams) j["ams"] = *ams;
  if (mspe) j["mspe"] = *mspe;
  if (mape) j["mape"] = *mape;
  if (nrmse) j["nrmse"] = *nrmse;
  return j.dump(2);
}

}  // namespace nar
