#include "kdv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <vector>

#include "kdv/errors.hpp"

namespace kdv {

DecayFit fit_decay(const TrajectoryRecord& rec, double s, double t_start, double t_end) {
  if (!(t_start < t_end)) throw ParameterError("fit_decay: window must satisfy t_start < t_end");
  const bool use_l2 = s == 0.0;
  if (!use_l2 && s != rec.hs_index) {
    throw UsageError("fit_decay: record carries norms for s = 0 and s = " + std::to_string(rec.hs_index) + " only");
  }
  std::vector<std::pair<double, double>> pts;
  bool truncated = false;
  for (const auto& smp : rec.samples) {
    if (smp.t < t_start || smp.t > t_end) continue;
    const double norm = use_l2 ? smp.l2 : smp.hs;
    if (!(norm > kNoiseFloor)) {
      truncated = true;
      break;
    }
    pts.emplace_back(smp.t, std::log(norm));
  }
  if (pts.size() < 10) {
    throw UsageError("fit_decay: fewer than 10 usable samples in the window" +
                     std::string(truncated ? " (norm reached the noise floor)" : ""));
  }
  if (truncated) std::clog << "fit_decay: window truncated at the noise floor\n";
  const double n = static_cast<double>(pts.size());
  double mt = 0.0, my = 0.0;
  for (const auto& [t, y] : pts) {
    mt += t;
    my += y;
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0;
  for (const auto& [t, y] : pts) {
    stt += (t - mt) * (t - mt);
    sty += (t - mt) * (y - my);
  }
  const double slope = sty / stt;
  DecayFit fit;
  fit.rate = -slope;
  fit.intercept = my - slope * mt;
  double ss = 0.0;
  for (const auto& [t, y] : pts) {
    const double e = y - (fit.intercept + slope * t);
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / n);
  fit.t_start = pts.front().first;
  fit.t_end = pts.back().first;
  fit.norm_index = s;
  fit.samples = static_cast<int>(pts.size());
  fit.truncated = truncated;
  return fit;
}

DecayFit fit_decay(const TrajectoryRecord& rec, double s) {
  if (rec.samples.size() < 2) throw UsageError("fit_decay: record has too few samples");
  const double t0 = rec.samples.front().t;
  const double t1 = rec.samples.back().t;
  return fit_decay(rec, s, t0 + 0.2 * (t1 - t0), t1);
}

double energy_residual(const TrajectoryRecord& rec) {
  if (rec.law != "damping") throw UsageError("energy_residual: needs a record of the damping closed loop");
  if (rec.samples.empty()) throw UsageError("energy_residual: empty record");
  const double e0 = rec.initial_l2_sq;
  double worst = 0.0;
  for (const auto& s : rec.samples) worst = std::max(worst, std::abs(s.l2 * s.l2 - e0 - s.work));
  if (e0 == 0.0) return worst;
  return worst / e0;
}

double observability_constant(const OperatorMatrix& gramian, int band) {
  const int K = gramian.n_modes() / 2 - 1;
  if (band < 1 || band > K) throw ParameterError("observability_constant: band must lie in [1, N/2-1]");
  std::vector<int> idx;
  for (int k = -band; k <= band; ++k) {
    if (k != 0) idx.push_back(mode_index(k, K));
  }
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXcd sub(m, m);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) sub(r, c) = gramian.entries()(idx[r], idx[c]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(sub, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double energy_drift(const TrajectoryRecord& rec) {
  if (rec.samples.empty()) return 0.0;
  auto i2 = [](const TrajectorySample& s) { return s.l2 * s.l2 + s.mass * s.mass; };
  const double ref = i2(rec.samples.front());
  double worst = 0.0;
  for (const auto& s : rec.samples) worst = std::max(worst, std::abs(i2(s) - ref));
  return ref > 0.0 ? worst / ref : worst;
}

double mass_drift(const TrajectoryRecord& rec) {
  if (rec.samples.empty()) return 0.0;
  double worst = 0.0;
  for (const auto& s : rec.samples) worst = std::max(worst, std::abs(s.mass - rec.samples.front().mass));
  return worst;
}

}  // namespace kdv
