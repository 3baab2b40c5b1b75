#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "caps/config.hpp"
#include "caps/errors.hpp"
#include "caps/model.hpp"
#include "caps/weights.hpp"

namespace caps::sas {

using FeatureRow = std::array<double, kSasFeatureCount>;

inline constexpr int kArtifactSchemaVersion = 1;

struct CohortStats {
  FeatureRow means{};
  FeatureRow stds{};  // population convention (divide by n)
  std::size_t n = 0;
};

struct PcaResult {
  FeatureRow pc1{};
  FeatureRow pc2{};
  std::array<double, 2> explained_variance{};
};

inline CohortStats fit_cohort_stats(std::span<const AcademicRecord> records) {
  if (records.empty()) throw EmptyCohortError("cohort statistics need at least one record");
  CohortStats stats;
  stats.n = records.size();
  const double n = static_cast<double>(records.size());
  for (const auto& r : records) {
    const auto x = r.features();
    for (std::size_t j = 0; j < kSasFeatureCount; ++j) stats.means[j] += x[j];
  }
  for (auto& m : stats.means) m /= n;
  for (const auto& r : records) {
    const auto x = r.features();
    for (std::size_t j = 0; j < kSasFeatureCount; ++j) {
      const double d = x[j] - stats.means[j];
      stats.stds[j] += d * d;
    }
  }
  for (auto& s : stats.stds) s = std::sqrt(s / n);
  return stats;
}

// Zero-variance features map to z = 0.
inline FeatureRow zscore(const AcademicRecord& record, const CohortStats& stats) {
  FeatureRow z{};
  const auto x = record.features();
  for (std::size_t j = 0; j < kSasFeatureCount; ++j)
    z[j] = stats.stds[j] > 0.0 ? (x[j] - stats.means[j]) / stats.stds[j] : 0.0;
  return z;
}

/// First two principal components of an n x 5 matrix, via eigendecomposition
/// of its sample covariance. Each component is oriented so that its loadings
/// sum to <= 0 (ties: first nonzero loading negative), which fixes the sign
/// for the negation applied by derive_pca_weights.
inline PcaResult compute_pca(std::span<const FeatureRow> rows) {
  const auto n = rows.size();
  if (n < 3) throw DegenerateCovarianceError("PCA needs at least 3 rows (got " + std::to_string(n) + ")");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kSasFeatureCount));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kSasFeatureCount; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DegenerateCovarianceError("eigendecomposition failed");
  const auto& values = solver.eigenvalues();  // ascending
  const auto& vectors = solver.eigenvectors();
  const Eigen::Index last = values.size() - 1;
  const double largest = values(last);
  if (!(largest > 0.0) || values(last - 1) <= 1e-10 * largest)
    throw DegenerateCovarianceError("covariance has rank < 2");

  auto oriented = [&](Eigen::Index col) {
    FeatureRow v{};
    double sum = 0.0;
    for (std::size_t j = 0; j < kSasFeatureCount; ++j) {
      v[j] = vectors(static_cast<Eigen::Index>(j), col);
      sum += v[j];
    }
    bool flip = sum > 1e-12;
    if (std::abs(sum) <= 1e-12) {
      for (double c : v)
        if (std::abs(c) > 1e-12) {
          flip = c > 0.0;
          break;
        }
    }
    if (flip)
      for (double& c : v) c = -c;
    return v;
  };

  PcaResult pca;
  pca.pc1 = oriented(last);
  pca.pc2 = oriented(last - 1);
  pca.explained_variance = {values(last), values(last - 1)};
  return pca;
}

inline std::vector<WeightVector::Entry> named(const FeatureRow& v) {
  std::vector<WeightVector::Entry> entries;
  for (std::size_t j = 0; j < kSasFeatureCount; ++j) entries.emplace_back(kSasFeatureNames[j], v[j]);
  return entries;
}

/// w_raw = -(alpha * PC1 + beta * PC2) under the orientation of compute_pca;
/// negative entries are clamped to 0 before unit-sum normalization.
inline WeightVector pca_weights(const PcaResult& pca, double alpha_pca, double beta_pca) {
  FeatureRow raw{};
  for (std::size_t j = 0; j < kSasFeatureCount; ++j) raw[j] = -(alpha_pca * pca.pc1[j] + beta_pca * pca.pc2[j]);
  try {
    return WeightVector::clamped(named(raw));
  } catch (const ValidationError&) {
    throw DegenerateCovarianceError("PCA direction has no positive loadings");
  }
}

inline WeightVector derive_pca_weights(std::span<const FeatureRow> z_matrix, double alpha_pca, double beta_pca) {
  return pca_weights(compute_pca(z_matrix), alpha_pca, beta_pca);
}

inline WeightVector fuse_weights(const WeightVector& w_pca, const WeightVector& w_manual, double alpha_fusion) {
  if (!w_pca.same_names(w_manual)) throw FeatureMismatchError("PCA and manual weights cover different features");
  if (!(alpha_fusion >= 0.0 && alpha_fusion <= 1.0)) throw ValidationError("alpha_fusion", "out of [0,1]");
  std::vector<WeightVector::Entry> fused;
  for (std::size_t j = 0; j < w_pca.size(); ++j)
    fused.emplace_back(w_pca.name(j), alpha_fusion * w_pca[j] + (1.0 - alpha_fusion) * w_manual[j]);
  return WeightVector::exact(std::move(fused));
}

inline double sas_raw(std::span<const double> z, const WeightVector& w_fused) { return w_fused.dot(z); }

// Max-subtracted softmax.
inline std::vector<double> sas_softmax(std::span<const double> raw) {
  if (raw.empty()) throw EmptyCohortError("softmax over an empty cohort");
  const double top = *std::max_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size());
  double total = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = std::exp(raw[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double sas_scale(double softmax_value) { return 100.0 * logistic((softmax_value - 1.5) * 2.5); }

// ---------------------------------------------------------------------------
// Cohort chain

/// Everything fitted from a reference cohort: scaling statistics, principal
/// components and the resulting weights. Scoring against a fixed
/// calibration keeps every other applicant's raw score unchanged when one
/// applicant's record changes.
struct SasCalibration {
  CohortStats stats;
  PcaResult pca;
  WeightVector w_pca;
  WeightVector w_fused;
};

inline SasCalibration fit_calibration(std::span<const AcademicRecord> records, const CapsConfig& config) {
  SasCalibration cal;
  cal.stats = fit_cohort_stats(records);
  std::vector<FeatureRow> z;
  z.reserve(records.size());
  for (const auto& r : records) z.push_back(zscore(r, cal.stats));
  cal.pca = compute_pca(z);
  cal.w_pca = pca_weights(cal.pca, config.alpha_pca, config.beta_pca);
  cal.w_fused = fuse_weights(cal.w_pca, config.manual_sas_weights, config.alpha_fusion);
  return cal;
}

struct SasScore {
  FeatureRow z{};
  double raw = 0.0;
  double softmax = 0.0;  // or min-max position under SasScaling::minmax
  double scaled = 0.0;   // [0, 100]
  double unit = 0.0;     // scaled / 100
};

inline std::vector<SasScore> score_cohort_sas(std::span<const AcademicRecord> records, const SasCalibration& cal,
                                              const CapsConfig& config) {
  if (records.empty()) throw EmptyCohortError("cannot score an empty cohort");
  std::vector<SasScore> out(records.size());
  std::vector<double> raw(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out[i].z = zscore(records[i], cal.stats);
    raw[i] = out[i].raw = sas_raw(out[i].z, cal.w_fused);
  }
  if (config.sas_scaling == SasScaling::softmax) {
    const auto soft = sas_softmax(raw);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].softmax = soft[i];
      out[i].scaled = sas_scale(soft[i]);
    }
  } else {
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].softmax = *hi > *lo ? (raw[i] - *lo) / (*hi - *lo) : 0.5;
      out[i].scaled = 100.0 * out[i].softmax;
    }
  }
  for (auto& s : out) s.unit = s.scaled / 100.0;
  return out;
}

inline std::vector<SasScore> score_cohort_sas(std::span<const AcademicRecord> records, const CapsConfig& config) {
  return score_cohort_sas(records, fit_calibration(records, config), config);
}

// ---------------------------------------------------------------------------
// Artifact JSON

inline void to_json(nlohmann::json& j, const CohortStats& s) {
  j = {{"means", s.means}, {"stds", s.stds}, {"n", s.n}};
}
inline void from_json(const nlohmann::json& j, CohortStats& s) {
  s.means = j.at("means").get<FeatureRow>();
  s.stds = j.at("stds").get<FeatureRow>();
  s.n = j.at("n").get<std::size_t>();
}
inline void to_json(nlohmann::json& j, const PcaResult& p) {
  j = {{"pc1", p.pc1}, {"pc2", p.pc2}, {"explained_variance", p.explained_variance}};
}
inline void from_json(const nlohmann::json& j, PcaResult& p) {
  p.pc1 = j.at("pc1").get<FeatureRow>();
  p.pc2 = j.at("pc2").get<FeatureRow>();
  p.explained_variance = j.at("explained_variance").get<std::array<double, 2>>();
}
inline void to_json(nlohmann::json& j, const SasCalibration& c) {
  j = {{"schema_version", kArtifactSchemaVersion}, {"kind", "sas_calibration"}, {"features", kSasFeatureNames},
       {"stats", c.stats}, {"pca", c.pca}, {"w_pca", c.w_pca}, {"w_fused", c.w_fused}};
}
inline void from_json(const nlohmann::json& j, SasCalibration& c) {
  const int version = j.at("schema_version").get<int>();
  if (version > kArtifactSchemaVersion)
    throw VersionError("SAS calibration schema_version " + std::to_string(version) + " is newer than supported " +
                       std::to_string(kArtifactSchemaVersion));
  c.stats = j.at("stats").get<CohortStats>();
  c.pca = j.at("pca").get<PcaResult>();
  c.w_pca = j.at("w_pca").get<WeightVector>();
  c.w_fused = j.at("w_fused").get<WeightVector>();
}

inline void to_json(nlohmann::json& j, const SasScore& s) {
  j = {{"z", s.z}, {"raw", s.raw}, {"softmax", s.softmax}, {"scaled", s.scaled}, {"unit", s.unit}};
}

}  // namespace caps::sas
