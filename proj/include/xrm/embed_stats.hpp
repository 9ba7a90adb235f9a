#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xrm/tensor_io.hpp"
#include "xrm/vocab_lang.hpp"

namespace xrm {

inline constexpr std::array<double, 5> kNormQuantileLevels = {0.01, 0.25, 0.50, 0.75, 0.99};
inline constexpr std::size_t kHistogramBins = 64;

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;

  double center() const { return 0.5 * (lower + upper); }
};

// Token-embedding norms of one language's token set. An empty set keeps
// count 0 and zeroed statistics; callers report it as flagged.
struct NormDistribution {
  std::string language;
  std::vector<double> norms;
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  std::array<double, 5> quantiles{};  // at kNormQuantileLevels
  std::vector<HistogramBin> histogram;

  bool empty() const { return count == 0; }
};

// Linear interpolation between closest ranks; sorted must be non-empty.
double quantile_sorted(std::span<const double> sorted, double p);

// Statistics plus a kHistogramBins-bin histogram over [lo, hi].
NormDistribution summarize_norms(std::string language, std::vector<double> norms, double lo,
                                 double hi);

// Norms of every assigned token, grouped by language, histograms on a bin
// grid shared by all languages of the dump.
std::map<std::string, NormDistribution> embedding_norms(const ModelDump& dump,
                                                        const VocabPartition& partition);

// Exact W1 between two empirical distributions: the integral of
// |Q_a(p) - Q_b(p)| over the merged quantile breakpoints.
double wasserstein1(std::span<const double> a, std::span<const double> b);

// Throws ValidationError when either side is empty.
double norm_distance(const NormDistribution& a, const NormDistribution& b);

template <typename Scalar>
struct LogitTriple {
  std::size_t token_index = 0;
  Scalar logit = 0;
  Scalar h_norm = 0;
  Scalar e_norm = 0;
  Scalar cosine = 0;
};

// logit = h.e factored as |h| |e| cos. A zero vector on either side gives
// cosine 0.
template <typename DerivedH, typename DerivedE>
LogitTriple<typename DerivedH::Scalar> logit_triple(const Eigen::MatrixBase<DerivedH>& h,
                                                    const Eigen::MatrixBase<DerivedE>& e,
                                                    std::size_t token_index = 0) {
  using Scalar = typename DerivedH::Scalar;
  LogitTriple<Scalar> t;
  t.token_index = token_index;
  t.logit = h.dot(e.template cast<Scalar>());
  t.h_norm = h.norm();
  t.e_norm = e.template cast<Scalar>().norm();
  if (t.h_norm > Scalar(0) && t.e_norm > Scalar(0)) {
    using std::clamp;
    t.cosine = std::clamp(t.logit / (t.h_norm * t.e_norm), Scalar(-1), Scalar(1));
  }
  return t;
}

// Throws ValidationError when h has the wrong length or an index is outside
// the vocabulary; MissingTensorError without embeddings.
std::vector<LogitTriple<double>> decompose_logits(const Eigen::Ref<const Eigen::VectorXd>& h,
                                                  const ModelDump& dump,
                                                  std::span<const std::size_t> token_indices);

}  // namespace xrm
