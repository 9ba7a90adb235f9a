#include "xrm/embed_stats.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "xrm/errors.hpp"
#include "xrm/log.hpp"
#include "xrm/parallel.hpp"

namespace xrm {

double quantile_sorted(std::span<const double> sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

NormDistribution summarize_norms(std::string language, std::vector<double> norms, double lo,
                                 double hi) {
  NormDistribution d;
  d.language = std::move(language);
  d.count = norms.size();
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(kHistogramBins);
  d.histogram.resize(kHistogramBins);
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    d.histogram[b].lower = lo + width * static_cast<double>(b);
    d.histogram[b].upper = b + 1 == kHistogramBins ? hi : lo + width * static_cast<double>(b + 1);
  }
  if (!norms.empty()) {
    std::vector<double> sorted = norms;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    d.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : sorted) ss += (v - d.mean) * (v - d.mean);
    d.std = std::sqrt(ss / n);
    d.min = sorted.front();
    d.max = sorted.back();
    for (std::size_t q = 0; q < kNormQuantileLevels.size(); ++q) {
      d.quantiles[q] = quantile_sorted(sorted, kNormQuantileLevels[q]);
    }
    for (double v : sorted) {
      auto bin = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
      bin = std::clamp<std::ptrdiff_t>(bin, 0, kHistogramBins - 1);
      ++d.histogram[static_cast<std::size_t>(bin)].count;
    }
  }
  d.norms = std::move(norms);
  return d;
}

std::map<std::string, NormDistribution> embedding_norms(const ModelDump& dump,
                                                        const VocabPartition& partition) {
  const auto& e = dump.require_embeddings();
  if (partition.vocab_size != static_cast<std::size_t>(e.rows())) {
    throw ValidationError("partition covers " + std::to_string(partition.vocab_size) +
                          " tokens but the embedding matrix has " + std::to_string(e.rows()) +
                          " rows");
  }

  std::vector<std::string> languages;
  for (const auto& [language, indices] : partition.assignments) languages.push_back(language);

  std::vector<std::vector<double>> norms(languages.size());
  parallel_for(languages.size(), [&](std::size_t i) {
    const auto& indices = partition.assignments.at(languages[i]);
    auto& out = norms[i];
    out.reserve(indices.size());
    for (std::size_t idx : indices) {
      out.push_back(e.row(static_cast<Eigen::Index>(idx)).cast<double>().norm());
    }
  });

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& v : norms) {
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;

  std::map<std::string, NormDistribution> out;
  for (std::size_t i = 0; i < languages.size(); ++i) {
    out.emplace(languages[i], summarize_norms(languages[i], std::move(norms[i]), lo, hi));
  }
  return out;
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("Wasserstein distance of an empty distribution");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const std::size_t n = sa.size();
  const std::size_t m = sb.size();
  if (n == m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::abs(sa[i] - sb[i]);
    return total / static_cast<double>(n);
  }
  // Walk the union of breakpoints i/n and j/m; on each segment both quantile
  // functions are constant. Breakpoints are compared exactly as (i+1)*m vs
  // (j+1)*n.
  double total = 0.0;
  double p = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n && j < m) {
    const std::size_t next_a = (i + 1) * m;
    const std::size_t next_b = (j + 1) * n;
    const std::size_t next = std::min(next_a, next_b);
    const double q = static_cast<double>(next) / static_cast<double>(n * m);
    total += std::abs(sa[i] - sb[j]) * (q - p);
    p = q;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return total;
}

double norm_distance(const NormDistribution& a, const NormDistribution& b) {
  if (a.empty() || b.empty()) {
    throw ValidationError("norm distance needs non-empty distributions ('" + a.language + "' vs '" +
                          b.language + "')");
  }
  return wasserstein1(a.norms, b.norms);
}

std::vector<LogitTriple<double>> decompose_logits(const Eigen::Ref<const Eigen::VectorXd>& h,
                                                  const ModelDump& dump,
                                                  std::span<const std::size_t> token_indices) {
  const auto& e = dump.require_embeddings();
  if (static_cast<std::size_t>(h.size()) != dump.d_model) {
    throw ValidationError("hidden vector has length " + std::to_string(h.size()) +
                          ", expected d_model " + std::to_string(dump.d_model));
  }
  std::vector<LogitTriple<double>> out;
  out.reserve(token_indices.size());
  std::size_t zero_vectors = 0;
  for (std::size_t idx : token_indices) {
    if (idx >= static_cast<std::size_t>(e.rows())) {
      throw ValidationError("token index " + std::to_string(idx) + " outside vocabulary of " +
                            std::to_string(e.rows()));
    }
    out.push_back(logit_triple(h, e.row(static_cast<Eigen::Index>(idx)).transpose(), idx));
    if (out.back().h_norm == 0.0 || out.back().e_norm == 0.0) ++zero_vectors;
  }
  if (zero_vectors > 0) {
    log_warning(std::to_string(zero_vectors) + " logit decomposition(s) involve a zero vector; cosine set to 0");
  }
  return out;
}

}  // namespace xrm
