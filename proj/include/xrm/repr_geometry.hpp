#pragma once

// Cross-lingual homogeneity of last hidden states. For one piece of content
// rendered in |L| languages, stack the states into H (|L| x d_model) and
// score it by the share of the largest singular value, sigma_1 / sum sigma_i.
// A score near 1 means the languages collapsed onto one direction; 1/|L| is
// the most diverse configuration.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xrm/errors.hpp"
#include "xrm/linalg.hpp"
#include "xrm/tensor_io.hpp"

namespace xrm {

template <typename Scalar>
struct HomogeneityResult {
  Scalar score = 0;
  DynVector<Scalar> singular_values;  // non-increasing, length |L|
};

// Singular values come from the |L| x |L| Gram matrix H H^T via Jacobi, with
// round-off negatives clamped to zero. Requires 2 <= |L| <= d_model; throws
// DegenerateInputError for an all-zero H.
template <typename Derived>
HomogeneityResult<typename Derived::Scalar> homogeneity(const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  if (h.rows() < 2) throw ValidationError("homogeneity needs at least two languages");
  if (h.cols() < h.rows()) {
    throw ValidationError("homogeneity needs d_model >= |L| (got " + std::to_string(h.cols()) +
                          " < " + std::to_string(h.rows()) + ")");
  }
  if (h.isZero(Scalar(0))) throw DegenerateInputError("hidden-state matrix is all zero");

  const DynMatrix<Scalar> gram = h * h.transpose();
  DynVector<Scalar> eig = symmetric_eigenvalues_jacobi(gram);
  // Eigenvalues at round-off level of lambda_max carry no signal once square-rooted.
  const Scalar floor = Scalar(gram.rows()) * Eigen::NumTraits<Scalar>::epsilon() * eig.maxCoeff();
  eig = (eig.array() <= floor).select(Scalar(0), eig);
  HomogeneityResult<Scalar> out;
  out.singular_values = eig.cwiseSqrt();
  const Scalar total = out.singular_values.sum();
  if (!(total > Scalar(0))) throw DegenerateInputError("hidden-state matrix has no spectrum");
  out.score = out.singular_values(0) / total;
  return out;
}

// Expected (example_id, language) keys for one example, in row order.
struct ParallelSpec {
  std::string example_id;
  std::vector<std::string> languages;
};

struct ParallelExample {
  std::string example_id;
  std::vector<std::string> languages;
  std::map<std::string, Eigen::VectorXd> per_language_states;

  void validate() const;
};

// Row i is the state of languages[i]. Throws ValidationError naming a
// missing language.
Eigen::MatrixXd build_matrix(const ParallelExample& example);

// JSONL rows {"example_id", "language"}; examples and languages keep the
// order of first appearance.
std::vector<ParallelSpec> read_parallel_manifest(const std::filesystem::path& path);
std::vector<ParallelSpec> parse_parallel_manifest(std::istream& in);

// Throws ValidationError listing every key absent from the dump.
std::vector<ParallelExample> gather_examples(const ModelDump& dump,
                                             const std::vector<ParallelSpec>& specs);

struct ExampleScore {
  std::string example_id;
  double score = 0.0;
  std::vector<double> singular_values;
};

struct HomogeneityProfile {
  std::string model_name;
  std::vector<ExampleScore> examples;  // dataset order
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

HomogeneityProfile profile(const std::string& model_name,
                           const std::vector<ParallelExample>& dataset);
HomogeneityProfile profile(const ModelDump& dump, const std::vector<ParallelSpec>& dataset);

struct ScoreDifference {
  std::string example_id;
  double base = 0.0;
  double tuned = 0.0;
  double difference = 0.0;  // tuned - base
};

struct ProfileComparison {
  std::string base_model;
  std::string tuned_model;
  std::vector<ScoreDifference> differences;  // sorted by example_id
  double mean_shift = 0.0;
  // Share of examples where tuned is strictly more homogeneous than base.
  double fraction_tuned_higher = 0.0;
};

// Throws ValidationError unless both profiles cover the same example ids.
ProfileComparison compare_profiles(const HomogeneityProfile& base,
                                   const HomogeneityProfile& tuned);

}  // namespace xrm
