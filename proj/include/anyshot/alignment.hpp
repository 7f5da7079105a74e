#pragma once

#include <string>
#include <vector>

#include "anyshot/matrix.hpp"
#include "anyshot/semantics.hpp"

namespace anyshot {

enum class SemanticsMode { kFixed, kTrainable };

const char* to_string(SemanticsMode m);
SemanticsMode semantics_mode_from_string(const std::string& s);

// The visual-semantic compatibility scorer p = sigmoid(f^T U g(W)).
// U bridges visual features (n) to the semantic space (d); in trainable mode
// g applies the vocabulary transform tanh(w^T M D). U and M are the only
// parameters updated by training.
struct AlignmentModel {
  Matrix u;             // n x d
  MetricParams metric;  // d x v
  Vocabulary vocab;     // v x d
  SemanticsMode semantics_mode = SemanticsMode::kTrainable;

  std::size_t feature_dim() const { return u.rows(); }
  std::size_t semantic_dim() const { return u.cols(); }

  void check_finite() const;
};

// Seeded initialization: U entries uniform in [-1/sqrt(n), 1/sqrt(n)],
// M entries uniform in [-1/sqrt(d), 1/sqrt(d)], vocabulary atoms sampled on
// the unit sphere.
AlignmentModel init_model(std::size_t feature_dim, std::size_t semantic_dim,
                          std::size_t vocab_size, SemanticsMode mode,
                          std::uint64_t seed);

// g(W) columns for the given classes under the model's semantics mode.
Matrix class_prototypes(const AlignmentModel& model, const SemanticMatrix& semantics,
                        const std::vector<std::size_t>& class_ids);

double sigmoid(double x);

// One score per selected class, each in (0,1).
Vector score(const Vector& feature, const AlignmentModel& model,
             const SemanticMatrix& semantics,
             const std::vector<std::size_t>& class_ids);

// Hot path: prototypes precomputed once per parameter update.
Vector score_with_prototypes(const Vector& feature, const AlignmentModel& model,
                             const Matrix& prototypes);

struct ScoreGradients {
  Matrix u;       // n x d
  Matrix metric;  // d x v; zero in fixed mode
  Vector feature; // n
};

// Chain rule through sigmoid, the bilinear form, and (in trainable mode)
// tanh(w M D). upstream holds dL/dp per selected class.
ScoreGradients score_gradients(const Vector& feature, const AlignmentModel& model,
                               const SemanticMatrix& semantics,
                               const std::vector<std::size_t>& class_ids,
                               const Vector& upstream);

// Accumulating variant used by the trainer; prototypes must match class_ids.
void accumulate_score_gradients(const Vector& feature, const AlignmentModel& model,
                                const SemanticMatrix& semantics,
                                const std::vector<std::size_t>& class_ids,
                                const Matrix& prototypes, const Vector& upstream,
                                Matrix& grad_u, Matrix& grad_metric);

// Checkpoint: a single JSON file with dims, mode, and row-major matrices.
void save_checkpoint(const AlignmentModel& model, const std::string& path);
AlignmentModel load_checkpoint(const std::string& path);

}  // namespace anyshot
