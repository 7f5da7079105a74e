#pragma once

#include <string>
#include <vector>

#include "anyshot/matrix.hpp"

namespace anyshot {

enum class ClassGroup { kSeen, kFewShot, kUnseen };

const char* to_string(ClassGroup g);
ClassGroup class_group_from_string(const std::string& s);

// Per-class d-dimensional embeddings, columns in class order.
// Columns are L2-normalized at construction.
class SemanticMatrix {
 public:
  SemanticMatrix() = default;
  SemanticMatrix(std::vector<std::string> class_names, Matrix vectors,
                 std::vector<ClassGroup> partition);

  const std::vector<std::string>& class_names() const { return class_names_; }
  const Matrix& vectors() const { return vectors_; }
  const std::vector<ClassGroup>& partition() const { return partition_; }

  std::size_t dim() const { return vectors_.rows(); }
  std::size_t total() const { return vectors_.cols(); }
  std::size_t count(ClassGroup g) const;
  std::size_t seen_count() const { return count(ClassGroup::kSeen); }
  std::size_t few_shot_count() const { return count(ClassGroup::kFewShot); }
  std::size_t unseen_count() const { return count(ClassGroup::kUnseen); }

  ClassGroup group_of(std::size_t class_id) const { return partition_[class_id]; }
  Vector embedding(std::size_t class_id) const { return vectors_.column(class_id); }

  // Class ids belonging to the given group, in class order.
  std::vector<std::size_t> ids_of(ClassGroup g) const;
  std::vector<std::size_t> all_ids() const;
  std::vector<std::size_t> seen_ids() const { return ids_of(ClassGroup::kSeen); }
  std::vector<std::size_t> novel_ids() const;  // few-shot + unseen

 private:
  std::vector<std::string> class_names_;
  Matrix vectors_;  // d x T
  std::vector<ClassGroup> partition_;
};

// Word vocabulary, one L2-normalized row per atom (v x d).
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(Matrix atoms);

  // Rows already unit-norm (e.g. read back from a checkpoint); skips the
  // renormalization pass so round trips are bit-exact.
  static Vocabulary from_normalized(Matrix atoms);

  const Matrix& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.rows(); }
  std::size_t dim() const { return atoms_.cols(); }

 private:
  Matrix atoms_;  // v x d
};

// Trainable vocabulary metric (d x v).
struct MetricParams {
  Matrix metric;
};

struct ClassEntry {
  std::string name;
  ClassGroup group;
};

// In-place L2 normalization helpers.
Vector l2_normalize(const Vector& v);

// Class list file: one "name tag" pair per line, tag in {seen, few, unseen}.
std::vector<ClassEntry> load_class_list(const std::string& path);

// Word-vector text file: token followed by expected_dim decimals per line.
// Multi-word class names use '_' separators; a name without an exact entry is
// resolved by averaging its constituent token vectors.
SemanticMatrix load_word_vectors(const std::string& path,
                                 const std::vector<ClassEntry>& classes,
                                 std::size_t expected_dim);

Vocabulary load_vocabulary(const std::string& path, std::size_t expected_dim);

// g(W) with the trainable transform: column-wise tanh(w^T M D), output d x T.
Matrix transform_semantics(const SemanticMatrix& w, const MetricParams& m,
                           const Vocabulary& d);

// Same but for a subset of class columns (output d x subset.size()).
Matrix transform_semantics(const SemanticMatrix& w, const MetricParams& m,
                           const Vocabulary& d,
                           const std::vector<std::size_t>& class_ids);

// g(W) = W for the fixed-prototype mode.
Matrix fixed_semantics(const SemanticMatrix& w);
Matrix fixed_semantics(const SemanticMatrix& w,
                       const std::vector<std::size_t>& class_ids);

}  // namespace anyshot
