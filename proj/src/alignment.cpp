#include "anyshot/alignment.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "anyshot/errors.hpp"
#include "anyshot/rng.hpp"

namespace anyshot {

const char* to_string(SemanticsMode m) {
  return m == SemanticsMode::kFixed ? "fixed" : "trainable";
}

SemanticsMode semantics_mode_from_string(const std::string& s) {
  if (s == "fixed") return SemanticsMode::kFixed;
  if (s == "trainable") return SemanticsMode::kTrainable;
  throw ConfigError("semantics mode must be 'fixed' or 'trainable'");
}

void AlignmentModel::check_finite() const {
  if (!u.all_finite() || !metric.metric.all_finite())
    throw NumericalError("alignment model has non-finite parameters");
}

AlignmentModel init_model(std::size_t feature_dim, std::size_t semantic_dim,
                          std::size_t vocab_size, SemanticsMode mode,
                          std::uint64_t seed) {
  if (feature_dim < 1 || semantic_dim < 1 || vocab_size < 1)
    throw ConfigError("model dimensions must be positive");
  Rng rng(seed);
  AlignmentModel model;
  model.semantics_mode = mode;
  const double u_scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  model.u = Matrix(feature_dim, semantic_dim);
  for (double& x : model.u.storage()) x = rng.uniform(-u_scale, u_scale);
  const double m_scale = 1.0 / std::sqrt(static_cast<double>(semantic_dim));
  model.metric.metric = Matrix(semantic_dim, vocab_size);
  for (double& x : model.metric.metric.storage()) x = rng.uniform(-m_scale, m_scale);
  Matrix atoms(vocab_size, semantic_dim);
  for (std::size_t r = 0; r < vocab_size; ++r) {
    Vector row(semantic_dim);
    for (double& x : row) x = rng.normal();
    row = l2_normalize(row);
    for (std::size_t c = 0; c < semantic_dim; ++c) atoms.at(r, c) = row[c];
  }
  model.vocab = Vocabulary(std::move(atoms));
  return model;
}

Matrix class_prototypes(const AlignmentModel& model, const SemanticMatrix& semantics,
                        const std::vector<std::size_t>& class_ids) {
  if (model.semantics_mode == SemanticsMode::kFixed)
    return fixed_semantics(semantics, class_ids);
  return transform_semantics(semantics, model.metric, model.vocab, class_ids);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vector score_with_prototypes(const Vector& feature, const AlignmentModel& model,
                             const Matrix& prototypes) {
  if (feature.size() != model.u.rows())
    throw DimensionError("feature length does not match model");
  if (prototypes.rows() != model.u.cols())
    throw DimensionError("prototype dim does not match model");
  const Vector q = matvec_transposed(model.u, feature);  // d
  Vector out(prototypes.cols());
  for (std::size_t c = 0; c < prototypes.cols(); ++c) {
    double z = 0.0;
    for (std::size_t i = 0; i < prototypes.rows(); ++i) z += q[i] * prototypes.at(i, c);
    out[c] = sigmoid(z);
  }
  return out;
}

Vector score(const Vector& feature, const AlignmentModel& model,
             const SemanticMatrix& semantics,
             const std::vector<std::size_t>& class_ids) {
  if (class_ids.empty()) throw EmptyInput("score: class subset is empty");
  return score_with_prototypes(feature, model,
                               class_prototypes(model, semantics, class_ids));
}

void accumulate_score_gradients(const Vector& feature, const AlignmentModel& model,
                                const SemanticMatrix& semantics,
                                const std::vector<std::size_t>& class_ids,
                                const Matrix& prototypes, const Vector& upstream,
                                Matrix& grad_u, Matrix& grad_metric) {
  if (upstream.size() != class_ids.size())
    throw DimensionError("upstream length must match class subset size");
  const std::size_t d = model.u.cols();
  const Vector q = matvec_transposed(model.u, feature);  // d
  const bool trainable = model.semantics_mode == SemanticsMode::kTrainable;
  for (std::size_t c = 0; c < class_ids.size(); ++c) {
    if (upstream[c] == 0.0) continue;
    double z = 0.0;
    for (std::size_t i = 0; i < d; ++i) z += q[i] * prototypes.at(i, c);
    const double p = sigmoid(z);
    const double dz = upstream[c] * p * (1.0 - p);
    if (!std::isfinite(dz)) throw NumericalError("score gradient is non-finite");
    Vector g_col(d);
    for (std::size_t i = 0; i < d; ++i) g_col[i] = prototypes.at(i, c);
    add_outer(grad_u, feature, g_col, dz);
    if (trainable) {
      // back through tanh: grad_b = dz * q ⊙ (1 - g^2), grad_a = grad_b D^T,
      // grad_M += w ⊗ grad_a
      Vector grad_b(d);
      for (std::size_t i = 0; i < d; ++i)
        grad_b[i] = dz * q[i] * (1.0 - g_col[i] * g_col[i]);
      const Vector grad_a = matvec(model.vocab.atoms(), grad_b);  // v
      const Vector w_col = semantics.embedding(class_ids[c]);
      add_outer(grad_metric, w_col, grad_a, 1.0);
    }
  }
}

ScoreGradients score_gradients(const Vector& feature, const AlignmentModel& model,
                               const SemanticMatrix& semantics,
                               const std::vector<std::size_t>& class_ids,
                               const Vector& upstream) {
  const Matrix prototypes = class_prototypes(model, semantics, class_ids);
  ScoreGradients grads;
  grads.u = Matrix(model.u.rows(), model.u.cols());
  grads.metric = Matrix(model.metric.metric.rows(), model.metric.metric.cols());
  grads.feature = Vector(feature.size(), 0.0);
  accumulate_score_gradients(feature, model, semantics, class_ids, prototypes,
                             upstream, grads.u, grads.metric);
  // feature gradient: sum_c dz_c * U g_c
  const Vector q = matvec_transposed(model.u, feature);
  for (std::size_t c = 0; c < class_ids.size(); ++c) {
    if (upstream[c] == 0.0) continue;
    double z = 0.0;
    for (std::size_t i = 0; i < prototypes.rows(); ++i)
      z += q[i] * prototypes.at(i, c);
    const double p = sigmoid(z);
    const double dz = upstream[c] * p * (1.0 - p);
    Vector g_col(prototypes.rows());
    for (std::size_t i = 0; i < prototypes.rows(); ++i) g_col[i] = prototypes.at(i, c);
    const Vector ug = matvec(model.u, g_col);  // n
    for (std::size_t i = 0; i < feature.size(); ++i) grads.feature[i] += dz * ug[i];
  }
  return grads;
}

namespace {

nlohmann::ordered_json matrix_to_json(const Matrix& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.storage();
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.size()) throw IoError("checkpoint matrix size mismatch");
  m.storage() = data;
  return m;
}

}  // namespace

void save_checkpoint(const AlignmentModel& model, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = "anyshot-checkpoint-v1";
  j["feature_dim"] = model.feature_dim();
  j["semantic_dim"] = model.semantic_dim();
  j["vocab_size"] = model.vocab.size();
  j["semantics_mode"] = to_string(model.semantics_mode);
  j["u"] = matrix_to_json(model.u);
  j["metric"] = matrix_to_json(model.metric.metric);
  j["vocab"] = matrix_to_json(model.vocab.atoms());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

AlignmentModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "anyshot-checkpoint-v1")
    throw IoError("unrecognized checkpoint format in " + path);
  AlignmentModel model;
  model.semantics_mode = semantics_mode_from_string(j.at("semantics_mode"));
  model.u = matrix_from_json(j.at("u"));
  model.metric.metric = matrix_from_json(j.at("metric"));
  model.vocab = Vocabulary::from_normalized(matrix_from_json(j.at("vocab")));
  model.check_finite();
  return model;
}

}  // namespace anyshot
