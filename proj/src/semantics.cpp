#include "anyshot/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "anyshot/errors.hpp"

namespace anyshot {

const char* to_string(ClassGroup g) {
  switch (g) {
    case ClassGroup::kSeen: return "seen";
    case ClassGroup::kFewShot: return "few";
    case ClassGroup::kUnseen: return "unseen";
  }
  return "?";
}

ClassGroup class_group_from_string(const std::string& s) {
  if (s == "seen") return ClassGroup::kSeen;
  if (s == "few" || s == "few_shot") return ClassGroup::kFewShot;
  if (s == "unseen") return ClassGroup::kUnseen;
  throw ConfigError("unknown class group tag: " + s);
}

Vector l2_normalize(const Vector& v) {
  const double n = norm2(v);
  if (n <= 0.0 || !std::isfinite(n))
    throw ZeroNormError("cannot normalize a zero-norm vector");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

SemanticMatrix::SemanticMatrix(std::vector<std::string> class_names, Matrix vectors,
                               std::vector<ClassGroup> partition)
    : class_names_(std::move(class_names)),
      vectors_(std::move(vectors)),
      partition_(std::move(partition)) {
  if (class_names_.size() != vectors_.cols() || partition_.size() != vectors_.cols())
    throw DimensionError("semantic matrix: column count mismatch");
  std::unordered_set<std::string> names(class_names_.begin(), class_names_.end());
  if (names.size() != class_names_.size())
    throw ConfigError("semantic matrix: class names must be unique");
  if (count(ClassGroup::kSeen) == 0)
    throw ConfigError("semantic matrix: at least one seen class required");
  for (std::size_t c = 0; c < vectors_.cols(); ++c)
    vectors_.set_column(c, l2_normalize(vectors_.column(c)));
}

std::size_t SemanticMatrix::count(ClassGroup g) const {
  std::size_t n = 0;
  for (ClassGroup p : partition_)
    if (p == g) ++n;
  return n;
}

std::vector<std::size_t> SemanticMatrix::ids_of(ClassGroup g) const {
  std::vector<std::size_t> ids;
  for (std::size_t c = 0; c < partition_.size(); ++c)
    if (partition_[c] == g) ids.push_back(c);
  return ids;
}

std::vector<std::size_t> SemanticMatrix::all_ids() const {
  std::vector<std::size_t> ids(total());
  for (std::size_t c = 0; c < ids.size(); ++c) ids[c] = c;
  return ids;
}

std::vector<std::size_t> SemanticMatrix::novel_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t c = 0; c < partition_.size(); ++c)
    if (partition_[c] != ClassGroup::kSeen) ids.push_back(c);
  return ids;
}

Vocabulary::Vocabulary(Matrix atoms) : atoms_(std::move(atoms)) {
  if (atoms_.rows() < 1) throw ConfigError("vocabulary must have at least one atom");
  for (std::size_t r = 0; r < atoms_.rows(); ++r) {
    Vector row(atoms_.cols());
    for (std::size_t c = 0; c < atoms_.cols(); ++c) row[c] = atoms_.at(r, c);
    row = l2_normalize(row);
    for (std::size_t c = 0; c < atoms_.cols(); ++c) atoms_.at(r, c) = row[c];
  }
}

Vocabulary Vocabulary::from_normalized(Matrix atoms) {
  if (atoms.rows() < 1) throw ConfigError("vocabulary must have at least one atom");
  Vocabulary vocab;
  vocab.atoms_ = std::move(atoms);
  return vocab;
}

std::vector<ClassEntry> load_class_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open class list: " + path);
  std::vector<ClassEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string name, tag;
    if (!(ls >> name)) continue;  // blank line
    if (name[0] == '#') continue;
    if (!(ls >> tag)) throw ConfigError("class list line missing tag: " + line);
    out.push_back({name, class_group_from_string(tag)});
  }
  if (out.empty()) throw ConfigError("class list is empty: " + path);
  return out;
}

namespace {

std::unordered_map<std::string, Vector> read_vector_file(const std::string& path,
                                                         std::size_t expected_dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word vectors: " + path);
  std::unordered_map<std::string, Vector> table;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    Vector vec;
    double x;
    while (ls >> x) vec.push_back(x);
    if (vec.empty()) continue;
    if (vec.size() != expected_dim)
      throw DimensionError("word vector for '" + token + "' has dim " +
                           std::to_string(vec.size()) + ", expected " +
                           std::to_string(expected_dim));
    table[token] = std::move(vec);
  }
  return table;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

}  // namespace

SemanticMatrix load_word_vectors(const std::string& path,
                                 const std::vector<ClassEntry>& classes,
                                 std::size_t expected_dim) {
  const auto table = read_vector_file(path, expected_dim);
  Matrix vectors(expected_dim, classes.size());
  std::vector<std::string> names;
  std::vector<ClassGroup> partition;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const std::string& name = classes[c].name;
    Vector vec;
    auto it = table.find(name);
    if (it != table.end()) {
      vec = it->second;
    } else {
      // Average constituent tokens of a multi-word name.
      const auto parts = split_on(name, '_');
      if (parts.size() < 2)
        throw MissingEmbedding("no word vector for class '" + name + "'");
      vec.assign(expected_dim, 0.0);
      for (const auto& part : parts) {
        auto pit = table.find(part);
        if (pit == table.end())
          throw MissingEmbedding("no word vector for token '" + part +
                                 "' of class '" + name + "'");
        for (std::size_t i = 0; i < expected_dim; ++i) vec[i] += pit->second[i];
      }
      for (double& x : vec) x /= static_cast<double>(parts.size());
    }
    vectors.set_column(c, vec);
    names.push_back(name);
    partition.push_back(classes[c].group);
  }
  return SemanticMatrix(std::move(names), std::move(vectors), std::move(partition));
}

Vocabulary load_vocabulary(const std::string& path, std::size_t expected_dim) {
  const auto table = read_vector_file(path, expected_dim);
  if (table.empty()) throw ConfigError("vocabulary file is empty: " + path);
  // Sort tokens for a stable atom order.
  std::vector<std::string> tokens;
  tokens.reserve(table.size());
  for (const auto& [tok, _] : table) tokens.push_back(tok);
  std::sort(tokens.begin(), tokens.end());
  Matrix atoms(tokens.size(), expected_dim);
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    const Vector& v = table.at(tokens[r]);
    for (std::size_t c = 0; c < expected_dim; ++c) atoms.at(r, c) = v[c];
  }
  return Vocabulary(std::move(atoms));
}

Matrix transform_semantics(const SemanticMatrix& w, const MetricParams& m,
                           const Vocabulary& d,
                           const std::vector<std::size_t>& class_ids) {
  const std::size_t dim = w.dim();
  if (m.metric.rows() != dim || m.metric.cols() != d.size() || d.dim() != dim)
    throw DimensionError("transform_semantics: incompatible shapes");
  if (!m.metric.all_finite())
    throw NumericalError("transform_semantics: non-finite metric");
  Matrix out(dim, class_ids.size());
  for (std::size_t j = 0; j < class_ids.size(); ++j) {
    const Vector w_col = w.embedding(class_ids[j]);
    // attention over vocabulary atoms: a = w^T M, then b = a D, g = tanh(b)
    const Vector a = matvec_transposed(m.metric, w_col);
    const Vector b = matvec_transposed(d.atoms(), a);
    for (std::size_t i = 0; i < dim; ++i) out.at(i, j) = std::tanh(b[i]);
  }
  return out;
}

Matrix transform_semantics(const SemanticMatrix& w, const MetricParams& m,
                           const Vocabulary& d) {
  return transform_semantics(w, m, d, w.all_ids());
}

Matrix fixed_semantics(const SemanticMatrix& w,
                       const std::vector<std::size_t>& class_ids) {
  Matrix out(w.dim(), class_ids.size());
  for (std::size_t j = 0; j < class_ids.size(); ++j)
    out.set_column(j, w.embedding(class_ids[j]));
  return out;
}

Matrix fixed_semantics(const SemanticMatrix& w) {
  return fixed_semantics(w, w.all_ids());
}

}  // namespace anyshot
