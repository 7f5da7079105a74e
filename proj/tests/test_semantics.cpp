#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "anyshot/errors.hpp"
#include "anyshot/rng.hpp"
#include "anyshot/semantics.hpp"

using namespace anyshot;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

const char* kPascalNames[20] = {
    "aeroplane", "bicycle", "bird",  "boat",   "bottle", "bus",   "car",
    "cat",       "chair",   "cow",   "table",  "dog",    "horse", "motorbike",
    "person",    "plant",   "sheep", "sofa",   "train",  "tv"};

}  // namespace

TEST_CASE("l2_normalize") {
  const Vector unit = l2_normalize({1.0, 0.0, 0.0});
  CHECK(unit == Vector{1.0, 0.0, 0.0});
  const Vector v = l2_normalize({3.0, 4.0});
  CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(l2_normalize({0.0, 0.0}), ZeroNormError);
}

TEST_CASE("load_word_vectors") {
  SUBCASE("pascal-sized file") {
    Rng rng(42);
    std::string content;
    for (const char* name : kPascalNames) {
      content += name;
      for (int i = 0; i < 300; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " %.6f", rng.normal());
        content += buf;
      }
      content += "\n";
    }
    const auto path = write_temp("anyshot_wv_pascal.txt", content);
    std::vector<ClassEntry> classes;
    for (const char* name : kPascalNames) classes.push_back({name, ClassGroup::kSeen});
    const SemanticMatrix sem = load_word_vectors(path, classes, 300);
    CHECK(sem.dim() == 300);
    CHECK(sem.total() == 20);
    for (std::size_t c = 0; c < 20; ++c)
      CHECK(std::abs(norm2(sem.embedding(c)) - 1.0) < 1e-9);
  }
  SUBCASE("already normalized column passes through") {
    const auto path = write_temp("anyshot_wv_norm.txt", "cat 0.6 0.8 0\n");
    const SemanticMatrix sem =
        load_word_vectors(path, {{"cat", ClassGroup::kSeen}}, 3);
    CHECK(sem.embedding(0)[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(sem.embedding(0)[1] == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("unnormalized vector gets normalized") {
    const auto path = write_temp("anyshot_wv_raw.txt", "cat 3 4 0\n");
    const SemanticMatrix sem =
        load_word_vectors(path, {{"cat", ClassGroup::kSeen}}, 3);
    CHECK(sem.embedding(0)[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(sem.embedding(0)[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(sem.embedding(0)[2] == 0.0);
  }
  SUBCASE("multi-word names average constituents") {
    const auto path =
        write_temp("anyshot_wv_multi.txt", "traffic 1 0\nlight 0 1\n");
    const SemanticMatrix sem =
        load_word_vectors(path, {{"traffic_light", ClassGroup::kSeen}}, 2);
    CHECK(sem.embedding(0)[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  }
  SUBCASE("missing class") {
    const auto path = write_temp("anyshot_wv_missing.txt", "cat 1 0 0\n");
    CHECK_THROWS_AS(load_word_vectors(path, {{"dog", ClassGroup::kSeen}}, 3),
                    MissingEmbedding);
  }
  SUBCASE("dimension mismatch") {
    const auto path = write_temp("anyshot_wv_dim.txt", "cat 1 0\n");
    CHECK_THROWS_AS(load_word_vectors(path, {{"cat", ClassGroup::kSeen}}, 3),
                    DimensionError);
  }
}

TEST_CASE("load_vocabulary") {
  const auto path =
      write_temp("anyshot_vocab.txt", "zebra 0 2 0\napple 1 1 0\nmango 3 0 4\n");
  const Vocabulary vocab = load_vocabulary(path, 3);
  CHECK(vocab.size() == 3);
  CHECK(vocab.dim() == 3);
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    double norm_sq = 0.0;
    for (std::size_t c = 0; c < vocab.dim(); ++c)
      norm_sq += vocab.atoms().at(r, c) * vocab.atoms().at(r, c);
    CHECK(std::abs(std::sqrt(norm_sq) - 1.0) < 1e-9);
  }
  // atoms are ordered by token, so row 0 is "apple"
  CHECK(vocab.atoms().at(0, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(load_vocabulary(path, 4), DimensionError);
  CHECK_THROWS_AS(load_vocabulary("/nonexistent/vocab.txt", 3), IoError);
}

TEST_CASE("class list parsing") {
  const auto path = write_temp("anyshot_classes.txt",
                               "# comment\ncat seen\ndog few\nzebra unseen\n");
  const auto classes = load_class_list(path);
  REQUIRE(classes.size() == 3);
  CHECK(classes[0].group == ClassGroup::kSeen);
  CHECK(classes[1].group == ClassGroup::kFewShot);
  CHECK(classes[2].group == ClassGroup::kUnseen);
  CHECK_THROWS_AS(load_class_list(write_temp("anyshot_bad.txt", "cat\n")),
                  ConfigError);
}

TEST_CASE("semantic matrix invariants") {
  Matrix m(2, 2);
  m.at(0, 0) = 3.0;
  m.at(1, 0) = 4.0;
  m.at(0, 1) = 1.0;
  const SemanticMatrix sem({"a", "b"}, m, {ClassGroup::kSeen, ClassGroup::kUnseen});
  CHECK(std::abs(norm2(sem.embedding(0)) - 1.0) < 1e-9);
  CHECK(sem.seen_count() == 1);
  CHECK(sem.unseen_count() == 1);
  CHECK(sem.total() == sem.seen_count() + sem.few_shot_count() + sem.unseen_count());

  Matrix dup(2, 2, 1.0);
  CHECK_THROWS_AS(SemanticMatrix({"a", "a"}, dup, {ClassGroup::kSeen, ClassGroup::kSeen}),
                  ConfigError);
  Matrix no_seen(2, 1, 1.0);
  CHECK_THROWS_AS(SemanticMatrix({"a"}, no_seen, {ClassGroup::kUnseen}), ConfigError);
}

TEST_CASE("partition sub-selection preserves counts") {
  Rng rng(7);
  Matrix m(4, 9);
  for (double& x : m.storage()) x = rng.normal();
  std::vector<std::string> names;
  std::vector<ClassGroup> part;
  for (int i = 0; i < 9; ++i) {
    names.push_back("c" + std::to_string(i));
    part.push_back(i < 5 ? ClassGroup::kSeen
                         : (i < 7 ? ClassGroup::kFewShot : ClassGroup::kUnseen));
  }
  const SemanticMatrix sem(names, m, part);
  CHECK(sem.seen_ids().size() == 5);
  CHECK(sem.ids_of(ClassGroup::kFewShot).size() == 2);
  CHECK(sem.novel_ids().size() == 4);
  const Matrix seen_only = fixed_semantics(sem, sem.seen_ids());
  CHECK(seen_only.cols() == 5);
  CHECK(seen_only.rows() == 4);
}

TEST_CASE("transform_semantics") {
  SUBCASE("zero metric maps everything to zero") {
    Matrix m(3, 2);
    m.at(0, 0) = 1.0;
    m.at(1, 1) = 1.0;
    const SemanticMatrix sem({"a", "b"}, m, {ClassGroup::kSeen, ClassGroup::kSeen});
    MetricParams metric{Matrix(3, 4, 0.0)};
    Rng rng(5);
    Matrix atoms(4, 3);
    for (double& x : atoms.storage()) x = rng.normal();
    const Matrix g = transform_semantics(sem, metric, Vocabulary(atoms));
    for (double x : g.storage()) CHECK(x == 0.0);
  }
  SUBCASE("scalar case: tanh(1)") {
    Matrix m(1, 1, 1.0);
    // A 1-d semantic matrix is not allowed seen-count-wise? It is: one seen class.
    const SemanticMatrix sem({"a"}, m, {ClassGroup::kSeen});
    MetricParams metric{Matrix(1, 1, 1.0)};
    const Matrix g = transform_semantics(sem, metric, Vocabulary(Matrix(1, 1, 1.0)));
    CHECK(g.at(0, 0) == doctest::Approx(0.7615941559557649).epsilon(1e-12));
  }
  SUBCASE("outputs stay strictly inside (-1, 1)") {
    Rng rng(6);
    Matrix m(4, 6);
    for (double& x : m.storage()) x = rng.normal();
    std::vector<std::string> names;
    std::vector<ClassGroup> part(6, ClassGroup::kSeen);
    for (int i = 0; i < 6; ++i) names.push_back("c" + std::to_string(i));
    const SemanticMatrix sem(names, m, part);
    MetricParams metric{Matrix(4, 8)};
    for (double& x : metric.metric.storage()) x = rng.normal(0.0, 2.0);
    Matrix atoms(8, 4);
    for (double& x : atoms.storage()) x = rng.normal();
    const Matrix g = transform_semantics(sem, metric, Vocabulary(atoms));
    for (double x : g.storage()) {
      CHECK(x > -1.0);
      CHECK(x < 1.0);
    }
  }
  SUBCASE("shape mismatch") {
    Matrix m(3, 1, 1.0);
    const SemanticMatrix sem({"a"}, m, {ClassGroup::kSeen});
    MetricParams metric{Matrix(2, 4, 0.1)};  // wrong d
    Matrix atoms(4, 3, 0.5);
    CHECK_THROWS_AS(transform_semantics(sem, metric, Vocabulary(atoms)),
                    DimensionError);
  }
}

TEST_CASE("fixed_semantics is the identity") {
  Rng rng(8);
  Matrix m(5, 3);
  for (double& x : m.storage()) x = rng.normal();
  const SemanticMatrix sem({"a", "b", "c"}, m,
                           {ClassGroup::kSeen, ClassGroup::kSeen, ClassGroup::kUnseen});
  CHECK(fixed_semantics(sem) == sem.vectors());
  // mode switch never changes shapes
  MetricParams metric{Matrix(5, 4, 0.1)};
  Matrix atoms(4, 5, 0.3);
  const Matrix g = transform_semantics(sem, metric, Vocabulary(atoms));
  CHECK(g.rows() == sem.vectors().rows());
  CHECK(g.cols() == sem.vectors().cols());
}
