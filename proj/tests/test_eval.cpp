#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "anyshot/alignment.hpp"
#include "anyshot/errors.hpp"
#include "anyshot/eval.hpp"
#include "anyshot/rng.hpp"
#include "anyshot/synthdata.hpp"

using namespace anyshot;

namespace {

// Independent AP: recompute the greedy matching from scratch for every
// score-sorted prefix and integrate the precision envelope by direct
// suffix-max scans. O(n^3)-ish, used only on tiny instances.
double naive_ap(std::vector<TaggedDetection> dets, const std::vector<TaggedBox>& gt,
                double iou_thr) {
  if (gt.empty() || dets.empty()) return 0.0;
  std::sort(dets.begin(), dets.end(),
            [](const TaggedDetection& a, const TaggedDetection& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
              if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
              return a.box.y_min < b.box.y_min;
            });
  auto tp_count_of_prefix = [&](std::size_t upto) {
    std::vector<bool> used(gt.size(), false);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < upto; ++i) {
      double best = 0.0;
      int best_g = -1;
      for (std::size_t g = 0; g < gt.size(); ++g) {
        if (used[g] || gt[g].scene_id != dets[i].scene_id) continue;
        const double v = iou(dets[i].box, gt[g].box);
        if (v > best) {
          best = v;
          best_g = static_cast<int>(g);
        }
      }
      if (best_g >= 0 && best >= iou_thr) {
        used[best_g] = true;
        ++tp;
      }
    }
    return tp;
  };
  std::vector<double> precision(dets.size()), recall(dets.size());
  for (std::size_t k = 1; k <= dets.size(); ++k) {
    const double tp = static_cast<double>(tp_count_of_prefix(k));
    precision[k - 1] = tp / static_cast<double>(k);
    recall[k - 1] = tp / static_cast<double>(gt.size());
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < dets.size(); ++k) {
    double envelope = 0.0;
    for (std::size_t j = k; j < dets.size(); ++j)
      envelope = std::max(envelope, precision[j]);
    ap += (recall[k] - prev_recall) * envelope;
    prev_recall = recall[k];
  }
  return ap;
}

}  // namespace

TEST_CASE("harmonic mean") {
  CHECK(harmonic_mean({51.70, 10.75, 11.83}) ==
        doctest::Approx(15.236433695348646).epsilon(1e-12));
  CHECK(std::abs(harmonic_mean({51.70, 10.75, 11.83}) - 15.23) < 0.01);
  CHECK(harmonic_mean({3.7, 3.7, 3.7}) == doctest::Approx(3.7).epsilon(1e-12));
  CHECK(harmonic_mean({5.0, 0.0}) == 0.0);
  CHECK_THROWS_AS(harmonic_mean({}), EmptyInput);
  CHECK_THROWS_AS(harmonic_mean({-1.0}), DomainError);

  Rng rng(40);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> vals;
    for (int j = 0; j < 3; ++j) vals.push_back(rng.uniform(0.01, 100.0));
    const double hm = harmonic_mean(vals);
    const double mn = *std::min_element(vals.begin(), vals.end());
    const double am = (vals[0] + vals[1] + vals[2]) / 3.0;
    CHECK(hm >= mn - 1e-12);
    CHECK(hm <= am + 1e-12);
  }
}

TEST_CASE("average precision basics") {
  const std::vector<TaggedBox> gt = {{0, {0, 0, 1, 1}}, {0, {2, 2, 3, 3}}};
  SUBCASE("perfect detector scores 1") {
    const std::vector<TaggedDetection> dets = {{0, {0, 0, 1, 1}, 0.9},
                                               {0, {2, 2, 3, 3}, 0.8}};
    CHECK(average_precision(dets, gt, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("no detections scores 0") {
    CHECK(average_precision({}, gt, 0.5) == 0.0);
  }
}

TEST_CASE("average precision hand case: 3 gt, 5 detections") {
  const std::vector<TaggedBox> gt = {
      {0, {0, 0, 1, 1}}, {0, {2, 2, 3, 3}}, {1, {0, 0, 1, 1}}};
  const std::vector<TaggedDetection> dets = {
      {0, {0, 0, 1, 1}, 0.9},        // TP (gt 0)
      {0, {5, 5, 6, 6}, 0.8},        // FP
      {1, {0, 0, 1, 1}, 0.7},        // TP (gt 2)
      {0, {0, 0, 1, 1}, 0.6},        // FP, gt 0 already taken
      {0, {2.1, 2, 3, 3}, 0.5},      // TP (gt 1), IoU 0.9
  };
  // precision/recall points: (1, 1/3) (1/2, 1/3) (2/3, 2/3) (1/2, 2/3) (3/5, 1)
  // all-points area: 1/3 * 1 + 1/3 * 2/3 + 1/3 * 3/5 = 34/45
  CHECK(average_precision(dets, gt, 0.5) ==
        doctest::Approx(34.0 / 45.0).epsilon(1e-12));
  CHECK(naive_ap(dets, gt, 0.5) == doctest::Approx(34.0 / 45.0).epsilon(1e-12));
}

TEST_CASE("average precision equals the brute-force oracle on random instances") {
  Rng rng(41);
  for (int round = 0; round < 200; ++round) {
    std::vector<TaggedBox> gt;
    const std::size_t n_gt = 1 + rng.index(9);
    for (std::size_t i = 0; i < n_gt; ++i) {
      const double x = rng.uniform(0.0, 3.0), y = rng.uniform(0.0, 3.0);
      gt.push_back({static_cast<int>(rng.index(3)),
                    {x, y, x + rng.uniform(0.2, 1.0), y + rng.uniform(0.2, 1.0)}});
    }
    std::vector<TaggedDetection> dets;
    const std::size_t n_det = rng.index(10);
    for (std::size_t i = 0; i < n_det; ++i) {
      if (rng.uniform() < 0.6 && !gt.empty()) {
        const auto& g = gt[rng.index(gt.size())];
        dets.push_back({g.scene_id,
                        {g.box.x_min + rng.uniform(-0.1, 0.1),
                         g.box.y_min + rng.uniform(-0.1, 0.1),
                         g.box.x_max + rng.uniform(-0.1, 0.1),
                         g.box.y_max + rng.uniform(-0.1, 0.1)},
                        rng.uniform(0.05, 0.95)});
      } else {
        const double x = rng.uniform(0.0, 3.0), y = rng.uniform(0.0, 3.0);
        dets.push_back({static_cast<int>(rng.index(3)),
                        {x, y, x + rng.uniform(0.2, 1.0), y + rng.uniform(0.2, 1.0)},
                        rng.uniform(0.05, 0.95)});
      }
    }
    const double fast = average_precision(dets, gt, 0.5);
    const double slow = naive_ap(dets, gt, 0.5);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
  }
}

TEST_CASE("average precision is invariant to detection order") {
  Rng rng(42);
  std::vector<TaggedBox> gt;
  std::vector<TaggedDetection> dets;
  for (int i = 0; i < 6; ++i) {
    const double x = rng.uniform(0.0, 3.0), y = rng.uniform(0.0, 3.0);
    gt.push_back({0, {x, y, x + 0.5, y + 0.5}});
    dets.push_back({0,
                    {x + rng.uniform(-0.05, 0.05), y + rng.uniform(-0.05, 0.05),
                     x + 0.5, y + 0.5},
                    rng.uniform(0.1, 0.9)});
  }
  const double base = average_precision(dets, gt, 0.5);
  for (int round = 0; round < 10; ++round) {
    rng.shuffle(dets);
    CHECK(average_precision(dets, gt, 0.5) == base);
  }
}

TEST_CASE("recall at k") {
  const std::vector<std::vector<GroundTruthBox>> gt = {
      {{{0, 0, 1, 1}, 0}, {{2, 2, 3, 3}, 1}}};
  SUBCASE("hand case: one of two matched") {
    const std::vector<std::vector<Detection>> dets = {
        {{{0, 0, 1, 1}, 0, 0.9}, {{5, 5, 6, 6}, 1, 0.8}}};
    CHECK(recall_at_k(dets, gt, 100, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("zero detections") {
    const std::vector<std::vector<Detection>> dets = {{}};
    CHECK(recall_at_k(dets, gt, 100, 0.5) == 0.0);
  }
  SUBCASE("k beyond the detection count equals unlimited recall") {
    const std::vector<std::vector<Detection>> dets = {
        {{{0, 0, 1, 1}, 0, 0.9}, {{2, 2, 3, 3}, 1, 0.2}}};
    CHECK(recall_at_k(dets, gt, 2, 0.5) == recall_at_k(dets, gt, 1000000, 0.5));
  }
  SUBCASE("wrong class does not match") {
    const std::vector<std::vector<Detection>> dets = {{{{0, 0, 1, 1}, 1, 0.9}}};
    CHECK(recall_at_k(dets, gt, 100, 0.5) == 0.0);
  }
  SUBCASE("non-decreasing in k") {
    Rng rng(43);
    std::vector<std::vector<Detection>> dets(1);
    for (int i = 0; i < 30; ++i) {
      const double x = rng.uniform(0.0, 3.0), y = rng.uniform(0.0, 3.0);
      dets[0].push_back({{x, y, x + 1.0, y + 1.0}, static_cast<int>(rng.index(2)),
                         rng.uniform(0.05, 0.95)});
    }
    double prev = 0.0;
    for (std::size_t k = 1; k <= 30; ++k) {
      const double r = recall_at_k(dets, gt, k, 0.3);
      CHECK(r >= prev - 1e-12);
      prev = r;
    }
  }
  CHECK_THROWS_AS(recall_at_k({}, {}, 0, 0.5), DomainError);
}

TEST_CASE("evaluate mode handling") {
  WorldSpec spec;
  spec.seed = 50;
  SplitSizes sizes;
  sizes.test_scenes = 12;
  const SyntheticWorld world = generate_world(spec);
  const DatasetBundle bundle = assemble_bundle(world, sizes, 2);
  const AlignmentModel model =
      init_model(spec.feature_dim, spec.semantic_dim, 16, SemanticsMode::kFixed, 51);
  const EvalThresholds thr;

  SUBCASE("mode mismatch on a split without the needed groups") {
    WorldSpec no_unseen = spec;
    no_unseen.unseen = 0;
    const SyntheticWorld w2 = generate_world(no_unseen);
    const DatasetBundle b2 = assemble_bundle(w2, sizes, 2);
    CHECK_THROWS_AS(evaluate(model, b2.d_ts, w2.semantics, EvalMode::kGasd, thr),
                    ModeMismatch);
    CHECK_THROWS_AS(evaluate(model, b2.d_ts, w2.semantics, EvalMode::kZsd, thr),
                    ModeMismatch);
  }
  SUBCASE("ASD reports novel groups only") {
    const EvalReport r = evaluate(model, bundle.d_ts, world.semantics,
                                  EvalMode::kAsd, thr);
    CHECK(!r.map_seen.has_value());
    CHECK(r.map_few.has_value());
    CHECK(r.map_unseen.has_value());
    const double expect_hm = harmonic_mean({*r.map_few, *r.map_unseen});
    CHECK(r.hm == doctest::Approx(expect_hm).epsilon(1e-12));
  }
  SUBCASE("GASD grouped mAPs equal the per-class AP oracle") {
    const EvalReport r = evaluate(model, bundle.d_ts, world.semantics,
                                  EvalMode::kGasd, thr);
    // Recompute each class AP through the public detector path plus the
    // naive AP oracle.
    const auto all = world.semantics.all_ids();
    std::map<ClassGroup, std::vector<double>> groups;
    for (std::size_t c : all) {
      std::vector<TaggedDetection> dets;
      std::vector<TaggedBox> gt;
      for (std::size_t s = 0; s < bundle.d_ts.size(); ++s) {
        const auto scene_dets =
            nms(predict(bundle.d_ts[s], model, world.semantics, all, thr.score),
                thr.nms_iou);
        for (const auto& d : scene_dets)
          if (d.class_id == static_cast<int>(c))
            dets.push_back({static_cast<int>(s), d.box, d.score});
        for (const auto& b : bundle.d_ts[s].boxes)
          if (b.class_id == static_cast<int>(c))
            gt.push_back({static_cast<int>(s), b.box});
      }
      if (gt.empty()) continue;
      const double ap = naive_ap(dets, gt, thr.iou);
      CHECK(r.per_class_ap.at(world.semantics.class_names()[c]) ==
            doctest::Approx(ap).epsilon(1e-12));
      groups[world.semantics.group_of(c)].push_back(ap);
    }
    for (const auto& [group, aps] : groups) {
      double mean = 0.0;
      for (double ap : aps) mean += ap;
      mean /= static_cast<double>(aps.size());
      if (group == ClassGroup::kSeen)
        CHECK(*r.map_seen == doctest::Approx(mean).epsilon(1e-12));
      if (group == ClassGroup::kFewShot)
        CHECK(*r.map_few == doctest::Approx(mean).epsilon(1e-12));
      if (group == ClassGroup::kUnseen)
        CHECK(*r.map_unseen == doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("generalized equals restricted on single-group scenes") {
    Rng rng(52);
    std::vector<Scene> unseen_only;
    for (int s = 0; s < 6; ++s)
      unseen_only.push_back(generate_scene(
          world, 3, world.semantics.ids_of(ClassGroup::kUnseen), rng));
    const EvalReport gen =
        evaluate(model, unseen_only, world.semantics, EvalMode::kGzsd, thr);
    const EvalReport res =
        evaluate(model, unseen_only, world.semantics, EvalMode::kZsd, thr);
    REQUIRE(gen.map_unseen.has_value());
    REQUIRE(res.map_unseen.has_value());
    CHECK(*gen.map_unseen == doctest::Approx(*res.map_unseen).epsilon(1e-12));
  }
}

TEST_CASE("report exports") {
  EvalReport r;
  r.mode = EvalMode::kGasd;
  r.map_seen = 0.517;
  r.map_few = 0.1183;
  r.map_unseen = 0.1075;
  r.hm = 0.1523;
  r.recall_at_100 = 0.5;
  r.per_class_ap["cat"] = 0.25;
  const std::string json = r.to_json();
  CHECK(json.find("\"mode\": \"GASD\"") != std::string::npos);
  CHECK(json.find("51.7") != std::string::npos);  // percentages
  const std::string row = r.to_csv_row();
  CHECK(row == "GASD,51.70,11.83,10.75,15.23,50.00\n");
  EvalReport asd;
  asd.mode = EvalMode::kAsd;
  asd.map_few = 0.2;
  asd.map_unseen = 0.1;
  asd.hm = 0.15;
  asd.recall_at_100 = 0.3;
  CHECK(asd.to_csv_row() == "ASD,,20.00,10.00,15.00,30.00\n");
}
