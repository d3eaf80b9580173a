#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "stageverify/gesture.hpp"

using namespace sv;

namespace {

std::vector<Vec3> random_points(std::mt19937_64& rng, int n = 21) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts(static_cast<std::size_t>(n));
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

Action argmax(const ActionConfidence& a) {
  Action best = Action::CatchBig;
  for (auto x : kAllActions)
    if (a.get(x) > a.get(best)) best = x;
  return best;
}

// Pose with every fingertip placed explicitly, all other points on the wrist
// side of the palm.
HandFrame pose(Vec3 thumb, Vec3 index, Vec3 middle, Vec3 ring, Vec3 pinky) {
  HandFrame f;
  f.points.assign(21, Vec3{0.1, 0.1, 0});
  f.points[0] = {0, 0, 0};
  f.points[4] = thumb;
  f.points[8] = index;
  f.points[12] = middle;
  f.points[16] = ring;
  f.points[20] = pinky;
  return f;
}

}  // namespace

TEST_CASE("normalize_hand: wrist at origin, farthest point at 1") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    HandFrame f{10, random_points(rng)};
    const auto n = normalize_hand(f);
    CHECK(n.points[0] == Vec3{0, 0, 0});
    double span = 0;
    for (const auto& p : n.points) span = std::max(span, norm(p));
    CHECK(span == doctest::Approx(1.0));
    CHECK(n.t_ms == 10);

    HandFrame moved = f;
    for (auto& p : moved.points) p = {p.x + 0.3, p.y - 0.2, p.z + 0.1};
    const auto nm = normalize_hand(moved);
    for (std::size_t k = 0; k < n.points.size(); ++k) {
      CHECK(nm.points[k].x == doctest::Approx(n.points[k].x));
      CHECK(nm.points[k].y == doctest::Approx(n.points[k].y));
      CHECK(nm.points[k].z == doctest::Approx(n.points[k].z));
    }
    const auto again = normalize_hand(n);
    for (std::size_t k = 0; k < n.points.size(); ++k)
      CHECK(distance(again.points[k], n.points[k]) < 1e-12);
  }
  HandFrame flat{0, std::vector<Vec3>(21, Vec3{0.4, 0.4, 0.4})};
  CHECK_THROWS_AS(normalize_hand(flat), DegenerateHand);
}

TEST_CASE("window capacity and feature length") {
  GestureWindow w;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 29; ++i) CHECK_FALSE(w.push(HandFrame{i * 33, random_points(rng)}));
  CHECK_FALSE(w.ready());
  CHECK(w.push(HandFrame{29 * 33, random_points(rng)}));
  CHECK(w.push(HandFrame{30 * 33, random_points(rng)}));
  CHECK(w.size() == 30);
  const auto f = w.features();
  CHECK(f.size() == 1200);
  CHECK(f[3] == 0.0);
  CHECK(f.back() == 1.0);
  CHECK_THROWS_AS(w.push(HandFrame{0, random_points(rng, 20)}), FeatureLengthMismatch);
  GestureWindow partial;
  partial.push(HandFrame{0, random_points(rng)});
  TemplateClassifier clf(synthetic::reference_templates());
  CHECK_THROWS_AS(classify_window(partial, clf), WindowNotReady);
}

TEST_CASE("done heuristic poses") {
  SUBCASE("pinch with three fingers extended") {
    const auto f = pose({0.3, 0.5, 0}, {0.3, 0.5, 0}, {0, 0.9, 0}, {-0.2, 0.88, 0}, {-0.4, 0.8, 0});
    const auto r = done_heuristic(f);
    CHECK(r.is_done);
    CHECK(r.conf == 1.0);
  }
  SUBCASE("open flat hand") {
    const auto f = pose({0.8, 0.3, 0}, {0.3, 0.9, 0}, {0, 1, 0}, {-0.3, 0.95, 0}, {-0.6, 0.8, 0});
    CHECK_FALSE(done_heuristic(f).is_done);
  }
  SUBCASE("closed fist with thumb touching index") {
    const auto f = pose({0.2, 0.2, 0}, {0.2, 0.2, 0}, {0.05, 0.25, 0}, {-0.05, 0.25, 0}, {-0.1, 0.2, 0});
    // oracle: the extension condition fails for every non-pinch finger
    for (int tip : {12, 16, 20}) CHECK(norm(f.points[static_cast<std::size_t>(tip)]) < 0.6);
    CHECK_FALSE(done_heuristic(f).is_done);
  }
}

TEST_CASE("template classifier") {
  const auto templates = synthetic::reference_templates();
  REQUIRE_FALSE(templates.empty());
  for (const auto& t : templates) CHECK(t.features.size() == 1200);
  TemplateClassifier clf(templates);

  for (const auto& t : templates) {
    const auto a = clf.classify(t.features);
    CHECK(a.get(t.label) == doctest::Approx(1.0));
    for (auto other : kAllActions)
      if (other != t.label) CHECK(a.get(other) < a.get(t.label));
  }
  CHECK_THROWS_AS(TemplateClassifier({}).classify(templates[0].features), NoTemplates);
  CHECK_THROWS_AS(clf.classify(std::vector<double>(10, 1.0)), FeatureLengthMismatch);

  // template order does not change the result
  auto shuffled = templates;
  std::mt19937_64 rng(4);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  TemplateClassifier clf2(shuffled);
  for (const auto& t : templates) CHECK(clf2.classify(t.features) == clf.classify(t.features));
}

TEST_CASE("noisy variants of the four gestures are recognised") {
  const auto templates = synthetic::reference_templates();
  TemplateClassifier clf(templates);
  std::vector<GestureTemplate> base;
  for (auto a : kAllActions)
    for (const auto& t : templates)
      if (t.label == a) {
        base.push_back(t);
        break;
      }
  REQUIRE(base.size() == 4);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0, 0.05);
  int correct = 0;
  for (int i = 0; i < 200; ++i) {
    auto f = base[static_cast<std::size_t>(i % 4)].features;
    for (auto& v : f) v += noise(rng);
    if (argmax(clf.classify(f)) == base[static_cast<std::size_t>(i % 4)].label) ++correct;
  }
  CHECK(correct >= 180);
}

TEST_CASE("classify_window applies the done hint") {
  TemplateClassifier clf(synthetic::reference_templates());
  GestureWindow w;
  const auto pose_big = synthetic::hand_pose(Action::CatchBig, 0.0);
  for (int i = 0; i < 30; ++i)
    w.push(normalize_hand(synthetic::render(pose_big, 0.5, 0.5, 0.2, i * 33)));
  const auto plain = classify_window(w, clf);
  const auto hinted = classify_window(w, clf, 1.0);
  CHECK(hinted.done == 1.0);
  CHECK(hinted.catch_big == plain.catch_big);
  CHECK(classify_window(w, clf) == plain);
}

TEST_CASE("template JSON round trip") {
  const auto templates = synthetic::reference_templates();
  const auto back = parse_templates(to_json(templates));
  REQUIRE(back.size() == templates.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].label == templates[i].label);
    CHECK(back[i].features == templates[i].features);
  }
  CHECK_THROWS_AS(parse_templates(nlohmann::json::array({{{"label", "CatchBig"}, {"features", {1, 2}}}})),
                  ValidationError);
}
