#include <deque>

#include "checks.hpp"
#include "doctest.h"
#include "fcnt/refinement.hpp"

using namespace fcnt;

namespace {

Tensor one_hot(const LabelMap& m, std::size_t classes) {
  Tensor s({1, classes, m.height(), m.width()});
  for (std::size_t p = 0; p < m.size(); ++p) s[static_cast<std::size_t>(m[p]) * m.size() + p] = 1.0;
  return s;
}

// Enclosure rule computed independently: flood each region of non-selected
// pixels, note which selected patches its outer boundary touches and whether
// it reaches the image border.
LabelMap enclosure_oracle(const LabelMap& labels, const std::vector<Label>& classes) {
  const std::size_t h = labels.height(), w = labels.width();
  const oracle::Components c = oracle::components(labels);
  std::map<Label, int> chosen;
  for (Label l : classes) {
    int best = -1;
    for (std::size_t i = 0; i < c.size.size(); ++i)
      if (c.label[i] == l && (best < 0 || c.size[i] > c.size[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
    if (best >= 0) chosen[l] = best;
  }
  std::vector<bool> selected(labels.size(), false);
  for (std::size_t p = 0; p < labels.size(); ++p)
    for (const auto& [l, id] : chosen) selected[p] = selected[p] || c.id[p] == id;
  LabelMap out = labels;
  std::vector<bool> seen(labels.size(), false);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (selected[s] || seen[s]) continue;
    std::vector<std::size_t> region;
    std::set<int> touching;
    bool border = false;
    std::deque<std::size_t> q{s};
    seen[s] = true;
    while (!q.empty()) {
      const std::size_t p = q.front();
      q.pop_front();
      region.push_back(p);
      const long y = static_cast<long>(p / w), x = static_cast<long>(p % w);
      const long dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const long ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) || nx >= static_cast<long>(w)) {
          border = true;
          continue;
        }
        const std::size_t n = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
        if (selected[n]) {
          touching.insert(c.id[n]);
        } else if (!seen[n]) {
          seen[n] = true;
          q.push_back(n);
        }
      }
    }
    if (!border && touching.size() == 1) {
      const Label l = c.label[static_cast<std::size_t>(*touching.begin())];
      for (std::size_t p : region) out[p] = l;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("connected components match a flood-fill oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = checks::pick(rng, 1, 20), w = checks::pick(rng, 1, 20);
    LabelMap m = trial % 2 ? oracle::random_labels(h, w, checks::pick(rng, 1, 4), rng)
                           : oracle::blocky_labels(h, w, checks::pick(rng, 1, 4), checks::pick(rng, 1, 5), rng);
    if (trial % 5 == 0) m[0] = kIgnoreLabel;
    const PatchDecomposition d = connected_components(m);
    const oracle::Components o = oracle::components(m);
    REQUIRE(d.patch_count() == o.size.size());
    CHECK(d.class_count == m.classes().size());
    for (std::size_t i = 1; i < d.patches.size(); ++i) {
      const Patch &a = d.patches[i - 1], &b = d.patches[i];
      CHECK((a.size > b.size || (a.size == b.size && a.first < b.first)));
    }
    // Same partition: pixels share a patch exactly when they share an oracle component.
    std::map<std::size_t, int> link;
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m[p] == kIgnoreLabel) {
        CHECK(d.patch_of[p] == PatchDecomposition::npos);
        continue;
      }
      const Patch& patch = d.patches[d.patch_of[p]];
      CHECK(patch.label == m[p]);
      CHECK(patch.size == o.size[static_cast<std::size_t>(o.id[p])]);
      auto [it, fresh] = link.emplace(d.patch_of[p], o.id[p]);
      CHECK(it->second == o.id[p]);
    }
    CHECK(d.patch_count() >= d.class_count);
  }
}

TEST_CASE("uniform maps and checkerboards") {
  CHECK(connected_components(LabelMap(5, 7, 2)).patch_count() == 1);
  LabelMap board(6, 5);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 5; ++x) board.at(y, x) = static_cast<Label>((x + y) % 2);
  CHECK(connected_components(board).patch_count() == 30);
}

TEST_CASE("a ring fills the disk it encloses") {
  LabelMap m(12, 12, 1);
  for (std::size_t y = 1; y < 8; ++y)
    for (std::size_t x = 1; x < 8; ++x) m.at(y, x) = 0;
  for (std::size_t y = 3; y < 6; ++y)
    for (std::size_t x = 3; x < 6; ++x) m.at(y, x) = 1;
  // Class 1 has its largest patch outside the ring, so the disk is enclosed.
  const FillResult r = largest_patches_fill(m, std::vector<Label>{0, 1});
  for (std::size_t y = 3; y < 6; ++y)
    for (std::size_t x = 3; x < 6; ++x) CHECK(r.labels.at(y, x) == 0);
  CHECK(r.missing.empty());
  CHECK(std::count(r.selected.begin(), r.selected.end(), true) == 144);

  const FillResult same = largest_patches_fill(LabelMap(4, 4, 0), std::size_t{1});
  CHECK(same.labels == LabelMap(4, 4, 0));
  const FillResult missing = largest_patches_fill(LabelMap(4, 4, 0), std::vector<Label>{0, 3});
  REQUIRE(missing.missing.size() == 1);
  CHECK(missing.missing[0] == 3);
}

TEST_CASE("largest-patch fill matches the enclosure oracle on random maps") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const LabelMap m = oracle::blocky_labels(16, 16, 3, checks::pick(rng, 1, 4), rng);
    const std::vector<Label> classes{0, 1, 2};
    CHECK(largest_patches_fill(m, classes).labels == enclosure_oracle(m, classes));
  }
}

TEST_CASE("one patch per class is a fixpoint") {
  LabelMap m(8, 8, 0);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 5; x < 8; ++x) m.at(y, x) = 2;
  m.at(0, 0) = 1;
  const RefineResult r = refine_detailed(one_hot(m, 3));
  CHECK(r.labels == m);
  CHECK(r.iterations == 0);
  CHECK_FALSE(r.forced);
}

TEST_CASE("the six-pixel strip resolves to two runs") {
  // Argmax A A B A B B with the middle pixels' second choice the other class.
  const LabelMap arg(1, 6, std::vector<Label>{0, 0, 1, 0, 1, 1});
  Tensor s({1, 2, 1, 6});
  for (std::size_t x = 0; x < 6; ++x) {
    s.at(0, static_cast<std::size_t>(arg[x]), 0, x) = 0.9;
    s.at(0, static_cast<std::size_t>(1 - arg[x]), 0, x) = 0.1;
  }
  const RefineResult r = refine_detailed(s);
  CHECK(r.labels == LabelMap(1, 6, std::vector<Label>{0, 0, 0, 1, 1, 1}));
  CHECK_FALSE(r.forced);
  CHECK(r.max_rank == 2);
  CHECK(r.iterations >= 1);
}

TEST_CASE("refinement contract on fuzzed score volumes") {
  Rng rng(3);
  std::size_t forced = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Tensor s = checks::fuzz_scores(rng);
    const std::string why = checks::refine_contract(s, 0);
    INFO("trial " << trial << ": " << why);
    CHECK(why.empty());
    forced += refine_detailed(s).forced;
  }
  MESSAGE("forced fallbacks: " << forced << " of 300");
}

TEST_CASE("refining fewer regions than classes") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor s = checks::fuzz_scores(rng);
    const std::size_t n = checks::pick(rng, 1, s.shape().c);
    const RefineResult r = refine_detailed(s, n);
    CHECK(r.classes.size() <= n);
    CHECK(checks::refine_contract(s, n).empty());
    for (Label l : r.labels.classes()) CHECK(std::find(r.classes.begin(), r.classes.end(), l) != r.classes.end());
  }
}

TEST_CASE("refinement is idempotent on its own output") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor s = checks::fuzz_scores(rng);
    const LabelMap once = refine(s);
    CHECK(refine(one_hot(once, s.shape().c), 0) == once);
  }
}

TEST_CASE("iteration cap is honoured") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor s = oracle::random_tensor({1, 6, 24, 24}, rng);
    const RefineResult r = refine_detailed(s, 0, 3);
    CHECK(r.iterations <= 3);
    CHECK(checks::refine_contract(s, 0, 3).empty());
  }
}
