#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>

#include "mixedseg/data.hpp"
#include "mixedseg/rng.hpp"

using namespace mixedseg;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  cfg.num_volumes = 8;
  cfg.tumor_fraction = 0.75;
  cfg.depth = 10;
  cfg.height = 32;
  cfg.width = 32;
  cfg.seed = 31;
  return cfg;
}

struct Bbox {
  int lo[3] = {1 << 30, 1 << 30, 1 << 30};
  int hi[3] = {-1, -1, -1};
  bool empty = true;
  void add(int z, int y, int x) {
    const int p[3] = {z, y, x};
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
    empty = false;
  }
  bool contains(const Bbox& other) const {
    for (int i = 0; i < 3; ++i) {
      if (other.lo[i] < lo[i] || other.hi[i] > hi[i]) return false;
    }
    return true;
  }
};

}  // namespace

TEST_CASE("generator determinism and tumor assignment") {
  GeneratorConfig cfg = small_config();
  CHECK(cfg.num_tumor_volumes() == 6);

  Volume a = generate_volume(cfg, 0);
  Volume b = generate_volume(cfg, 0);
  REQUIRE(a.voxels.numel() == b.voxels.numel());
  for (std::size_t i = 0; i < a.voxels.numel(); ++i) {
    CHECK(a.voxels.values()[i] == b.voxels.values()[i]);
  }
  CHECK(a.mask.labels == b.mask.labels);

  // all-negative config: every mask is the zero matrix
  GeneratorConfig neg = small_config();
  neg.tumor_fraction = 0.0;
  for (int id = 0; id < 3; ++id) {
    CHECK(generate_volume(neg, id).mask.empty_of_tumor());
  }

  // tumor-free trailing volumes under the fractional config
  CHECK(generate_volume(cfg, 7).mask.empty_of_tumor());
  CHECK_FALSE(generate_volume(cfg, 0).mask.empty_of_tumor());
}

TEST_CASE("tumor regions are nested: core inside rim inside edema") {
  GeneratorConfig cfg = small_config();
  for (int id = 0; id < cfg.num_tumor_volumes(); ++id) {
    Volume v = generate_volume(cfg, id);
    Bbox box1, box2, box3;
    const std::size_t plane = std::size_t(cfg.height) * cfg.width;
    for (int z = 0; z < cfg.depth; ++z) {
      for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
          switch (v.mask.labels[z * plane + y * cfg.width + x]) {
            case 1: box1.add(z, y, x); break;
            case 2: box2.add(z, y, x); break;
            case 3: box3.add(z, y, x); break;
            default: break;
          }
        }
      }
    }
    INFO("volume ", id);
    REQUIRE_FALSE(box1.empty);  // all three shells rasterized
    REQUIRE_FALSE(box2.empty);
    REQUIRE_FALSE(box3.empty);
    CHECK(box3.contains(box1));  // rim encloses the core
    CHECK(box2.contains(box3));  // edema encloses the rim
  }
}

TEST_CASE("median of the non-zero entries") {
  std::vector<Real> v{0, 1, 2, 3, 4};
  CHECK(median_nonzero(v) == doctest::Approx(2.5));
  std::vector<Real> odd{0, 0, 5, 1, 9};
  CHECK(median_nonzero(odd) == doctest::Approx(5.0));
  std::vector<Real> zeros(4, Real(0));
  CHECK_THROWS_AS(median_nonzero(zeros), DataError);
}

TEST_CASE("intensity normalization: direct example, fixed point, scale invariance") {
  // channel [0,1,2,3,4] with c=100: nonzero median 2.5 -> [0,40,80,120,160]
  Volume v;
  v.voxels = Tensor({1, 1, 1, 5}, {0, 1, 2, 3, 4});
  v.mask = LabelMap::zeros({1, 1, 5});
  normalize_intensity(v, 100.0);
  const std::array<double, 5> expect{0, 40, 80, 120, 160};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(double(v.voxels.values()[i]) == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  CHECK(median_nonzero(v.voxels.values()) == doctest::Approx(100.0).epsilon(1e-12));

  // fixed point: normalizing again changes nothing
  std::vector<Real> before(v.voxels.values().begin(), v.voxels.values().end());
  normalize_intensity(v, 100.0);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(double(v.voxels.values()[i]) ==
          doctest::Approx(double(before[i])).epsilon(1e-12));
  }

  // positive rescaling of the input leaves the output unchanged
  Volume w;
  w.voxels = Tensor({1, 1, 1, 5}, {0, 3.7, 7.4, 11.1, 14.8});  // 3.7x the input
  w.mask = LabelMap::zeros({1, 1, 5});
  normalize_intensity(w, 100.0);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(double(w.voxels.values()[i]) ==
          doctest::Approx(double(v.voxels.values()[i])).epsilon(1e-12));
  }

  Volume zero;
  zero.voxels = Tensor::zeros({1, 2, 2, 2});
  zero.mask = LabelMap::zeros({2, 2, 2});
  CHECK_THROWS_AS(normalize_intensity(zero, 100.0), DataError);
}

TEST_CASE("slice extraction per role") {
  GeneratorConfig cfg = small_config();
  Volume tumor_vol = generate_volume(cfg, 0);
  Volume clean_vol = generate_volume(cfg, 7);

  // fa role: record count = depth, split by per-slice mask emptiness
  auto fa = extract_slices(tumor_vol, VolumeRole::kFullyAnnotated, 4);
  CHECK(fa.size() == std::size_t(cfg.depth));
  const std::size_t plane = std::size_t(cfg.height) * cfg.width;
  std::size_t expect_full = 0;
  for (int z = 0; z < cfg.depth; ++z) {
    bool any = false;
    for (std::size_t p = 0; p < plane; ++p) {
      any = any || tumor_vol.mask.labels[std::size_t(z) * plane + p] != 0;
    }
    expect_full += any;
    const auto& slice = fa[std::size_t(z)];
    CHECK(slice.record.slice_index == z);
    if (any) {
      CHECK(slice.record.annotation == AnnotationType::kFull);
      REQUIRE(slice.data.mask.has_value());
    } else {
      CHECK(slice.record.annotation == AnnotationType::kNegative);
      REQUIRE(slice.data.mask.has_value());
      CHECK(slice.data.mask->empty_of_tumor());
    }
  }
  CHECK(expect_full > 0);
  CHECK(expect_full < std::size_t(cfg.depth));

  // wa role: tumor slices carry presence flags but no mask
  auto wa = extract_slices(tumor_vol, VolumeRole::kWeaklyAnnotated, 4);
  for (const auto& slice : wa) {
    if (slice.record.annotation == AnnotationType::kWeak) {
      CHECK_FALSE(slice.data.mask.has_value());
      bool any_presence = false;
      for (bool b : slice.record.subclass_presence) any_presence = any_presence || b;
      CHECK(any_presence);
    }
  }

  // tumor-free volume: every record negative regardless of role
  auto negs = extract_slices(clean_vol, VolumeRole::kNegativeEligible, 4);
  CHECK(negs.size() == std::size_t(cfg.depth));
  for (const auto& s : negs) CHECK(s.record.annotation == AnnotationType::kNegative);
  CHECK_THROWS_AS(extract_slices(tumor_vol, VolumeRole::kNegativeEligible, 4), DataError);
}

TEST_CASE("fa slices reassemble the volume exactly") {
  GeneratorConfig cfg = small_config();
  Volume vol = generate_volume(cfg, 1);
  auto slices = extract_slices(vol, VolumeRole::kFullyAnnotated, 4);
  const std::size_t plane = std::size_t(cfg.height) * cfg.width;
  const std::size_t vol_sz = std::size_t(cfg.depth) * plane;
  for (std::size_t z = 0; z < slices.size(); ++z) {
    const Tensor& img = slices[z].data.image;
    REQUIRE(img.shape() == Shape{2, 32, 32});
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        CHECK(img.values()[c * plane + p] ==
              vol.voxels.values()[c * vol_sz + z * plane + p]);
      }
    }
    // mask slices byte-equal for supervised records
    if (slices[z].data.mask.has_value()) {
      for (std::size_t p = 0; p < plane; ++p) {
        CHECK(slices[z].data.mask->labels[p] == vol.mask.labels[z * plane + p]);
      }
    }
  }
}

TEST_CASE("fold planner reproduces the circular interval protocol") {
  // N=285, T=57, 5 folds, identity permutation
  for (int F : {5, 15, 30}) {
    auto plans = plan_folds(285, 57, F, 5, std::nullopt);
    REQUIRE(plans.size() == 5);
    // fold 1 (index 0): test 0..56, FA 57..56+F
    const FoldPlan& first = plans[0];
    for (int j = 0; j < 57; ++j) CHECK(first.test_ids[std::size_t(j)] == j);
    for (int j = 0; j < F; ++j) CHECK(first.fa_ids[std::size_t(j)] == 57 + j);
    CHECK(first.wa_ids.size() == std::size_t(285 - 57 - F));

    // last fold: test 228..284, FA wraps to 0..F-1
    const FoldPlan& last = plans[4];
    for (int j = 0; j < 57; ++j) CHECK(last.test_ids[std::size_t(j)] == 228 + j);
    for (int j = 0; j < F; ++j) CHECK(last.fa_ids[std::size_t(j)] == j);

    // test sets partition all 285 ids
    std::set<int> all_test;
    for (const auto& p : plans) {
      for (int id : p.test_ids) {
        CHECK(all_test.insert(id).second);  // pairwise disjoint
      }
      // per fold: the three sets partition the id range
      std::set<int> fold_union(p.test_ids.begin(), p.test_ids.end());
      fold_union.insert(p.fa_ids.begin(), p.fa_ids.end());
      fold_union.insert(p.wa_ids.begin(), p.wa_ids.end());
      CHECK(fold_union.size() == 285);
      CHECK(p.fa_ids.size() == std::size_t(F));
      CHECK(p.wa_ids.size() == std::size_t(285 - 57 - F));
    }
    CHECK(all_test.size() == 285);
  }
}

TEST_CASE("fold planner property sweep with random permutations") {
  Rng rng(111);
  for (int iter = 0; iter < 40; ++iter) {
    const int n = 20 + int(rng.below(80));
    const int folds = 1 + int(rng.below(5));
    const int t = 1 + int(rng.below(std::uint64_t(n / folds)));
    const int f = int(rng.below(std::uint64_t(n - t + 1)));
    auto plans = plan_folds(n, t, f, folds, rng.next_u64());
    for (const auto& p : plans) {
      CHECK(p.test_ids.size() == std::size_t(t));
      CHECK(p.fa_ids.size() == std::size_t(f));
      CHECK(p.wa_ids.size() == std::size_t(n - t - f));
      std::set<int> uni(p.test_ids.begin(), p.test_ids.end());
      uni.insert(p.fa_ids.begin(), p.fa_ids.end());
      uni.insert(p.wa_ids.begin(), p.wa_ids.end());
      CHECK(uni.size() == std::size_t(n));
      CHECK(*uni.begin() == 0);
      CHECK(*uni.rbegin() == n - 1);
      CHECK(std::is_sorted(p.test_ids.begin(), p.test_ids.end()));
    }
  }
  CHECK_THROWS_AS(plan_folds(10, 3, 0, 4, std::nullopt), ConfigError);  // 12 > 10
  CHECK_THROWS_AS(plan_folds(10, 3, 8, 3, std::nullopt), ConfigError);  // F > N-T
}

TEST_CASE("fold roles reinterpret master records") {
  GeneratorConfig cfg = small_config();
  std::vector<SliceRecord> master;
  for (int id = 0; id < cfg.num_volumes; ++id) {
    Volume v = generate_volume(cfg, id);
    for (auto& s : extract_slices(v, VolumeRole::kFullyAnnotated, 4)) {
      master.push_back(s.record);
    }
  }
  FoldPlan plan;
  plan.test_ids = {0, 1};
  plan.fa_ids = {2, 3};
  plan.wa_ids = {4, 5, 6, 7};
  auto records = apply_fold_roles(master, plan);
  for (const auto& r : records) {
    CHECK(r.volume_id >= 2);
    if (r.volume_id <= 3) {
      CHECK(r.annotation != AnnotationType::kWeak);
    } else {
      CHECK(r.annotation != AnnotationType::kFull);
    }
  }
  auto fa_only = filter_records_by_volumes(master, plan.fa_ids);
  for (const auto& r : fa_only) {
    CHECK(r.volume_id >= 2);
    CHECK(r.volume_id <= 3);
  }
}
