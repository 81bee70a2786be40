#include "mixedseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixedseg/rng.hpp"

namespace mixedseg {

void GeneratorConfig::validate() const {
  if (num_volumes < 1) throw ConfigError("num_volumes must be >= 1");
  if (tumor_fraction < 0.0 || tumor_fraction > 1.0) {
    throw ConfigError("tumor_fraction must lie in [0,1]");
  }
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (depth < 8 || height < 8 || width < 8) {
    throw ConfigError("volume dims must be >= 8 per axis");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (num_classes < 2 || num_classes > 4) {
    throw ConfigError("generator supports 2..4 classes");
  }
  if (class_intensity.size() != std::size_t(num_classes)) {
    throw ConfigError("class_intensity needs one row per class");
  }
  for (const auto& row : class_intensity) {
    if (row.size() != std::size_t(channels)) {
      throw ConfigError("class_intensity rows must have one entry per channel");
    }
  }
}

int GeneratorConfig::num_tumor_volumes() const {
  return int(std::llround(tumor_fraction * num_volumes));
}

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig c;
  // channel 0 behaves like a post-contrast T1 (bright enhancing rim), channel
  // 1 like FLAIR (bright edema); healthy tissue sits at 1.0 in both
  c.class_intensity = {
      {1.00, 1.00},  // healthy brain
      {1.15, 1.35},  // non-enhancing core (class 1)
      {1.05, 1.70},  // edema (class 2)
      {1.65, 1.50},  // enhancing rim (class 3)
  };
  return c;
}

Volume generate_volume(const GeneratorConfig& config, int volume_id) {
  config.validate();
  if (volume_id < 0 || volume_id >= config.num_volumes) {
    throw ConfigError("volume_id out of range");
  }
  const std::uint64_t vol_seed =
      derive_seed(derive_seed(config.seed, SeedStream::kData), std::uint64_t(volume_id));
  Rng rng(vol_seed);

  const std::size_t ch = std::size_t(config.channels);
  const std::size_t d = std::size_t(config.depth);
  const std::size_t h = std::size_t(config.height);
  const std::size_t w = std::size_t(config.width);

  Volume vol;
  vol.volume_id = volume_id;
  vol.voxels = Tensor::zeros({ch, d, h, w});
  vol.mask = LabelMap::zeros({d, h, w});

  // brain ellipsoid on a zero background
  const double bcz = d * (0.5 + rng.uniform(-0.03, 0.03));
  const double bcy = h * (0.5 + rng.uniform(-0.03, 0.03));
  const double bcx = w * (0.5 + rng.uniform(-0.03, 0.03));
  const double baz = d * rng.uniform(0.42, 0.48);
  const double bay = h * rng.uniform(0.42, 0.48);
  const double bax = w * rng.uniform(0.42, 0.48);

  // per-channel linear intensity drift across the volume
  std::vector<std::array<double, 3>> drift(ch);
  for (auto& g : drift) {
    g = {rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15)};
  }

  bool with_tumor = config.is_tumor_volume(volume_id);
  double tcz = 0, tcy = 0, tcx = 0, taz = 1, tay = 1, tax = 1;
  double core_frac = 0, rim_frac = 0;
  if (with_tumor) {
    tcz = d * rng.uniform(0.38, 0.62);
    tcy = h * rng.uniform(0.35, 0.65);
    tcx = w * rng.uniform(0.35, 0.65);
    // Minimum semi-axes and shell-fraction widths keep at least one voxel in
    // each of the three shells at the volume sizes the tests use.
    taz = std::max(2.2, baz * rng.uniform(0.35, 0.55));
    tay = std::max(4.5, bay * rng.uniform(0.30, 0.52));
    tax = std::max(4.5, bax * rng.uniform(0.30, 0.52));
    core_frac = rng.uniform(0.34, 0.44);
    rim_frac = core_frac + rng.uniform(0.26, 0.34);
  }

  const std::size_t plane = h * w;
  const std::size_t vol_sz = d * plane;
  for (std::size_t z = 0; z < d; ++z) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dz = (z + 0.5 - bcz) / baz;
        const double dy = (y + 0.5 - bcy) / bay;
        const double dx = (x + 0.5 - bcx) / bax;
        if (dz * dz + dy * dy + dx * dx > 1.0) continue;  // outside the brain

        std::uint8_t label = 0;
        if (with_tumor) {
          const double tz = (z + 0.5 - tcz) / taz;
          const double ty = (y + 0.5 - tcy) / tay;
          const double tx = (x + 0.5 - tcx) / tax;
          const double rho = std::sqrt(tz * tz + ty * ty + tx * tx);
          if (rho <= core_frac) {
            label = 1;  // non-enhancing core
          } else if (rho <= rim_frac) {
            label = 3;  // enhancing rim
          } else if (rho <= 1.0) {
            label = 2;  // edema halo
          }
        }
        if (label >= config.num_classes) label = std::uint8_t(config.num_classes - 1);
        vol.mask.labels[z * plane + y * w + x] = label;

        for (std::size_t c = 0; c < ch; ++c) {
          const double base = config.class_intensity[label][c];
          const double mod = 1.0 + drift[c][0] * (double(z) / d - 0.5) +
                             drift[c][1] * (double(y) / h - 0.5) +
                             drift[c][2] * (double(x) / w - 0.5);
          const double v = base * mod + rng.normal(0.0, config.noise_sigma);
          vol.voxels.values()[c * vol_sz + z * plane + y * w + x] = Real(v);
        }
      }
    }
  }
  return vol;
}

double median_nonzero(std::span<const Real> values) {
  std::vector<double> nz;
  nz.reserve(values.size());
  for (Real v : values) {
    if (v != Real(0)) nz.push_back(double(v));
  }
  if (nz.empty()) throw DataError("channel has no non-zero voxels");
  std::sort(nz.begin(), nz.end());
  const std::size_t n = nz.size();
  if (n % 2 == 1) return nz[n / 2];
  return 0.5 * (nz[n / 2 - 1] + nz[n / 2]);
}

void normalize_intensity(Volume& volume, double scale_constant) {
  if (scale_constant <= 0.0) throw ConfigError("scale constant must be positive");
  const std::size_t ch = volume.voxels.dim(0);
  const std::size_t per = volume.voxels.numel() / ch;
  for (std::size_t c = 0; c < ch; ++c) {
    auto channel = volume.voxels.values().subspan(c * per, per);
    const double med = median_nonzero(channel);
    const Real factor = Real(scale_constant / med);
    for (Real& v : channel) v *= factor;
  }
}

std::vector<ExtractedSlice> extract_slices(const Volume& volume, VolumeRole role,
                                           std::size_t num_classes) {
  const std::size_t ch = volume.voxels.dim(0);
  const std::size_t d = volume.voxels.dim(1);
  const std::size_t h = volume.voxels.dim(2);
  const std::size_t w = volume.voxels.dim(3);
  const std::size_t plane = h * w;
  const std::size_t vol_sz = d * plane;

  std::vector<ExtractedSlice> out;
  out.reserve(d);
  for (std::size_t z = 0; z < d; ++z) {
    ExtractedSlice s;
    s.record.volume_id = volume.volume_id;
    s.record.slice_index = int(z);

    std::vector<Real> img(ch * plane);
    for (std::size_t c = 0; c < ch; ++c) {
      std::copy_n(volume.voxels.values().begin() + c * vol_sz + z * plane, plane,
                  img.begin() + c * plane);
    }
    s.data.image = Tensor({ch, h, w}, std::move(img));

    LabelMap mask = LabelMap::zeros({h, w});
    std::copy_n(volume.mask.labels.begin() + z * plane, plane, mask.labels.begin());
    const bool has_tumor = !mask.empty_of_tumor();

    std::vector<bool> presence(num_classes - 1, false);
    for (std::size_t c = 1; c < num_classes; ++c) {
      presence[c - 1] = mask.contains_class(std::uint8_t(c));
    }
    if (num_classes == 2 && has_tumor) presence[0] = true;

    switch (role) {
      case VolumeRole::kFullyAnnotated:
        if (has_tumor) {
          s.record.annotation = AnnotationType::kFull;
          s.record.subclass_presence = presence;
          s.data.mask = std::move(mask);
        } else {
          s.record.annotation = AnnotationType::kNegative;
          s.record.subclass_presence.assign(num_classes - 1, false);
          s.data.mask = std::move(mask);  // the zero matrix
        }
        break;
      case VolumeRole::kWeaklyAnnotated:
        if (has_tumor) {
          s.record.annotation = AnnotationType::kWeak;
          s.record.subclass_presence = presence;
          // mask deliberately dropped: only the presence flags remain
        } else {
          s.record.annotation = AnnotationType::kNegative;
          s.record.subclass_presence.assign(num_classes - 1, false);
          s.data.mask = std::move(mask);
        }
        break;
      case VolumeRole::kNegativeEligible:
        if (has_tumor) {
          throw DataError("volume " + std::to_string(volume.volume_id) +
                          " slice " + std::to_string(z) +
                          " contains tumor but was declared negative-eligible");
        }
        s.record.annotation = AnnotationType::kNegative;
        s.record.subclass_presence.assign(num_classes - 1, false);
        s.data.mask = std::move(mask);
        break;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FoldPlan> plan_folds(int num_volumes, int test_per_fold,
                                 int fully_annotated, int num_folds,
                                 std::optional<std::uint64_t> permutation_seed) {
  if (num_volumes < 1 || test_per_fold < 1 || num_folds < 1 || fully_annotated < 0) {
    throw ConfigError("fold sizes must be positive (F may be zero)");
  }
  if (std::int64_t(num_folds) * test_per_fold > num_volumes) {
    throw ConfigError("num_folds * T exceeds the number of volumes");
  }
  if (fully_annotated > num_volumes - test_per_fold) {
    throw ConfigError("F exceeds N - T");
  }
  std::vector<int> perm(static_cast<std::size_t>(num_volumes));
  std::iota(perm.begin(), perm.end(), 0);
  if (permutation_seed.has_value()) {
    Rng rng(derive_seed(*permutation_seed, SeedStream::kFolds));
    rng.shuffle(perm);
  }

  std::vector<FoldPlan> plans;
  for (int f = 0; f < num_folds; ++f) {
    FoldPlan plan;
    plan.fold_id = f;
    std::vector<bool> taken(std::size_t(num_volumes), false);
    for (int j = 0; j < test_per_fold; ++j) {
      const int pos = f * test_per_fold + j;
      plan.test_ids.push_back(perm[std::size_t(pos)]);
      taken[std::size_t(pos)] = true;
    }
    for (int j = 0; j < fully_annotated; ++j) {
      const int pos = ((f + 1) * test_per_fold + j) % num_volumes;
      plan.fa_ids.push_back(perm[std::size_t(pos)]);
      taken[std::size_t(pos)] = true;
    }
    for (int pos = 0; pos < num_volumes; ++pos) {
      if (!taken[std::size_t(pos)]) plan.wa_ids.push_back(perm[std::size_t(pos)]);
    }
    std::sort(plan.test_ids.begin(), plan.test_ids.end());
    std::sort(plan.fa_ids.begin(), plan.fa_ids.end());
    std::sort(plan.wa_ids.begin(), plan.wa_ids.end());
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<SliceRecord> apply_fold_roles(const std::vector<SliceRecord>& master,
                                          const FoldPlan& plan) {
  auto in = [](const std::vector<int>& sorted, int id) {
    return std::binary_search(sorted.begin(), sorted.end(), id);
  };
  std::vector<SliceRecord> out;
  for (const SliceRecord& r : master) {
    if (in(plan.test_ids, r.volume_id)) continue;
    if (in(plan.fa_ids, r.volume_id)) {
      out.push_back(r);
    } else if (in(plan.wa_ids, r.volume_id)) {
      SliceRecord w = r;
      if (w.annotation == AnnotationType::kFull) w.annotation = AnnotationType::kWeak;
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<SliceRecord> filter_records_by_volumes(
    const std::vector<SliceRecord>& master, const std::vector<int>& volume_ids) {
  std::vector<int> sorted = volume_ids;
  std::sort(sorted.begin(), sorted.end());
  std::vector<SliceRecord> out;
  for (const SliceRecord& r : master) {
    if (std::binary_search(sorted.begin(), sorted.end(), r.volume_id)) out.push_back(r);
  }
  return out;
}

}  // namespace mixedseg
