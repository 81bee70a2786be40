#ifndef MIXEDSEG_DATA_HPP_
#define MIXEDSEG_DATA_HPP_

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mixedseg/labelmap.hpp"
#include "mixedseg/sampling.hpp"
#include "mixedseg/tensor.hpp"

namespace mixedseg {

// Synthetic multi-channel volumes: an ellipsoidal "brain" of textured tissue
// on a zero background, with tumors built from nested ellipsoids
// (non-enhancing core, class 1, innermost; enhancing rim, class 3; edema
// halo, class 2, outermost).
struct GeneratorConfig {
  int num_volumes = 80;
  double tumor_fraction = 0.75;  // leading volume ids carry tumors
  int channels = 2;
  int depth = 10;  // axial slices per volume
  int height = 32;
  int width = 32;
  double noise_sigma = 0.08;
  int num_classes = 4;
  // mean intensity of class k in channel c; class 0 is healthy brain tissue
  std::vector<std::vector<double>> class_intensity;
  std::uint64_t seed = 0;

  void validate() const;
  int num_tumor_volumes() const;
  bool is_tumor_volume(int volume_id) const { return volume_id < num_tumor_volumes(); }

  static GeneratorConfig defaults();
};

struct Volume {
  Tensor voxels;  // [C,D,H,W]
  LabelMap mask;  // [D,H,W], labels in [0,K)
  int volume_id = 0;
};

// Fully deterministic in (config.seed, volume_id).
Volume generate_volume(const GeneratorConfig& config, int volume_id);

// Per channel: v <- v / median(nonzero(v)) * scale_constant, so the non-zero
// median of the result equals the constant. Throws DataError on an all-zero
// channel. Median of an even count is the midpoint of the two central values.
void normalize_intensity(Volume& volume, double scale_constant);

// Median of the non-zero entries of a buffer (helper exposed for tests).
double median_nonzero(std::span<const Real> values);

enum class VolumeRole { kFullyAnnotated, kWeaklyAnnotated, kNegativeEligible };

struct SliceData {
  Tensor image;                  // [C,H,W]
  std::optional<LabelMap> mask;  // [H,W]; absent for weak records
};

struct ExtractedSlice {
  SliceRecord record;
  SliceData data;
};

// One record per axial slice. Fully-annotated volumes yield full records for
// tumor slices and negative records (zero mask) for empty ones;
// weakly-annotated volumes yield weak records (mask discarded, presence
// flags kept) and negatives; negative-eligible volumes must be tumor-free.
std::vector<ExtractedSlice> extract_slices(const Volume& volume, VolumeRole role,
                                           std::size_t num_classes);

// Circular cross-validation folds over N volume ids: ids are permuted (or
// left in place when no seed is given), fold f takes positions
// [f*T, (f+1)*T) as test, the next F positions modulo N as fully-annotated
// and the remaining N-T-F as weakly-annotated.
struct FoldPlan {
  int fold_id = 0;
  std::vector<int> test_ids;
  std::vector<int> fa_ids;
  std::vector<int> wa_ids;
};

std::vector<FoldPlan> plan_folds(int num_volumes, int test_per_fold,
                                 int fully_annotated, int num_folds,
                                 std::optional<std::uint64_t> permutation_seed);

// Reinterprets a full-truth master record list for one fold: records of
// fully-annotated volumes keep their annotation, tumor records of
// weakly-annotated volumes are demoted to weak (their masks are no longer
// read), test-volume records are dropped.
std::vector<SliceRecord> apply_fold_roles(const std::vector<SliceRecord>& master,
                                          const FoldPlan& plan);

// Records belonging to the given volumes only (the standard-supervision pool).
std::vector<SliceRecord> filter_records_by_volumes(
    const std::vector<SliceRecord>& master, const std::vector<int>& volume_ids);

}  // namespace mixedseg

#endif  // MIXEDSEG_DATA_HPP_
