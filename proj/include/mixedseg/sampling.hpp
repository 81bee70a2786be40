#ifndef MIXEDSEG_SAMPLING_HPP_
#define MIXEDSEG_SAMPLING_HPP_

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mixedseg/labelmap.hpp"
#include "mixedseg/rng.hpp"
#include "mixedseg/tensor.hpp"

namespace mixedseg {

// The three supervision levels a training slice can carry: full pixel mask,
// tumor-free (the mask is the zero matrix), or an image-level label only.
enum class AnnotationType { kFull, kNegative, kWeak };

const char* annotation_name(AnnotationType t);
AnnotationType annotation_from_name(const std::string& name);

struct SliceRecord {
  int volume_id = 0;
  int slice_index = 0;
  std::string data_path;
  AnnotationType annotation = AnnotationType::kNegative;
  // presence flag per tumor subclass (K-1 entries)
  std::vector<bool> subclass_presence;
};

struct BatchComposition {
  int k = 4;  // fully-annotated positives
  int m = 2;  // negatives
  int n = 4;  // weak positives

  int total() const { return k + m + n; }
  int supervised() const { return k + m; }
  void validate() const;
};

struct DatasetIndex {
  std::vector<SliceRecord> records;
  std::size_t num_classes = 2;
  std::vector<std::size_t> full_pool;
  std::vector<std::size_t> negative_pool;
  std::vector<std::size_t> weak_pool;
  // per subclass: full/weak records containing it
  std::vector<std::vector<std::size_t>> subclass_full;
  std::vector<std::vector<std::size_t>> subclass_weak;
};

// Builds the per-type pools plus, for the multiclass sampler, the per-subclass
// lists of positive slices. Throws DataError on an empty record list.
DatasetIndex index_dataset(std::vector<SliceRecord> records, std::size_t num_classes);

// Multiclass records viewed as the binary whole-tumor task: the presence
// flags collapse to a single any-subclass flag.
std::vector<SliceRecord> collapse_records_to_binary(std::vector<SliceRecord> records);

// Image-level labels per tumor subclass; the binary task collapses to one
// whole-tumor flag. Full records recompute presence from the mask.
std::vector<int> derive_global_labels(const LabelMap& mask, std::size_t num_classes);
std::vector<int> derive_global_labels(const SliceRecord& record, std::size_t num_classes);

// Indices into index.records: [0,k) full, [k,k+m) negative, [k+m,k+m+n) weak.
struct BatchPlan {
  BatchComposition comp;
  std::vector<std::size_t> record_indices;
};

// Uniform sampling with replacement from each pool; in multiclass mode every
// tumor subclass is guaranteed present in each batch (rejection with a 100
// attempt cap, then deterministic patching of the trailing weak slots from
// the rarest missing subclass's pool). Deterministic per seed.
class BatchSampler {
 public:
  BatchSampler(const DatasetIndex& index, BatchComposition comp, std::uint64_t seed,
               bool enforce_subclass_presence);

  BatchPlan next_plan();

 private:
  const DatasetIndex& index_;
  BatchComposition comp_;
  bool enforce_presence_;
  Rng rng_;

  bool all_subclasses_present(const std::vector<std::size_t>& records) const;
};

// Pixel data access for assembling batches. Implementations count reads per
// annotation type so tests can verify what a training mode touched.
class SliceSource {
 public:
  virtual ~SliceSource() = default;
  virtual Tensor image(const SliceRecord& record) = 0;   // [C,H,W]
  virtual LabelMap mask(const SliceRecord& record) = 0;  // [H,W]

  std::array<std::size_t, 3> image_reads{0, 0, 0};  // indexed by AnnotationType
  std::array<std::size_t, 3> mask_reads{0, 0, 0};
};

struct Batch {
  BatchPlan plan;
  Tensor images;   // [k+m+n, C, H, W]
  LabelMap masks;  // [k+m, H, W]; binarized when num_classes == 2
  std::vector<std::vector<int>> labels;  // per branch, one 0/1 label per image
};

// Loads pixel data for a plan. Masks are fetched for the supervised images
// only (negatives materialize as zero matrices without touching the source's
// mask payload); weak images contribute image-level labels from their stored
// presence flags, full images from their masks.
Batch assemble_batch(const BatchPlan& plan, const DatasetIndex& index,
                     SliceSource& source, std::size_t num_classes);

}  // namespace mixedseg

#endif  // MIXEDSEG_SAMPLING_HPP_
