#ifndef MIXEDSEG_IO_HPP_
#define MIXEDSEG_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mixedseg/data.hpp"
#include "mixedseg/labelmap.hpp"
#include "mixedseg/sampling.hpp"
#include "mixedseg/tensor.hpp"

namespace mixedseg {

// MSVD binary container for volumes and slices:
//   magic 'MSVD' | u32 version=1 | u8 dtype (0=f32,1=f64) | u8 has_mask |
//   u8 ndim | u8 mask_ndim | u64 dims[ndim] | payload (little-endian) |
//   [u64 mask_dims[mask_ndim] | u8 labels[...]]
void write_msvd(const std::filesystem::path& path, const Tensor& data,
                const LabelMap* mask, bool as_f32 = true);

struct MsvdContent {
  Tensor data;
  std::optional<LabelMap> mask;
  bool stored_f32 = false;
};

MsvdContent read_msvd(const std::filesystem::path& path);

// Line-delimited dataset manifest, one slice per line:
//   volume_id,slice_index,data_path,annotation,subclass_presence
// with annotation in {full,negative,weak} and presence as a 0/1 string, one
// character per tumor subclass. Round-trips byte-exactly.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<SliceRecord>& records);
std::vector<SliceRecord> read_manifest(const std::filesystem::path& path);

// Fold plans as a JSON document listing the three id sets per fold.
void write_fold_plans(const std::filesystem::path& path,
                      const std::vector<FoldPlan>& plans,
                      const std::string& meta_json = "{}");
std::vector<FoldPlan> read_fold_plans(const std::filesystem::path& path);

// Reads slice pixel data from the MSVD blobs referenced by a manifest.
class FileSliceSource : public SliceSource {
 public:
  explicit FileSliceSource(std::filesystem::path root) : root_(std::move(root)) {}

  Tensor image(const SliceRecord& record) override;
  LabelMap mask(const SliceRecord& record) override;

 private:
  std::filesystem::path root_;
};

// Training slice store kept in memory, keyed by (volume_id, slice_index);
// used by tests and the experiment harness to avoid disk round-trips.
class MemorySliceSource : public SliceSource {
 public:
  void add(const SliceRecord& record, SliceData data);

  Tensor image(const SliceRecord& record) override;
  LabelMap mask(const SliceRecord& record) override;

 private:
  static std::int64_t key(const SliceRecord& r) {
    return std::int64_t(r.volume_id) * (1 << 20) + r.slice_index;
  }
  std::unordered_map<std::int64_t, SliceData> slices_;
};

}  // namespace mixedseg

#endif  // MIXEDSEG_IO_HPP_
