#include "mixedseg/sampling.hpp"

#include <algorithm>
#include <string>

namespace mixedseg {

const char* annotation_name(AnnotationType t) {
  switch (t) {
    case AnnotationType::kFull: return "full";
    case AnnotationType::kNegative: return "negative";
    case AnnotationType::kWeak: return "weak";
  }
  return "?";
}

AnnotationType annotation_from_name(const std::string& name) {
  if (name == "full") return AnnotationType::kFull;
  if (name == "negative") return AnnotationType::kNegative;
  if (name == "weak") return AnnotationType::kWeak;
  throw DataError("unknown annotation type '" + name + "'");
}

void BatchComposition::validate() const {
  if (k < 1) throw ConfigError("batch composition requires k >= 1");
  if (m < 0 || n < 0) throw ConfigError("batch composition requires m, n >= 0");
}

DatasetIndex index_dataset(std::vector<SliceRecord> records, std::size_t num_classes) {
  if (records.empty()) throw DataError("cannot index an empty record list");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  DatasetIndex idx;
  idx.records = std::move(records);
  idx.num_classes = num_classes;
  idx.subclass_full.resize(num_classes - 1);
  idx.subclass_weak.resize(num_classes - 1);
  for (std::size_t i = 0; i < idx.records.size(); ++i) {
    const SliceRecord& r = idx.records[i];
    if (r.subclass_presence.size() != num_classes - 1) {
      throw DataError("record " + std::to_string(i) + " has " +
                      std::to_string(r.subclass_presence.size()) +
                      " presence flags, expected " + std::to_string(num_classes - 1));
    }
    switch (r.annotation) {
      case AnnotationType::kFull:
        idx.full_pool.push_back(i);
        break;
      case AnnotationType::kNegative:
        for (bool p : r.subclass_presence) {
          if (p) {
            throw DataError("negative record " + std::to_string(i) +
                            " claims a tumor subclass present");
          }
        }
        idx.negative_pool.push_back(i);
        break;
      case AnnotationType::kWeak:
        idx.weak_pool.push_back(i);
        break;
    }
    if (r.annotation != AnnotationType::kNegative) {
      for (std::size_t c = 0; c + 1 < num_classes; ++c) {
        if (!r.subclass_presence[c]) continue;
        if (r.annotation == AnnotationType::kFull) {
          idx.subclass_full[c].push_back(i);
        } else {
          idx.subclass_weak[c].push_back(i);
        }
      }
    }
  }
  return idx;
}

std::vector<SliceRecord> collapse_records_to_binary(std::vector<SliceRecord> records) {
  for (SliceRecord& r : records) {
    bool any = false;
    for (bool p : r.subclass_presence) any = any || p;
    if (r.annotation != AnnotationType::kNegative && r.annotation != AnnotationType::kFull) {
      // weak records keep their stored flag; full records are recomputed from
      // masks at batch time anyway
    }
    r.subclass_presence.assign(1, any && r.annotation != AnnotationType::kNegative);
  }
  return records;
}

std::vector<int> derive_global_labels(const LabelMap& mask, std::size_t num_classes) {
  std::vector<int> labels(num_classes - 1, 0);
  if (num_classes == 2) {
    labels[0] = mask.empty_of_tumor() ? 0 : 1;
    return labels;
  }
  for (std::size_t c = 1; c < num_classes; ++c) {
    labels[c - 1] = mask.contains_class(std::uint8_t(c)) ? 1 : 0;
  }
  return labels;
}

std::vector<int> derive_global_labels(const SliceRecord& record, std::size_t num_classes) {
  if (record.subclass_presence.size() != num_classes - 1) {
    throw DataError("record presence flags do not match the class count");
  }
  std::vector<int> labels(num_classes - 1, 0);
  if (record.annotation == AnnotationType::kNegative) return labels;
  for (std::size_t c = 0; c + 1 < num_classes; ++c) {
    labels[c] = record.subclass_presence[c] ? 1 : 0;
  }
  return labels;
}

BatchSampler::BatchSampler(const DatasetIndex& index, BatchComposition comp,
                           std::uint64_t seed, bool enforce_subclass_presence)
    : index_(index),
      comp_(comp),
      enforce_presence_(enforce_subclass_presence),
      rng_(derive_seed(seed, SeedStream::kSampler)) {
  comp_.validate();
  if (comp_.k > 0 && index_.full_pool.empty()) {
    throw ConfigError("fully-annotated pool empty (k=" + std::to_string(comp_.k) + ")");
  }
  if (comp_.m > 0 && index_.negative_pool.empty()) {
    throw ConfigError("negative pool empty (m=" + std::to_string(comp_.m) + ")");
  }
  if (comp_.n > 0 && index_.weak_pool.empty()) {
    throw ConfigError("weakly-annotated pool empty (n=" + std::to_string(comp_.n) + ")");
  }
  if (enforce_presence_) {
    for (std::size_t c = 0; c + 1 < index_.num_classes; ++c) {
      if (index_.subclass_full[c].empty() && index_.subclass_weak[c].empty()) {
        throw ConfigError("no positive slices contain subclass " + std::to_string(c + 1));
      }
    }
  }
}

bool BatchSampler::all_subclasses_present(const std::vector<std::size_t>& records) const {
  const std::size_t subclasses = index_.num_classes - 1;
  std::vector<bool> seen(subclasses, false);
  for (std::size_t idx : records) {
    const auto& presence = index_.records[idx].subclass_presence;
    for (std::size_t c = 0; c < subclasses; ++c) {
      if (presence[c]) seen[c] = true;
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

BatchPlan BatchSampler::next_plan() {
  constexpr int kMaxAttempts = 100;
  BatchPlan plan;
  plan.comp = comp_;
  auto draw = [this](const std::vector<std::size_t>& pool) {
    return pool[rng_.below(pool.size())];
  };

  for (int attempt = 0;; ++attempt) {
    plan.record_indices.clear();
    for (int i = 0; i < comp_.k; ++i) plan.record_indices.push_back(draw(index_.full_pool));
    for (int i = 0; i < comp_.m; ++i) plan.record_indices.push_back(draw(index_.negative_pool));
    for (int i = 0; i < comp_.n; ++i) plan.record_indices.push_back(draw(index_.weak_pool));
    if (!enforce_presence_ || all_subclasses_present(plan.record_indices)) return plan;
    if (attempt + 1 >= kMaxAttempts) break;
  }

  // Rejection failed: patch the trailing weak (then full) slots with slices
  // from the rarest missing subclasses.
  const std::size_t subclasses = index_.num_classes - 1;
  std::vector<bool> seen(subclasses, false);
  for (std::size_t idx : plan.record_indices) {
    const auto& presence = index_.records[idx].subclass_presence;
    for (std::size_t c = 0; c < subclasses; ++c) {
      if (presence[c]) seen[c] = true;
    }
  }
  std::vector<std::size_t> missing;
  for (std::size_t c = 0; c < subclasses; ++c) {
    if (!seen[c]) missing.push_back(c);
  }
  std::sort(missing.begin(), missing.end(), [this](std::size_t a, std::size_t b) {
    const std::size_t pa = index_.subclass_full[a].size() + index_.subclass_weak[a].size();
    const std::size_t pb = index_.subclass_full[b].size() + index_.subclass_weak[b].size();
    return pa != pb ? pa < pb : a < b;
  });
  int weak_slot = comp_.total() - 1;       // last weak position
  int full_slot = comp_.k - 1;             // last full position
  for (std::size_t c : missing) {
    if (comp_.n > 0 && weak_slot >= comp_.supervised() && !index_.subclass_weak[c].empty()) {
      plan.record_indices[std::size_t(weak_slot)] = draw(index_.subclass_weak[c]);
      --weak_slot;
    } else if (full_slot >= 0 && !index_.subclass_full[c].empty()) {
      plan.record_indices[std::size_t(full_slot)] = draw(index_.subclass_full[c]);
      --full_slot;
    } else if (weak_slot >= comp_.supervised() && !index_.subclass_weak[c].empty()) {
      plan.record_indices[std::size_t(weak_slot)] = draw(index_.subclass_weak[c]);
      --weak_slot;
    } else {
      throw DataError("cannot satisfy subclass presence for subclass " +
                      std::to_string(c + 1) + " with this batch composition");
    }
  }
  return plan;
}

Batch assemble_batch(const BatchPlan& plan, const DatasetIndex& index,
                     SliceSource& source, std::size_t num_classes) {
  if (plan.record_indices.size() != std::size_t(plan.comp.total())) {
    throw ShapeError("batch plan size does not match its composition");
  }
  Batch batch;
  batch.plan = plan;
  const std::size_t total = plan.record_indices.size();
  const std::size_t supervised = std::size_t(plan.comp.supervised());
  const std::size_t branches = num_classes - 1;

  Tensor first = source.image(index.records[plan.record_indices[0]]);
  source.image_reads[std::size_t(index.records[plan.record_indices[0]].annotation)]++;
  if (first.ndim() != 3) throw ShapeError("slice images must be [C,H,W]");
  const std::size_t ch = first.dim(0), h = first.dim(1), w = first.dim(2);
  batch.images = Tensor::zeros({total, ch, h, w});
  batch.masks = LabelMap::zeros({supervised, h, w});
  batch.labels.assign(branches, std::vector<int>(total, 0));

  const std::size_t img_sz = ch * h * w;
  for (std::size_t i = 0; i < total; ++i) {
    const SliceRecord& rec = index.records[plan.record_indices[i]];
    Tensor img = first;
    if (i > 0) {
      img = source.image(rec);
      source.image_reads[std::size_t(rec.annotation)]++;
      if (img.shape() != first.shape()) {
        throw ShapeError("inconsistent slice shapes in one batch");
      }
    }
    std::copy_n(img.values().begin(), img_sz, batch.images.values().begin() + i * img_sz);

    std::vector<int> labels;
    if (rec.annotation == AnnotationType::kFull) {
      LabelMap mask = source.mask(rec);
      source.mask_reads[std::size_t(rec.annotation)]++;
      if (mask.dims != Shape{h, w}) throw ShapeError("mask dims do not match the image");
      if (num_classes == 2) {
        for (auto& l : mask.labels) l = l > 0 ? 1 : 0;
      } else {
        for (auto l : mask.labels) {
          if (l >= num_classes) throw DataError("mask label out of range for class count");
        }
      }
      // image-level labels recomputed from the mask, never from metadata
      labels = derive_global_labels(mask, num_classes);
      std::copy_n(mask.labels.begin(), h * w, batch.masks.labels.begin() + i * h * w);
    } else if (rec.annotation == AnnotationType::kNegative) {
      labels.assign(branches, 0);  // the zero matrix needs no pixel payload
    } else {
      if (i < supervised) {
        throw DataError("weak record placed in a supervised batch slot");
      }
      labels = derive_global_labels(rec, num_classes);
    }
    for (std::size_t b = 0; b < branches; ++b) batch.labels[b][i] = labels[b];
  }
  return batch;
}

}  // namespace mixedseg
