#include "mixedseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "mixedseg/checkpoint.hpp"

namespace mixedseg {

namespace {

std::string format_loss_csv(const std::vector<IterationLog>& log) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,loss_s,loss_c,total\n";
  for (std::size_t i = 0; i < log.size(); ++i) {
    os << (i + 1) << ',' << log[i].loss_s << ',' << log[i].loss_c << ',' << log[i].total
       << '\n';
  }
  return os.str();
}

void prune_checkpoints(const std::filesystem::path& dir, int keep_last) {
  std::vector<std::filesystem::path> ckpts;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("checkpoint_", 0) == 0 && name.ends_with(".msup")) {
      ckpts.push_back(entry.path());
    }
  }
  std::sort(ckpts.begin(), ckpts.end());
  while (int(ckpts.size()) > keep_last) {
    std::filesystem::remove(ckpts.front());
    ckpts.erase(ckpts.begin());
  }
}

}  // namespace

TrainResult train_loop(Model& model, const DatasetIndex& index, SliceSource& source,
                       const TrainOptions& options) {
  options.loss.validate();
  options.opt.validate();
  BatchComposition comp = options.comp;
  const bool standard = options.mode == TrainMode::kStandard;
  if (standard && comp.n != 0) {
    throw ConfigError("standard supervision uses no weakly-annotated slices (n must be 0)");
  }
  if (std::size_t(index.num_classes) != std::size_t(model.config.num_classes)) {
    throw ConfigError("dataset class count does not match the model");
  }
  const double a = standard ? 1.0 : options.loss.a;

  BatchSampler sampler(index, comp, options.seed, options.enforce_subclass_presence);
  Optimizer optimizer(model.parameters(), options.opt);
  const std::size_t batches_per_iter = std::size_t(options.opt.batches_per_iteration);

  const bool writing = !options.out_dir.empty();
  if (writing) std::filesystem::create_directories(options.out_dir);

  TrainResult result;
  for (int iter = 1; iter <= options.iterations; ++iter) {
    // Batches are drawn up front so the sampling stream is independent of the
    // gradient evaluation order.
    std::vector<Batch> batches;
    batches.reserve(batches_per_iter);
    for (std::size_t b = 0; b < batches_per_iter; ++b) {
      batches.push_back(
          assemble_batch(sampler.next_plan(), index, source, index.num_classes));
    }

    IterationLog log;
    auto eval_batch = [&](std::size_t b) {
      Batch& batch = batches[b];
      Tape tape;
      ForwardOutput out = forward(model, batch.images, ForwardMode::kTrain, &tape,
                                  /*with_branches=*/!standard);
      PixelWeights pw = compute_pixel_weights(batch.masks, options.loss);
      Tensor loss_s = segmentation_loss(out.seg_logits, batch.masks, pw, &tape);
      Tensor loss;
      double loss_c_value = 0.0;
      if (standard) {
        loss = loss_s;
      } else {
        Tensor loss_c = classification_loss(out.class_logits, batch.labels, &tape);
        loss_c_value = double(loss_c.item());
        loss = total_loss(loss_s, loss_c, a, &tape);
      }
      if (!std::isfinite(double(loss.item()))) {
        throw NumericError("non-finite loss at iteration " + std::to_string(iter));
      }
      log.loss_s += double(loss_s.item()) / double(batches_per_iter);
      log.loss_c += loss_c_value / double(batches_per_iter);
      log.total += double(loss.item()) / double(batches_per_iter);
      backward(loss, tape);
    };
    GradientBuffer grad = optimizer.accumulate(batches_per_iter, eval_batch);
    optimizer.step(grad);
    result.log.push_back(log);

    if (writing && options.checkpoint_every > 0 && iter % options.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06d.msup", iter);
      save_checkpoint(options.out_dir / name, model, &optimizer);
      prune_checkpoints(options.out_dir, options.keep_last);
    }
  }

  result.loss_csv = format_loss_csv(result.log);
  if (writing) {
    save_checkpoint(options.out_dir / "model_final.msup", model, &optimizer);
    std::ofstream os(options.out_dir / "loss_log.csv", std::ios::binary | std::ios::trunc);
    os << result.loss_csv;
    if (!os) throw DataError("failed writing loss log");
  }
  return result;
}

std::vector<EvalCase> collect_eval_cases(const std::vector<SliceRecord>& master,
                                         const std::vector<int>& volume_ids,
                                         SliceSource& source) {
  std::vector<int> wanted = volume_ids;
  std::sort(wanted.begin(), wanted.end());
  std::map<int, std::vector<const SliceRecord*>> by_volume;
  for (const SliceRecord& r : master) {
    if (std::binary_search(wanted.begin(), wanted.end(), r.volume_id)) {
      by_volume[r.volume_id].push_back(&r);
    }
  }
  std::vector<EvalCase> cases;
  for (auto& [vid, records] : by_volume) {
    std::sort(records.begin(), records.end(),
              [](const SliceRecord* x, const SliceRecord* y) {
                return x->slice_index < y->slice_index;
              });
    EvalCase cs;
    cs.volume_id = vid;
    for (const SliceRecord* r : records) {
      cs.slice_images.push_back(source.image(*r));
      source.image_reads[std::size_t(r->annotation)]++;
      if (r->annotation == AnnotationType::kWeak) {
        throw DataError("test volume " + std::to_string(vid) +
                        " has weak records; evaluation needs masks");
      }
      cs.slice_masks.push_back(source.mask(*r));
      source.mask_reads[std::size_t(r->annotation)]++;
    }
    cases.push_back(std::move(cs));
  }
  return cases;
}

}  // namespace mixedseg
