#ifndef MIXEDSEG_EVALUATION_HPP_
#define MIXEDSEG_EVALUATION_HPP_

#include <string>
#include <vector>

#include "mixedseg/labelmap.hpp"
#include "mixedseg/model.hpp"

namespace mixedseg {

// A named group of class indices evaluated as one binary region.
struct RegionSpec {
  std::string name;
  std::vector<int> classes;

  bool contains(int c) const;

  static RegionSpec whole_tumor();     // classes {1,2,3}
  static RegionSpec tumor_core();      // classes {1,3}
  static RegionSpec enhancing_core();  // class {3}
  static std::vector<RegionSpec> brats_regions();
};

// Dice overlap 2|A^B| / (|A|+|B|) after binarizing both maps by region
// membership. Both sets empty -> 1.0 (agreement that nothing is present);
// exactly one empty -> 0.0. Throws ShapeError on mismatched shapes.
double dice(const LabelMap& pred, const LabelMap& truth, const RegionSpec& region);

struct CaseDice {
  int volume_id = 0;
  std::vector<double> per_region;
  bool empty_truth = false;  // no region voxel in any requested region
};

struct DiceReport {
  std::vector<std::string> region_names;
  std::vector<CaseDice> cases;
  std::vector<double> region_means;  // unweighted mean over cases
  std::size_t empty_truth_cases = 0;
};

// One test case: the slices of a reconstructed volume plus its ground truth.
struct EvalCase {
  int volume_id = 0;
  std::vector<Tensor> slice_images;   // each [C,H,W], in slice order
  std::vector<LabelMap> slice_masks;  // each [H,W]
};

// Runs inference slice by slice, stacks the predictions back into a volume
// and scores it against the stacked truth, per region, then averages.
DiceReport evaluate_fold(Model& model, const std::vector<EvalCase>& cases,
                         const std::vector<RegionSpec>& regions);

DiceReport aggregate_report(const std::vector<std::string>& region_names,
                            std::vector<CaseDice> cases);

std::string report_to_text(const DiceReport& report);
std::string report_to_csv(const DiceReport& report);

// Inverse of report_to_csv (the mean row is recomputed, not trusted).
DiceReport parse_report_csv(const std::string& text);

// Side-by-side means and per-case deltas between two scenarios with matching
// fold structure (same cases, same regions).
struct Comparison {
  std::vector<std::string> region_names;
  std::vector<double> standard_means;
  std::vector<double> mixed_means;
  std::vector<double> deltas;  // mixed - standard
  std::string text;
  std::string csv;
};

Comparison compare_scenarios(const DiceReport& standard_report,
                             const DiceReport& mixed_report);

}  // namespace mixedseg

#endif  // MIXEDSEG_EVALUATION_HPP_
