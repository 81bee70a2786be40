#include "mixedseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace mixedseg {

bool RegionSpec::contains(int c) const {
  return std::find(classes.begin(), classes.end(), c) != classes.end();
}

RegionSpec RegionSpec::whole_tumor() { return {"whole_tumor", {1, 2, 3}}; }
RegionSpec RegionSpec::tumor_core() { return {"tumor_core", {1, 3}}; }
RegionSpec RegionSpec::enhancing_core() { return {"enhancing_core", {3}}; }

std::vector<RegionSpec> RegionSpec::brats_regions() {
  return {whole_tumor(), tumor_core(), enhancing_core()};
}

double dice(const LabelMap& pred, const LabelMap& truth, const RegionSpec& region) {
  if (pred.dims != truth.dims) {
    throw ShapeError("dice: shape mismatch " + shape_str(pred.dims) + " vs " +
                     shape_str(truth.dims));
  }
  bool in_region[256] = {false};
  for (int c : region.classes) {
    if (c >= 0 && c < 256) in_region[c] = true;
  }
  std::size_t inter = 0, pred_count = 0, truth_count = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = in_region[pred.labels[i]];
    const bool t = in_region[truth.labels[i]];
    pred_count += p;
    truth_count += t;
    inter += p && t;
  }
  if (pred_count + truth_count == 0) return 1.0;  // both agree nothing is present
  return 2.0 * double(inter) / double(pred_count + truth_count);
}

DiceReport aggregate_report(const std::vector<std::string>& region_names,
                            std::vector<CaseDice> cases) {
  DiceReport report;
  report.region_names = region_names;
  report.cases = std::move(cases);
  report.region_means.assign(region_names.size(), 0.0);
  for (const CaseDice& c : report.cases) {
    if (c.per_region.size() != region_names.size()) {
      throw ShapeError("case dice width does not match region list");
    }
    for (std::size_t r = 0; r < region_names.size(); ++r) {
      report.region_means[r] += c.per_region[r];
    }
    if (c.empty_truth) ++report.empty_truth_cases;
  }
  if (!report.cases.empty()) {
    for (double& m : report.region_means) m /= double(report.cases.size());
  }
  return report;
}

DiceReport evaluate_fold(Model& model, const std::vector<EvalCase>& cases,
                         const std::vector<RegionSpec>& regions) {
  std::vector<std::string> names;
  for (const RegionSpec& r : regions) names.push_back(r.name);

  std::vector<CaseDice> rows;
  for (const EvalCase& cs : cases) {
    if (cs.slice_images.empty() || cs.slice_images.size() != cs.slice_masks.size()) {
      throw DataError("evaluation case " + std::to_string(cs.volume_id) +
                      " is missing slices or masks");
    }
    const std::size_t d = cs.slice_images.size();
    const Shape hw = cs.slice_masks[0].dims;
    LabelMap pred = LabelMap::zeros({d, hw[0], hw[1]});
    LabelMap truth = LabelMap::zeros({d, hw[0], hw[1]});
    const std::size_t plane = hw[0] * hw[1];
    for (std::size_t z = 0; z < d; ++z) {
      LabelMap slice_pred = predict_mask(model, cs.slice_images[z]);
      if (slice_pred.dims != hw || cs.slice_masks[z].dims != hw) {
        throw ShapeError("prediction/mask dims differ across slices");
      }
      std::copy_n(slice_pred.labels.begin(), plane, pred.labels.begin() + z * plane);
      std::copy_n(cs.slice_masks[z].labels.begin(), plane,
                  truth.labels.begin() + z * plane);
    }
    CaseDice row;
    row.volume_id = cs.volume_id;
    bool any_truth = false;
    for (const RegionSpec& region : regions) {
      row.per_region.push_back(dice(pred, truth, region));
      for (std::size_t i = 0; i < truth.labels.size() && !any_truth; ++i) {
        any_truth = region.contains(truth.labels[i]);
      }
    }
    row.empty_truth = !any_truth;
    rows.push_back(std::move(row));
  }
  return aggregate_report(names, std::move(rows));
}

namespace {

std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v * 100.0;  // 0-100 scale in tables
  return os.str();
}

}  // namespace

std::string report_to_text(const DiceReport& report) {
  std::ostringstream os;
  os << "case";
  for (const auto& n : report.region_names) os << "  " << n;
  os << "\n";
  for (const CaseDice& c : report.cases) {
    os << c.volume_id;
    for (double v : c.per_region) os << "  " << fixed2(v);
    os << "\n";
  }
  os << "mean";
  for (double v : report.region_means) os << "  " << fixed2(v);
  os << "\n";
  os << "cases: " << report.cases.size()
     << ", empty-truth cases: " << report.empty_truth_cases << "\n";
  return os.str();
}

std::string report_to_csv(const DiceReport& report) {
  std::ostringstream os;
  os << "volume_id";
  for (const auto& n : report.region_names) os << "," << n;
  os << "\n";
  os.precision(17);
  for (const CaseDice& c : report.cases) {
    os << c.volume_id;
    for (double v : c.per_region) os << "," << v;
    os << "\n";
  }
  os << "mean";
  for (double v : report.region_means) os << "," << v;
  os << "\n";
  return os.str();
}

DiceReport parse_report_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("volume_id", 0) != 0) {
    throw DataError("not a dice report CSV");
  }
  std::vector<std::string> names;
  {
    std::istringstream hs(line);
    std::string field;
    std::getline(hs, field, ',');  // volume_id
    while (std::getline(hs, field, ',')) names.push_back(field);
  }
  std::vector<CaseDice> cases;
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("mean", 0) == 0) continue;
    std::istringstream ls(line);
    std::string field;
    CaseDice c;
    std::getline(ls, field, ',');
    c.volume_id = std::stoi(field);
    while (std::getline(ls, field, ',')) c.per_region.push_back(std::stod(field));
    if (c.per_region.size() != names.size()) {
      throw DataError("report row width does not match the header");
    }
    cases.push_back(std::move(c));
  }
  return aggregate_report(names, std::move(cases));
}

Comparison compare_scenarios(const DiceReport& standard_report,
                             const DiceReport& mixed_report) {
  if (standard_report.region_names != mixed_report.region_names ||
      standard_report.cases.size() != mixed_report.cases.size()) {
    throw DataError("compare_scenarios: reports have mismatched fold structure");
  }
  for (std::size_t i = 0; i < standard_report.cases.size(); ++i) {
    if (standard_report.cases[i].volume_id != mixed_report.cases[i].volume_id) {
      throw DataError("compare_scenarios: case order differs between reports");
    }
  }
  Comparison cmp;
  cmp.region_names = standard_report.region_names;
  cmp.standard_means = standard_report.region_means;
  cmp.mixed_means = mixed_report.region_means;
  for (std::size_t r = 0; r < cmp.region_names.size(); ++r) {
    cmp.deltas.push_back(cmp.mixed_means[r] - cmp.standard_means[r]);
  }

  std::ostringstream text;
  text << "method";
  for (const auto& n : cmp.region_names) text << "  " << n;
  text << "\n";
  text << "standard";
  for (double v : cmp.standard_means) text << "  " << fixed2(v);
  text << "\nmixed   ";
  for (double v : cmp.mixed_means) text << "  " << fixed2(v);
  text << "\ndelta   ";
  for (double v : cmp.deltas) text << "  " << fixed2(v);
  text << "\n";
  cmp.text = text.str();

  std::ostringstream csv;
  csv.precision(17);
  csv << "region,standard_mean,mixed_mean,delta\n";
  for (std::size_t r = 0; r < cmp.region_names.size(); ++r) {
    csv << cmp.region_names[r] << "," << cmp.standard_means[r] << ","
        << cmp.mixed_means[r] << "," << cmp.deltas[r] << "\n";
  }
  cmp.csv = csv.str();
  return cmp;
}

}  // namespace mixedseg
