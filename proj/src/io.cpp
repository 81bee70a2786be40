#include "mixedseg/io.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "container formats are little-endian; big-endian hosts need swaps");

namespace mixedseg {

namespace {

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(p), std::streamsize(n));
  if (!is) throw DataError(std::string("truncated file while reading ") + what);
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v;
  read_bytes(is, &v, sizeof(T), what);
  return v;
}

}  // namespace

void write_msvd(const std::filesystem::path& path, const Tensor& data,
                const LabelMap* mask, bool as_f32) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write("MSVD", 4);
  write_pod<std::uint32_t>(os, 1);
  write_pod<std::uint8_t>(os, as_f32 ? 0 : 1);
  write_pod<std::uint8_t>(os, mask ? 1 : 0);
  write_pod<std::uint8_t>(os, std::uint8_t(data.ndim()));
  write_pod<std::uint8_t>(os, mask ? std::uint8_t(mask->dims.size()) : 0);
  for (std::size_t d : data.shape()) write_pod<std::uint64_t>(os, d);
  if (as_f32) {
    for (Real v : data.values()) write_pod<float>(os, float(v));
  } else {
    for (Real v : data.values()) write_pod<double>(os, double(v));
  }
  if (mask) {
    for (std::size_t d : mask->dims) write_pod<std::uint64_t>(os, d);
    write_bytes(os, mask->labels.data(), mask->labels.size());
  }
  if (!os) throw DataError("failed writing " + path.string());
}

MsvdContent read_msvd(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[4];
  read_bytes(is, magic, 4, "magic");
  if (std::string(magic, 4) != "MSVD") {
    throw DataError(path.string() + " is not an MSVD container");
  }
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != 1) throw DataError("unsupported MSVD version");
  const auto dtype = read_pod<std::uint8_t>(is, "dtype");
  const auto has_mask = read_pod<std::uint8_t>(is, "has_mask");
  const auto ndim = read_pod<std::uint8_t>(is, "ndim");
  const auto mask_ndim = read_pod<std::uint8_t>(is, "mask_ndim");
  Shape dims(ndim);
  for (auto& d : dims) d = std::size_t(read_pod<std::uint64_t>(is, "dims"));
  std::vector<Real> values(shape_numel(dims));
  if (dtype == 0) {
    for (Real& v : values) v = Real(read_pod<float>(is, "payload"));
  } else if (dtype == 1) {
    for (Real& v : values) v = Real(read_pod<double>(is, "payload"));
  } else {
    throw DataError("unknown MSVD dtype tag");
  }
  MsvdContent out;
  out.stored_f32 = dtype == 0;
  out.data = Tensor(std::move(dims), std::move(values));
  if (has_mask) {
    Shape mdims(mask_ndim);
    for (auto& d : mdims) d = std::size_t(read_pod<std::uint64_t>(is, "mask dims"));
    std::vector<std::uint8_t> labels(shape_numel(mdims));
    read_bytes(is, labels.data(), labels.size(), "mask payload");
    out.mask = LabelMap(std::move(mdims), std::move(labels));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<SliceRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "volume_id,slice_index,data_path,annotation,subclass_presence\n";
  for (const SliceRecord& r : records) {
    if (r.data_path.find(',') != std::string::npos ||
        r.data_path.find('\n') != std::string::npos) {
      throw DataError("data_path may not contain commas or newlines: " + r.data_path);
    }
    os << r.volume_id << ',' << r.slice_index << ',' << r.data_path << ','
       << annotation_name(r.annotation) << ',';
    for (bool b : r.subclass_presence) os << (b ? '1' : '0');
    os << '\n';
  }
  if (!os) throw DataError("failed writing " + path.string());
}

std::vector<SliceRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) ||
      line != "volume_id,slice_index,data_path,annotation,subclass_presence") {
    throw DataError(path.string() + " is not a dataset manifest");
  }
  std::vector<SliceRecord> records;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    SliceRecord r;
    auto next = [&](const char* what) {
      if (!std::getline(ls, field, ',')) {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": missing field " + what);
      }
      return field;
    };
    r.volume_id = std::stoi(next("volume_id"));
    r.slice_index = std::stoi(next("slice_index"));
    r.data_path = next("data_path");
    r.annotation = annotation_from_name(next("annotation"));
    const std::string presence = next("subclass_presence");
    for (char c : presence) {
      if (c != '0' && c != '1') {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": presence flags must be 0/1");
      }
      r.subclass_presence.push_back(c == '1');
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_fold_plans(const std::filesystem::path& path,
                      const std::vector<FoldPlan>& plans, const std::string& meta_json) {
  nlohmann::json doc;
  doc["meta"] = nlohmann::json::parse(meta_json);
  nlohmann::json folds = nlohmann::json::array();
  for (const FoldPlan& p : plans) {
    nlohmann::json f;
    f["fold_id"] = p.fold_id;
    f["test_ids"] = p.test_ids;
    f["fa_ids"] = p.fa_ids;
    f["wa_ids"] = p.wa_ids;
    folds.push_back(std::move(f));
  }
  doc["folds"] = std::move(folds);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << doc.dump(2) << "\n";
}

std::vector<FoldPlan> read_fold_plans(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<FoldPlan> plans;
  for (const auto& f : doc.at("folds")) {
    FoldPlan p;
    p.fold_id = f.at("fold_id").get<int>();
    p.test_ids = f.at("test_ids").get<std::vector<int>>();
    p.fa_ids = f.at("fa_ids").get<std::vector<int>>();
    p.wa_ids = f.at("wa_ids").get<std::vector<int>>();
    plans.push_back(std::move(p));
  }
  return plans;
}

Tensor FileSliceSource::image(const SliceRecord& record) {
  return read_msvd(root_ / record.data_path).data;
}

LabelMap FileSliceSource::mask(const SliceRecord& record) {
  auto content = read_msvd(root_ / record.data_path);
  if (!content.mask.has_value()) {
    throw DataError("slice " + record.data_path + " carries no mask");
  }
  return std::move(*content.mask);
}

void MemorySliceSource::add(const SliceRecord& record, SliceData data) {
  slices_[key(record)] = std::move(data);
}

Tensor MemorySliceSource::image(const SliceRecord& record) {
  auto it = slices_.find(key(record));
  if (it == slices_.end()) {
    throw DataError("no stored slice for volume " + std::to_string(record.volume_id) +
                    " index " + std::to_string(record.slice_index));
  }
  return it->second.image;
}

LabelMap MemorySliceSource::mask(const SliceRecord& record) {
  auto it = slices_.find(key(record));
  if (it == slices_.end() || !it->second.mask.has_value()) {
    throw DataError("no stored mask for volume " + std::to_string(record.volume_id) +
                    " index " + std::to_string(record.slice_index));
  }
  return *it->second.mask;
}

}  // namespace mixedseg
