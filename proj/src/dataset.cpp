#include "derm/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "derm/error.hpp"

namespace derm {

std::optional<int> map_label(const std::string& token) {
  if (token == "1" || token == "mel" || token == "bcc" || token == "akiec") return 1;
  if (token == "0" || token == "nv" || token == "bkl" || token == "vasc" || token == "df") return 0;
  return std::nullopt;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

LabeledDataset load_manifest(const std::string& manifest_path, const std::string& image_root) {
  std::ifstream f(manifest_path);
  if (!f) throw IoError("cannot open manifest: " + manifest_path);
  LabeledDataset ds;
  ds.image_root = image_root;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (line_no == 1) {
      if (t != "image_path,label")
        throw IoError("manifest " + manifest_path + ": expected header 'image_path,label', got '" +
                      t + "'");
      continue;
    }
    const auto comma = t.rfind(',');
    if (comma == std::string::npos)
      throw IoError("manifest " + manifest_path + " row " + std::to_string(line_no) +
                    ": missing comma");
    ManifestEntry e;
    e.image_path = trim(t.substr(0, comma));
    e.raw_label = trim(t.substr(comma + 1));
    const auto label = map_label(e.raw_label);
    if (!label)
      throw ConfigError("manifest " + manifest_path + " row " + std::to_string(line_no) +
                        ": unknown label code '" + e.raw_label + "'");
    e.label = *label;
    const auto full = std::filesystem::path(image_root) / e.image_path;
    if (!std::filesystem::exists(full))
      throw IoError("manifest " + manifest_path + " row " + std::to_string(line_no) +
                    ": missing image file " + full.string());
    ds.entries.push_back(std::move(e));
  }
  if (ds.entries.empty()) throw IoError("manifest " + manifest_path + ": no samples");
  return ds;
}

void load_images(LabeledDataset& ds) {
  ds.images.clear();
  ds.images.reserve(ds.entries.size());
  for (const auto& e : ds.entries)
    ds.images.push_back(read_ppm_file((std::filesystem::path(ds.image_root) / e.image_path).string()));
}

DatasetSplits stratified_split(const LabeledDataset& ds, const SplitRatios& ratios,
                               std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("stratified_split: ratios must sum to 1, got " + std::to_string(sum));
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    throw ConfigError("stratified_split: ratios must be nonnegative");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) by_class[ds.entries[i].label].push_back(i);

  DatasetSplits splits;
  const double r[3] = {ratios.train, ratios.val, ratios.test};
  for (auto& [label, indices] : by_class) {
    if (indices.size() < 3)
      throw ConfigError("stratified_split: class " + std::to_string(label) + " has only " +
                        std::to_string(indices.size()) + " samples, need at least 3");
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(indices);

    // Largest-remainder rounding of the per-split counts.
    const std::size_t n = indices.size();
    std::size_t counts[3];
    double fracs[3];
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = r[s] * static_cast<double>(n);
      counts[s] = static_cast<std::size_t>(exact);
      fracs[s] = exact - static_cast<double>(counts[s]);
      assigned += counts[s];
    }
    while (assigned < n) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (fracs[s] > fracs[best]) best = s;
      counts[best]++;
      fracs[best] = -1.0;
      ++assigned;
    }

    std::size_t pos = 0;
    std::vector<std::size_t>* dests[3] = {&splits.train, &splits.val, &splits.test};
    for (int s = 0; s < 3; ++s)
      for (std::size_t i = 0; i < counts[s]; ++i) dests[s]->push_back(indices[pos++]);
  }
  std::sort(splits.train.begin(), splits.train.end());
  std::sort(splits.val.begin(), splits.val.end());
  std::sort(splits.test.begin(), splits.test.end());
  return splits;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch,
                                                   bool shuffle) {
  if (batch_size == 0) throw ConfigError("make_batches: batch_size must be >= 1");
  if (n == 0) throw ConfigError("make_batches: empty split");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) {
    Rng rng(mix_seed(seed, epoch, 0x6a7c));
    rng.shuffle(order);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    const std::size_t end = std::min(n, i + batch_size);
    batches.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
  }
  return batches;
}

void write_manifest(const std::string& path, const LabeledDataset& ds,
                    const std::vector<std::size_t>& indices) {
  std::ostringstream os;
  os << "image_path,label\n";
  for (auto i : indices) os << ds.entries[i].image_path << "," << ds.entries[i].raw_label << "\n";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  f << os.str();
  if (!f) throw IoError("short write on manifest: " + path);
}

}  // namespace derm
