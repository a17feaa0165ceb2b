/*
 * Copyright 2026 The dpfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef DPFED_DATASET_HPP_
#define DPFED_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dpfed/error.hpp"
#include "dpfed/random.hpp"

namespace dpfed {

// Labeled samples, features stored row-major.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::size_t n_features, std::size_t n_classes,
          std::vector<double> features, std::vector<int> labels)
      : n_features_(n_features),
        n_classes_(n_classes),
        features_(std::move(features)),
        labels_(std::move(labels)) {
    Require(n_features_ >= 1, "dataset needs at least one feature");
    Require(n_classes_ >= 1, "dataset needs at least one class");
    Require(features_.size() == labels_.size() * n_features_,
            "feature row count must equal label count");
    for (int label : labels_) {
      Require(label >= 0 && static_cast<std::size_t>(label) < n_classes_,
              "label out of range: " + std::to_string(label));
    }
  }

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t n_features() const { return n_features_; }
  std::size_t n_classes() const { return n_classes_; }

  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * n_features_, n_features_};
  }
  int label(std::size_t i) const { return labels_[i]; }

  const std::vector<double>& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  // Copy of the selected rows, in the given order.
  Dataset Subset(std::span<const std::size_t> rows) const {
    std::vector<double> f;
    std::vector<int> l;
    f.reserve(rows.size() * n_features_);
    l.reserve(rows.size());
    for (std::size_t r : rows) {
      Require(r < size(), "subset row out of range");
      auto x = row(r);
      f.insert(f.end(), x.begin(), x.end());
      l.push_back(labels_[r]);
    }
    return Dataset(n_features_, n_classes_, std::move(f), std::move(l));
  }

  static Dataset Concatenate(std::span<const Dataset> parts) {
    Require(!parts.empty(), "nothing to concatenate");
    std::vector<double> f;
    std::vector<int> l;
    for (const Dataset& part : parts) {
      Require(part.n_features() == parts[0].n_features() &&
                  part.n_classes() == parts[0].n_classes(),
              "concatenated datasets disagree on shape");
      f.insert(f.end(), part.features_.begin(), part.features_.end());
      l.insert(l.end(), part.labels_.begin(), part.labels_.end());
    }
    return Dataset(parts[0].n_features(), parts[0].n_classes(), std::move(f),
                   std::move(l));
  }

  double MaxRowNormSquared() const {
    double best = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double s = 0.0;
      for (double v : row(i)) s += v * v;
      best = std::max(best, s);
    }
    return best;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t n_features_ = 1;
  std::size_t n_classes_ = 1;
  std::vector<double> features_;
  std::vector<int> labels_;
};

/// Isotropic Gaussian blobs, one per class. Class centres are random
/// directions scaled to `class_separation`; labels cycle through the classes
/// and rows are shuffled, so classes are balanced to within one sample.
inline Dataset MakeSyntheticDataset(std::size_t n_samples, std::size_t n_features,
                                    std::size_t n_classes, double class_separation,
                                    std::uint64_t seed) {
  Require(n_samples > 0 && n_features > 0, "sample and feature counts must be positive");
  Require(n_classes >= 2, "synthetic dataset needs at least two classes");
  Require(class_separation >= 0.0 && std::isfinite(class_separation),
          "class separation must be finite and non-negative");
  Rng rng = MakeRng(seed, {0x5e7});
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> centres(n_classes * n_features);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double norm = 0.0;
    double* centre = centres.data() + c * n_features;
    do {
      norm = 0.0;
      for (std::size_t f = 0; f < n_features; ++f) {
        centre[f] = normal(rng);
        norm += centre[f] * centre[f];
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t f = 0; f < n_features; ++f) {
      centre[f] *= class_separation / norm;
    }
  }

  std::vector<int> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) labels[i] = static_cast<int>(i % n_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<double> features(n_samples * n_features);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double* centre = centres.data() + static_cast<std::size_t>(labels[i]) * n_features;
    for (std::size_t f = 0; f < n_features; ++f) {
      features[i * n_features + f] = centre[f] + normal(rng);
    }
  }
  return Dataset(n_features, n_classes, std::move(features), std::move(labels));
}

namespace internal {

inline std::vector<unsigned char> ReadWholeFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t ReadBigEndian32(const std::vector<unsigned char>& bytes,
                                     std::size_t offset, const std::string& path) {
  if (bytes.size() < offset + 4) {
    throw Error(ErrorCode::kIdxTruncated, "truncated IDX header in " + path);
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace internal

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Reads an IDX image/label file pair (MNIST layout). Pixels are scaled to
// [0, 1]; the class count is max label + 1 (at least 2).
inline Dataset LoadIdxDataset(const std::string& image_path, const std::string& label_path) {
  const auto images = internal::ReadWholeFile(image_path);
  const auto labels = internal::ReadWholeFile(label_path);

  if (images.size() < 4 || internal::ReadBigEndian32(images, 0, image_path) != kIdxImageMagic) {
    throw Error(ErrorCode::kIdxMagic, "bad IDX image magic number in " + image_path);
  }
  if (labels.size() < 4 || internal::ReadBigEndian32(labels, 0, label_path) != kIdxLabelMagic) {
    throw Error(ErrorCode::kIdxMagic, "bad IDX label magic number in " + label_path);
  }
  const std::size_t n_images = internal::ReadBigEndian32(images, 4, image_path);
  const std::size_t rows = internal::ReadBigEndian32(images, 8, image_path);
  const std::size_t cols = internal::ReadBigEndian32(images, 12, image_path);
  const std::size_t n_labels = internal::ReadBigEndian32(labels, 4, label_path);
  Require(rows * cols > 0, "IDX images have zero pixels", ErrorCode::kIdxMagic);

  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + n_images * pixels) {
    throw Error(ErrorCode::kIdxTruncated, "truncated IDX image payload in " + image_path);
  }
  if (labels.size() < 8 + n_labels) {
    throw Error(ErrorCode::kIdxTruncated, "truncated IDX label payload in " + label_path);
  }
  if (n_images != n_labels) {
    throw Error(ErrorCode::kIdxCountMismatch,
                "IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                    std::to_string(n_labels) + " labels");
  }

  std::vector<double> features(n_images * pixels);
  for (std::size_t i = 0; i < features.size(); ++i) {
    features[i] = static_cast<double>(images[16 + i]) / 255.0;
  }
  std::vector<int> out_labels(n_labels);
  int max_label = 1;
  for (std::size_t i = 0; i < n_labels; ++i) {
    out_labels[i] = labels[8 + i];
    max_label = std::max(max_label, out_labels[i]);
  }
  return Dataset(pixels, static_cast<std::size_t>(max_label) + 1, std::move(features),
                 std::move(out_labels));
}

namespace internal {

inline std::string FormatDouble(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace internal

// Columnar CSV with header f0,...,f{k-1},label.
inline void WriteCsv(const Dataset& data, std::ostream& out) {
  for (std::size_t f = 0; f < data.n_features(); ++f) out << 'f' << f << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out << internal::FormatDouble(v) << ',';
    out << data.label(i) << '\n';
  }
}

// `n_classes` of zero infers max label + 1.
inline Dataset ReadCsv(std::istream& in, std::size_t n_classes = 0) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kCsvFormat, "empty CSV");
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  Require(columns >= 2, "CSV needs at least one feature column", ErrorCode::kCsvFormat);
  if (line.rfind("f0", 0) != 0 || line.substr(line.size() - 5) != "label") {
    throw Error(ErrorCode::kCsvFormat, "unexpected CSV header: " + line);
  }
  const std::size_t n_features = columns - 1;
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(row, cell, ',')) {
      try {
        if (col < n_features) {
          features.push_back(std::stod(cell));
        } else {
          labels.push_back(std::stoi(cell));
        }
      } catch (const std::exception&) {
        throw Error(ErrorCode::kCsvFormat, "bad CSV cell on line " + std::to_string(line_no));
      }
      ++col;
    }
    if (col != columns) {
      throw Error(ErrorCode::kCsvFormat, "wrong column count on line " + std::to_string(line_no));
    }
  }
  int max_label = 1;
  for (int l : labels) max_label = std::max(max_label, l);
  if (n_classes == 0) n_classes = static_cast<std::size_t>(max_label) + 1;
  return Dataset(n_features, n_classes, std::move(features), std::move(labels));
}

struct ClientPartition {
  std::vector<Dataset> client_datasets;

  std::size_t num_clients() const { return client_datasets.size(); }
  std::vector<std::size_t> client_sizes() const {
    std::vector<std::size_t> sizes;
    for (const Dataset& d : client_datasets) sizes.push_back(d.size());
    return sizes;
  }
  std::size_t total_size() const {
    std::size_t total = 0;
    for (const Dataset& d : client_datasets) total += d.size();
    return total;
  }
  Dataset Pooled() const { return Dataset::Concatenate(client_datasets); }
};

struct PartitionOptions {
  // Truncate every client to the smallest client size.
  bool equal_sizes = true;
};

/// Non-iid shard split: every client holds samples of exactly
/// `classes_per_client` classes. Classes are assigned cyclically over a
/// seeded class permutation, so each class is split into the same number of
/// shards (give or take one when n_classes does not divide N * k).
inline ClientPartition PartitionNonIid(const Dataset& data, std::size_t num_clients,
                                       std::size_t classes_per_client, std::uint64_t seed,
                                       PartitionOptions options = {}) {
  const std::size_t n_classes = data.n_classes();
  if (num_clients < 1 || classes_per_client < 1 || classes_per_client > n_classes) {
    throw Error(ErrorCode::kInfeasiblePartition,
                "cannot give " + std::to_string(num_clients) + " clients " +
                    std::to_string(classes_per_client) + " of " + std::to_string(n_classes) +
                    " classes each");
  }
  Rng rng = MakeRng(seed, {0x9a7});

  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[static_cast<std::size_t>(data.label(i))].push_back(i);
  }
  for (auto& rows : by_class) std::shuffle(rows.begin(), rows.end(), rng);

  std::vector<std::size_t> class_order(n_classes);
  std::iota(class_order.begin(), class_order.end(), std::size_t{0});
  std::shuffle(class_order.begin(), class_order.end(), rng);

  // slot s = client * k + j holds class_order[s mod n_classes]
  const std::size_t slots = num_clients * classes_per_client;
  std::vector<std::size_t> shards_of_class(n_classes, 0);
  for (std::size_t s = 0; s < slots; ++s) ++shards_of_class[class_order[s % n_classes]];

  std::vector<std::size_t> next_shard(n_classes, 0);
  std::vector<std::vector<std::size_t>> client_rows(num_clients);
  for (std::size_t s = 0; s < slots; ++s) {
    const std::size_t c = class_order[s % n_classes];
    const std::size_t pool = by_class[c].size();
    const std::size_t shard = pool / shards_of_class[c];
    if (shard == 0) {
      throw Error(ErrorCode::kInfeasiblePartition,
                  "class " + std::to_string(c) + " has too few samples for " +
                      std::to_string(shards_of_class[c]) + " shards");
    }
    const std::size_t k = next_shard[c]++;
    // the last shard of a class absorbs the remainder
    const std::size_t begin = k * shard;
    const std::size_t end = (k + 1 == shards_of_class[c]) ? pool : begin + shard;
    auto& rows = client_rows[s / classes_per_client];
    rows.insert(rows.end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(begin),
                by_class[c].begin() + static_cast<std::ptrdiff_t>(end));
  }

  std::size_t smallest = data.size();
  for (auto& rows : client_rows) {
    std::shuffle(rows.begin(), rows.end(), rng);
    smallest = std::min(smallest, rows.size());
  }

  ClientPartition out;
  for (auto& rows : client_rows) {
    if (options.equal_sizes) rows.resize(smallest);
    out.client_datasets.push_back(data.Subset(rows));
  }
  return out;
}

// Keeps the first ceil(fraction * d_i) samples of each client after a
// seeded shuffle.
inline ClientPartition SubsampleClients(const ClientPartition& partition, double fraction,
                                        std::uint64_t seed) {
  Require(fraction > 0.0 && fraction <= 1.0, "data fraction must lie in (0, 1]");
  ClientPartition out;
  for (std::size_t i = 0; i < partition.num_clients(); ++i) {
    const Dataset& client = partition.client_datasets[i];
    std::vector<std::size_t> rows(client.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Rng rng = MakeRng(seed, {0xf7ac, i});
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(client.size()) - 1e-9));
    rows.resize(std::max<std::size_t>(1, std::min(keep, rows.size())));
    out.client_datasets.push_back(client.Subset(rows));
  }
  return out;
}

}  // namespace dpfed

#endif  // DPFED_DATASET_HPP_
