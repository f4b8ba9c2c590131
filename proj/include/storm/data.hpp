#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "storm/model.hpp"
#include "storm/rng.hpp"

namespace storm {

// Sparse feature vector: sorted (index, value) pairs.
using SparseVec = std::vector<std::pair<int, double>>;

struct SampleRecord {
  int id{0};
  SparseVec features;
  int noisy_label{0};
  int clean_label{0};  // evaluation only; training code paths never read it
};

struct Dataset {
  int num_classes{0};
  int feature_dim{0};
  std::vector<SampleRecord> samples;
  std::vector<std::string> class_names;      // dense index -> original label
  std::vector<std::string> texts;            // present until vectorization
  std::optional<std::vector<bool>> noise_mask;
  std::string provenance;

  int size() const { return static_cast<int>(samples.size()); }
  int class_index(const std::string& name) const;
};

// What the trainer is allowed to see: noisy labels only.
struct TrainSample {
  int id{0};
  const SparseVec* x{nullptr};
  int label{0};
};

struct TrainView {
  int feature_dim{0};
  int num_classes{0};
  std::vector<TrainSample> samples;
  int size() const { return static_cast<int>(samples.size()); }
};

TrainView make_train_view(const Dataset& d, const std::vector<int>& indices);

// Dense batch of the view rows listed in `rows`.
Batch make_batch(const TrainView& view, const std::vector<int>& rows);

// ---------------------------------------------------------------------------
// loading

enum class FileFormat { DelimitedText, LineJson };

struct LoadSchema {
  FileFormat format{FileFormat::DelimitedText};
  char delimiter{'\t'};
  bool has_header{false};
  // Delimited text: column indices, or header names when has_header.
  std::string label_column{"0"};
  std::string text_column{"1"};
  // Line-JSON: field names; `features_field` selects a numeric array instead
  // of text.
  std::string label_field{"label"};
  std::string text_field{"text"};
  std::string features_field;
  // Optional sidecar matrix (stormmat container) supplying features by row.
  std::string features_file;
};

Dataset load_dataset(const std::string& path, const LoadSchema& schema);

// ---------------------------------------------------------------------------
// TF-IDF

struct TfidfVocab {
  std::vector<std::string> terms;          // index -> term
  std::map<std::string, int> index;        // term -> index
  std::vector<double> idf;                 // per term
  int doc_count{0};
};

std::vector<std::string> tokenize(const std::string& text);

// Fits on the given documents: tf = count / doc length,
// idf = ln((1+N)/(1+df)) + 1, vectors L2-normalized.
TfidfVocab tfidf_fit(const std::vector<std::string>& docs, int max_features = 0);
SparseVec tfidf_transform(const TfidfVocab& vocab, const std::string& doc);

// Vectorizes a text dataset in place: fits on the train indices only, then
// transforms every sample with the frozen vocabulary.
TfidfVocab tfidf_vectorize(Dataset& d, const std::vector<int>& train_indices,
                           int max_features = 0);

// ---------------------------------------------------------------------------
// noise and splits

// Flips exactly round(rate * |train_indices|) labels among the given train
// indices, each to a uniformly drawn different class. Fills the noise mask
// (false for untouched samples).
void inject_uniform_noise(Dataset& d, const std::vector<int>& train_indices, double rate,
                          RngStream& rng);

struct Splits {
  std::vector<int> train, val, test;
};

Splits make_splits(int n, double train_frac, double val_frac, double test_frac, RngStream& rng);

// Two disjoint halves; fold k trains on half k and evaluates on the other.
std::vector<Splits> make_cv2_splits(int n, double val_frac_within_train, RngStream& rng);

// ---------------------------------------------------------------------------
// synthetic data

struct SyntheticConfig {
  int num_classes{2};
  int dim{20};
  int train{1000};
  int val{300};
  int test{500};
  double separation{3.0};  // distance scale between class means
  std::vector<double> class_weights;  // empty = balanced
};

struct SyntheticData {
  Dataset dataset;
  Splits splits;
};

SyntheticData make_gaussian_blobs(const SyntheticConfig& cfg, RngStream& rng);

// ---------------------------------------------------------------------------
// binary matrix container ("stormmat")

void write_stormmat(const std::string& path, int rows, int cols,
                    const std::vector<double>& row_major);
void read_stormmat(const std::string& path, int& rows, int& cols, std::vector<double>& row_major);

std::uint64_t fnv1a_file_hash(const std::string& path);

}  // namespace storm
