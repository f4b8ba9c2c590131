#include "storm/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace storm {

using graph::Shape;
using graph::Tensor;

int Dataset::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("unknown class label: " + name);
}

TrainView make_train_view(const Dataset& d, const std::vector<int>& indices) {
  TrainView v;
  v.feature_dim = d.feature_dim;
  v.num_classes = d.num_classes;
  v.samples.reserve(indices.size());
  for (int i : indices) {
    const auto& s = d.samples[static_cast<std::size_t>(i)];
    v.samples.push_back({s.id, &s.features, s.noisy_label});
  }
  return v;
}

Batch make_batch(const TrainView& view, const std::vector<int>& rows) {
  if (rows.empty()) throw std::invalid_argument("make_batch: empty row list");
  const int B = static_cast<int>(rows.size());
  std::vector<double> dense(static_cast<std::size_t>(B) * view.feature_dim, 0.0);
  Batch batch;
  batch.labels.reserve(rows.size());
  batch.ids.reserve(rows.size());
  for (int r = 0; r < B; ++r) {
    const auto& s = view.samples[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])];
    for (const auto& [j, val] : *s.x)
      dense[static_cast<std::size_t>(r) * view.feature_dim + j] = val;
    batch.labels.push_back(s.label);
    batch.ids.push_back(s.id);
  }
  batch.features = Tensor::constant(Shape::mat(B, view.feature_dim), std::move(dense));
  return batch;
}

// ---------------------------------------------------------------------------
// loading

namespace {

// RFC-4180 style field splitting with a configurable delimiter.
std::vector<std::string> split_delimited(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

int resolve_column(const std::string& spec, const std::vector<std::string>& header,
                   const std::string& role) {
  if (!spec.empty() && std::all_of(spec.begin(), spec.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c));
      }))
    return std::stoi(spec);
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == spec) return static_cast<int>(i);
  throw std::invalid_argument("missing " + role + " column: " + spec);
}

int intern_label(Dataset& d, const std::string& label) {
  for (std::size_t i = 0; i < d.class_names.size(); ++i)
    if (d.class_names[i] == label) return static_cast<int>(i);
  d.class_names.push_back(label);
  return static_cast<int>(d.class_names.size()) - 1;
}

void load_delimited_file(const std::string& path, const LoadSchema& schema, Dataset& d) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset file: " + path);
  std::string line;
  int line_no = 0;
  int label_col = -1, text_col = -1;
  std::vector<std::string> header;
  if (schema.has_header) {
    if (!std::getline(in, line)) return;
    ++line_no;
    header = split_delimited(strip_cr(line), schema.delimiter);
  }
  label_col = resolve_column(schema.label_column, header, "label");
  text_col = resolve_column(schema.text_column, header, "text");
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_delimited(line, schema.delimiter);
    const int needed = std::max(label_col, text_col);
    if (static_cast<int>(fields.size()) <= needed)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": row has too few fields");
    const std::string& label = fields[static_cast<std::size_t>(label_col)];
    if (label.empty())
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": missing label");
    SampleRecord rec;
    rec.id = static_cast<int>(d.samples.size());
    rec.noisy_label = rec.clean_label = intern_label(d, label);
    d.samples.push_back(rec);
    d.texts.push_back(fields[static_cast<std::size_t>(text_col)]);
  }
}

Dataset load_delimited(const std::string& path, const LoadSchema& schema) {
  Dataset d;
  if (std::filesystem::is_directory(path)) {
    // A directory stands for a multi-file corpus; files are merged in name
    // order so sample ids stay stable.
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::invalid_argument(path + ": no samples");
    for (const auto& f : files) load_delimited_file(f.string(), schema, d);
  } else {
    load_delimited_file(path, schema, d);
  }
  return d;
}

Dataset load_line_json(const std::string& path, const LoadSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset file: " + path);
  Dataset d;
  std::string line;
  int line_no = 0;
  int id = 0;
  const bool with_features = !schema.features_field.empty();
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": unparseable row: " + e.what());
    }
    if (!j.contains(schema.label_field))
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": missing label field '" +
                                  schema.label_field + "'");
    std::string label = j[schema.label_field].is_string()
                            ? j[schema.label_field].get<std::string>()
                            : j[schema.label_field].dump();
    SampleRecord rec;
    rec.id = id++;
    rec.noisy_label = rec.clean_label = intern_label(d, label);
    if (with_features) {
      if (!j.contains(schema.features_field))
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": missing features field '" + schema.features_field + "'");
      const auto& arr = j[schema.features_field];
      if (!arr.is_array())
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": features field is not an array");
      int k = 0;
      for (const auto& v : arr) {
        const double x = v.get<double>();
        if (x != 0.0) rec.features.emplace_back(k, x);
        ++k;
      }
      if (d.feature_dim == 0)
        d.feature_dim = k;
      else if (d.feature_dim != k)
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": inconsistent feature dimension");
      d.texts.emplace_back();
    } else {
      if (!j.contains(schema.text_field))
        throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": missing text field '" +
                                    schema.text_field + "'");
      d.texts.push_back(j[schema.text_field].get<std::string>());
    }
    d.samples.push_back(std::move(rec));
  }
  return d;
}

void attach_features_file(Dataset& d, const std::string& path) {
  int rows = 0, cols = 0;
  std::vector<double> m;
  read_stormmat(path, rows, cols, m);
  if (rows != d.size())
    throw std::invalid_argument("features file row count (" + std::to_string(rows) +
                                ") does not match sample count (" + std::to_string(d.size()) + ")");
  d.feature_dim = cols;
  for (int i = 0; i < rows; ++i) {
    auto& rec = d.samples[static_cast<std::size_t>(i)];
    rec.features.clear();
    for (int j = 0; j < cols; ++j) {
      const double v = m[static_cast<std::size_t>(i) * cols + j];
      if (v != 0.0) rec.features.emplace_back(j, v);
    }
  }
  d.texts.assign(d.samples.size(), "");
}

}  // namespace

Dataset load_dataset(const std::string& path, const LoadSchema& schema) {
  Dataset d = schema.format == FileFormat::DelimitedText ? load_delimited(path, schema)
                                                         : load_line_json(path, schema);
  if (d.samples.empty()) throw std::invalid_argument(path + ": no samples");
  d.num_classes = static_cast<int>(d.class_names.size());
  if (d.num_classes < 2) throw std::invalid_argument(path + ": single-class dataset");
  if (!schema.features_file.empty()) attach_features_file(d, schema.features_file);
  std::uint64_t hash = 0;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) hash = hash * 0x100000001b3ULL ^ fnv1a_file_hash(f.string());
  } else {
    hash = fnv1a_file_hash(path);
  }
  std::ostringstream prov;
  prov << path << "#" << std::hex << hash;
  d.provenance = prov.str();
  return d;
}

// ---------------------------------------------------------------------------
// TF-IDF

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

TfidfVocab tfidf_fit(const std::vector<std::string>& docs, int max_features) {
  if (docs.empty()) throw std::invalid_argument("tfidf_fit: empty corpus");
  TfidfVocab v;
  v.doc_count = static_cast<int>(docs.size());
  std::vector<int> df;  // by first-appearance index
  for (const auto& doc : docs) {
    std::vector<int> seen_here;
    for (const auto& tok : tokenize(doc)) {
      auto it = v.index.find(tok);
      int idx;
      if (it == v.index.end()) {
        idx = static_cast<int>(v.terms.size());
        v.index.emplace(tok, idx);
        v.terms.push_back(tok);
        df.push_back(0);
      } else {
        idx = it->second;
      }
      if (std::find(seen_here.begin(), seen_here.end(), idx) == seen_here.end())
        seen_here.push_back(idx);
    }
    for (int idx : seen_here) ++df[static_cast<std::size_t>(idx)];
  }
  if (v.terms.empty()) throw std::invalid_argument("tfidf_fit: empty vocabulary after tokenization");

  if (max_features > 0 && static_cast<int>(v.terms.size()) > max_features) {
    // Keep the most frequent terms; ties resolved by first appearance.
    std::vector<int> order(v.terms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return df[static_cast<std::size_t>(a)] > df[static_cast<std::size_t>(b)]; });
    order.resize(static_cast<std::size_t>(max_features));
    std::sort(order.begin(), order.end());  // preserve first-appearance numbering
    TfidfVocab pruned;
    pruned.doc_count = v.doc_count;
    std::vector<int> pruned_df;
    for (int old_idx : order) {
      pruned.index.emplace(v.terms[static_cast<std::size_t>(old_idx)],
                           static_cast<int>(pruned.terms.size()));
      pruned.terms.push_back(v.terms[static_cast<std::size_t>(old_idx)]);
      pruned_df.push_back(df[static_cast<std::size_t>(old_idx)]);
    }
    v = std::move(pruned);
    df = std::move(pruned_df);
  }

  v.idf.resize(v.terms.size());
  const double n = static_cast<double>(v.doc_count);
  for (std::size_t i = 0; i < v.terms.size(); ++i)
    v.idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  return v;
}

SparseVec tfidf_transform(const TfidfVocab& vocab, const std::string& doc) {
  const auto tokens = tokenize(doc);
  std::map<int, int> counts;
  for (const auto& tok : tokens) {
    auto it = vocab.index.find(tok);
    if (it != vocab.index.end()) ++counts[it->second];
  }
  SparseVec out;
  if (tokens.empty() || counts.empty()) return out;
  const double len = static_cast<double>(tokens.size());
  double norm_sq = 0.0;
  for (const auto& [idx, cnt] : counts) {
    const double w = (static_cast<double>(cnt) / len) * vocab.idf[static_cast<std::size_t>(idx)];
    out.emplace_back(idx, w);
    norm_sq += w * w;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm > 0.0)
    for (auto& [idx, w] : out) w /= norm;
  return out;
}

TfidfVocab tfidf_vectorize(Dataset& d, const std::vector<int>& train_indices, int max_features) {
  std::vector<std::string> train_docs;
  train_docs.reserve(train_indices.size());
  for (int i : train_indices) train_docs.push_back(d.texts[static_cast<std::size_t>(i)]);
  TfidfVocab vocab = tfidf_fit(train_docs, max_features);
  for (std::size_t i = 0; i < d.samples.size(); ++i)
    d.samples[i].features = tfidf_transform(vocab, d.texts[i]);
  d.feature_dim = static_cast<int>(vocab.terms.size());
  return vocab;
}

// ---------------------------------------------------------------------------
// noise and splits

void inject_uniform_noise(Dataset& d, const std::vector<int>& train_indices, double rate,
                          RngStream& rng) {
  if (rate < 0.0 || rate > 0.5) throw std::invalid_argument("noise rate must be in [0, 0.5]");
  if (d.num_classes < 2) throw std::invalid_argument("noise injection needs >= 2 classes");
  if (!d.noise_mask) d.noise_mask = std::vector<bool>(d.samples.size(), false);
  const int n = static_cast<int>(train_indices.size());
  const int n_flip = static_cast<int>(std::llround(rate * n));
  std::vector<int> pool = train_indices;
  rng.shuffle(pool);
  for (int k = 0; k < n_flip; ++k) {
    auto& rec = d.samples[static_cast<std::size_t>(pool[static_cast<std::size_t>(k)])];
    const int offset = 1 + rng.uniform_int(d.num_classes - 1);
    rec.noisy_label = (rec.clean_label + offset) % d.num_classes;
    (*d.noise_mask)[static_cast<std::size_t>(pool[static_cast<std::size_t>(k)])] = true;
  }
}

Splits make_splits(int n, double train_frac, double val_frac, double test_frac, RngStream& rng) {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  rng.shuffle(idx);
  const int n_train = static_cast<int>(std::llround(train_frac * n));
  const int n_val = static_cast<int>(std::llround(val_frac * n));
  Splits s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  if (s.train.empty() || s.val.empty() || s.test.empty())
    throw std::invalid_argument("split produced an empty part");
  return s;
}

std::vector<Splits> make_cv2_splits(int n, double val_frac_within_train, RngStream& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  rng.shuffle(idx);
  const int half = n / 2;
  std::vector<int> a(idx.begin(), idx.begin() + half);
  std::vector<int> b(idx.begin() + half, idx.end());
  auto fold = [&](std::vector<int> train_pool, std::vector<int> eval_half) {
    Splits s;
    const int n_val = std::max(1, static_cast<int>(std::llround(
                                      val_frac_within_train * static_cast<double>(train_pool.size()))));
    s.val.assign(train_pool.end() - n_val, train_pool.end());
    s.train.assign(train_pool.begin(), train_pool.end() - n_val);
    s.test = std::move(eval_half);
    return s;
  };
  return {fold(a, b), fold(b, a)};
}

// ---------------------------------------------------------------------------
// synthetic data

SyntheticData make_gaussian_blobs(const SyntheticConfig& cfg, RngStream& rng) {
  if (cfg.num_classes < 2) throw std::invalid_argument("synthetic: need >= 2 classes");
  if (cfg.dim < 1) throw std::invalid_argument("synthetic: dim must be >= 1");
  std::vector<double> weights = cfg.class_weights;
  if (weights.empty()) weights.assign(static_cast<std::size_t>(cfg.num_classes), 1.0);
  if (static_cast<int>(weights.size()) != cfg.num_classes)
    throw std::invalid_argument("synthetic: class weight count mismatch");
  double wsum = 0.0;
  for (double w : weights) wsum += w;

  // Class means: separation along distinct axes (wrapping when C > dim).
  std::vector<std::vector<double>> means(static_cast<std::size_t>(cfg.num_classes),
                                         std::vector<double>(static_cast<std::size_t>(cfg.dim), 0.0));
  for (int c = 0; c < cfg.num_classes; ++c)
    means[static_cast<std::size_t>(c)][static_cast<std::size_t>(c % cfg.dim)] = cfg.separation;

  SyntheticData out;
  Dataset& d = out.dataset;
  d.num_classes = cfg.num_classes;
  d.feature_dim = cfg.dim;
  for (int c = 0; c < cfg.num_classes; ++c) d.class_names.push_back("class" + std::to_string(c));

  const int total = cfg.train + cfg.val + cfg.test;
  d.samples.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const double u = rng.uniform() * wsum;
    int c = 0;
    double acc = 0.0;
    for (int k = 0; k < cfg.num_classes; ++k) {
      acc += weights[static_cast<std::size_t>(k)];
      if (u < acc) {
        c = k;
        break;
      }
      c = k;
    }
    SampleRecord rec;
    rec.id = i;
    rec.noisy_label = rec.clean_label = c;
    rec.features.reserve(static_cast<std::size_t>(cfg.dim));
    for (int j = 0; j < cfg.dim; ++j) {
      const double v = means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] + rng.normal();
      rec.features.emplace_back(j, v);
    }
    d.samples.push_back(std::move(rec));
  }
  d.provenance = "synthetic-gaussian-blobs";

  for (int i = 0; i < cfg.train; ++i) out.splits.train.push_back(i);
  for (int i = 0; i < cfg.val; ++i) out.splits.val.push_back(cfg.train + i);
  for (int i = 0; i < cfg.test; ++i) out.splits.test.push_back(cfg.train + cfg.val + i);
  return out;
}

// ---------------------------------------------------------------------------
// stormmat container

namespace {
constexpr char kMagic[8] = {'S', 'T', 'O', 'R', 'M', 'M', 'A', 'T'};
}

void write_stormmat(const std::string& path, int rows, int cols,
                    const std::vector<double>& row_major) {
  if (static_cast<std::size_t>(rows) * cols != row_major.size())
    throw std::invalid_argument("stormmat: dims do not match data size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out.write(kMagic, 8);
  const std::uint32_t version = 1, r = static_cast<std::uint32_t>(rows),
                      c = static_cast<std::uint32_t>(cols);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&r), 4);
  out.write(reinterpret_cast<const char*>(&c), 4);
  out.write(reinterpret_cast<const char*>(row_major.data()),
            static_cast<std::streamsize>(row_major.size() * sizeof(double)));
}

void read_stormmat(const std::string& path, int& rows, int& cols,
                   std::vector<double>& row_major) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw std::invalid_argument(path + ": not a stormmat file");
  std::uint32_t version = 0, r = 0, c = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&r), 4);
  in.read(reinterpret_cast<char*>(&c), 4);
  if (version != 1) throw std::invalid_argument(path + ": unsupported stormmat version");
  rows = static_cast<int>(r);
  cols = static_cast<int>(c);
  row_major.resize(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(row_major.data()),
          static_cast<std::streamsize>(row_major.size() * sizeof(double)));
  if (!in) throw std::invalid_argument(path + ": truncated stormmat file");
}

std::uint64_t fnv1a_file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

}  // namespace storm
