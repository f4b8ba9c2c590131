#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "storm/data.hpp"

using namespace storm;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

double sparse_l2(const SparseVec& v) {
  double s = 0.0;
  for (const auto& [i, x] : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("delimited loader maps labels in first-appearance order") {
  auto path = write_temp("storm_two_rows.tsv", "spam\tbuy now\nham\thello there\n");
  LoadSchema schema;
  schema.delimiter = '\t';
  schema.label_column = "0";
  schema.text_column = "1";
  Dataset d = load_dataset(path.string(), schema);
  CHECK(d.num_classes == 2);
  CHECK(d.class_names == std::vector<std::string>{"spam", "ham"});
  CHECK(d.samples[0].noisy_label == 0);
  CHECK(d.samples[1].noisy_label == 1);
  CHECK(d.samples[0].clean_label == 0);
  CHECK(!d.noise_mask.has_value());
  std::filesystem::remove(path);
}

TEST_CASE("empty file is an error") {
  auto path = write_temp("storm_empty.tsv", "");
  LoadSchema schema;
  CHECK_THROWS_WITH_AS((void)load_dataset(path.string(), schema),
                       doctest::Contains("no samples"), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("row with missing label reports the line number") {
  auto path = write_temp("storm_missing_label.tsv", "spam\tok\n\thello\nham\tx\n");
  LoadSchema schema;
  bool threw = false;
  try {
    (void)load_dataset(path.string(), schema);
  } catch (const std::invalid_argument& e) {
    threw = true;
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK(threw);
  std::filesystem::remove(path);
}

TEST_CASE("single-class dataset is rejected") {
  auto path = write_temp("storm_single_class.tsv", "ham\ta\nham\tb\n");
  LoadSchema schema;
  CHECK_THROWS_WITH_AS((void)load_dataset(path.string(), schema),
                       doctest::Contains("single-class"), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("csv quoting and header resolution") {
  auto path = write_temp("storm_header.csv",
                         "CONTENT,CLASS\n\"hello, world\",0\nplain text,1\n");
  LoadSchema schema;
  schema.delimiter = ',';
  schema.has_header = true;
  schema.label_column = "CLASS";
  schema.text_column = "CONTENT";
  Dataset d = load_dataset(path.string(), schema);
  REQUIRE(d.size() == 2);
  CHECK(d.texts[0] == "hello, world");
  CHECK(d.class_names == std::vector<std::string>{"0", "1"});
  std::filesystem::remove(path);
}

TEST_CASE("line-json loader with text and label fields") {
  auto path = write_temp("storm_rows.jsonl",
                         R"({"text":"win money","label":"spam"})"
                         "\n"
                         R"({"text":"see you soon","label":"ham"})"
                         "\n");
  LoadSchema schema;
  schema.format = FileFormat::LineJson;
  Dataset d = load_dataset(path.string(), schema);
  CHECK(d.size() == 2);
  CHECK(d.texts[0] == "win money");
  CHECK(d.class_names[0] == "spam");
  std::filesystem::remove(path);
}

TEST_CASE("line-json loader with embedded feature vectors") {
  auto path = write_temp("storm_feats.jsonl",
                         R"({"features":[0.5,0.0,1.0],"label":"a"})"
                         "\n"
                         R"({"features":[0.0,2.0,0.0],"label":"b"})"
                         "\n");
  LoadSchema schema;
  schema.format = FileFormat::LineJson;
  schema.features_field = "features";
  Dataset d = load_dataset(path.string(), schema);
  CHECK(d.feature_dim == 3);
  REQUIRE(d.samples[0].features.size() == 2);  // zeros stored sparsely
  CHECK(d.samples[0].features[0] == std::pair<int, double>{0, 0.5});
  CHECK(d.samples[1].features[0] == std::pair<int, double>{1, 2.0});
  std::filesystem::remove(path);
}

TEST_CASE("tfidf idf formula: corpus {\"a b\", \"a\"}") {
  TfidfVocab v = tfidf_fit({"a b", "a"});
  REQUIRE(v.terms.size() == 2);
  const int ia = v.index.at("a"), ib = v.index.at("b");
  CHECK(v.idf[static_cast<std::size_t>(ia)] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.idf[static_cast<std::size_t>(ib)] ==
        doctest::Approx(std::log(3.0 / 2.0) + 1.0).epsilon(1e-12));
  CHECK(v.idf[static_cast<std::size_t>(ib)] == doctest::Approx(1.40546).epsilon(1e-4));
}

TEST_CASE("tfidf vectors are unit length; identical one-word docs") {
  TfidfVocab v = tfidf_fit({"word", "word"});
  SparseVec t = tfidf_transform(v, "word");
  REQUIRE(t.size() == 1);
  CHECK(t[0].second == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tfidf out-of-vocabulary document maps to the zero vector") {
  TfidfVocab v = tfidf_fit({"alpha beta", "beta gamma"});
  SparseVec t = tfidf_transform(v, "delta epsilon");
  CHECK(t.empty());
}

TEST_CASE("tfidf transform is a pure function of the frozen vocabulary") {
  TfidfVocab v = tfidf_fit({"spam offer now", "hello friend", "offer now now"});
  SparseVec a = tfidf_transform(v, "offer now hello");
  SparseVec b = tfidf_transform(v, "offer now hello");
  CHECK(a == b);
  CHECK(std::abs(sparse_l2(a) - 1.0) < 1e-12);
}

TEST_CASE("tfidf tokenizer lowercases and splits on non-alphanumerics") {
  auto toks = tokenize("Hello, WORLD!! x1-y2");
  CHECK(toks == std::vector<std::string>{"hello", "world", "x1", "y2"});
}

TEST_CASE("noise injection: exact counts and changed labels") {
  RngStream rng(5);
  SyntheticConfig sc;
  sc.train = 1000;
  sc.val = 10;
  sc.test = 10;
  sc.dim = 3;
  SyntheticData s = make_gaussian_blobs(sc, rng);
  Dataset& d = s.dataset;

  RngStream noise_rng(7);
  inject_uniform_noise(d, s.splits.train, 0.3, noise_rng);
  REQUIRE(d.noise_mask.has_value());
  int flips = 0;
  for (int i : s.splits.train) {
    const auto& rec = d.samples[static_cast<std::size_t>(i)];
    if ((*d.noise_mask)[static_cast<std::size_t>(i)]) {
      ++flips;
      CHECK(rec.noisy_label != rec.clean_label);
    } else {
      CHECK(rec.noisy_label == rec.clean_label);
    }
  }
  CHECK(flips == 300);
  // Validation and test untouched.
  for (int i : s.splits.val) CHECK(!(*d.noise_mask)[static_cast<std::size_t>(i)]);
  for (int i : s.splits.test) CHECK(!(*d.noise_mask)[static_cast<std::size_t>(i)]);
}

TEST_CASE("noise rate 0 leaves the dataset unchanged") {
  RngStream rng(5);
  SyntheticConfig sc;
  sc.train = 50;
  sc.val = 10;
  sc.test = 10;
  SyntheticData s = make_gaussian_blobs(sc, rng);
  RngStream noise_rng(7);
  inject_uniform_noise(s.dataset, s.splits.train, 0.0, noise_rng);
  for (const auto& rec : s.dataset.samples) CHECK(rec.noisy_label == rec.clean_label);
  for (bool b : *s.dataset.noise_mask) CHECK(!b);
}

TEST_CASE("noise rate 0.5 with two classes forces the other class") {
  RngStream rng(5);
  SyntheticConfig sc;
  sc.train = 10;
  sc.val = 5;
  sc.test = 5;
  SyntheticData s = make_gaussian_blobs(sc, rng);
  RngStream noise_rng(11);
  inject_uniform_noise(s.dataset, s.splits.train, 0.5, noise_rng);
  int flips = 0;
  for (int i : s.splits.train) {
    const auto& rec = s.dataset.samples[static_cast<std::size_t>(i)];
    if ((*s.dataset.noise_mask)[static_cast<std::size_t>(i)]) {
      ++flips;
      CHECK(rec.noisy_label == 1 - rec.clean_label);
    }
  }
  CHECK(flips == 5);
  RngStream bad(1);
  CHECK_THROWS((void)inject_uniform_noise(s.dataset, s.splits.train, 0.7, bad));
}

TEST_CASE("splits: sizes, disjointness, determinism") {
  RngStream r1(33), r2(33);
  Splits a = make_splits(100, 0.8, 0.1, 0.1, r1);
  Splits b = make_splits(100, 0.8, 0.1, 0.1, r2);
  CHECK(a.train.size() == 80);
  CHECK(a.val.size() == 10);
  CHECK(a.test.size() == 10);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  std::vector<bool> seen(100, false);
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (int i : *part) {
      CHECK(!seen[static_cast<std::size_t>(i)]);
      seen[static_cast<std::size_t>(i)] = true;
    }
  for (bool s : seen) CHECK(s);
  RngStream r3(1);
  CHECK_THROWS((void)make_splits(100, 0.5, 0.2, 0.2, r3));  // fractions must sum to 1
}

TEST_CASE("2-fold splits partition the data") {
  RngStream rng(9);
  auto folds = make_cv2_splits(10, 0.2, rng);
  REQUIRE(folds.size() == 2);
  CHECK(folds[0].test.size() == 5);
  CHECK(folds[1].test.size() == 5);
  std::vector<int> all = folds[0].test;
  all.insert(all.end(), folds[1].test.begin(), folds[1].test.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("synthetic generator: balanced classes, stable ids") {
  RngStream rng(17);
  SyntheticConfig sc;
  sc.train = 400;
  sc.val = 100;
  sc.test = 100;
  sc.dim = 5;
  SyntheticData s = make_gaussian_blobs(sc, rng);
  CHECK(s.dataset.size() == 600);
  CHECK(s.dataset.feature_dim == 5);
  int c0 = 0;
  for (const auto& rec : s.dataset.samples) c0 += rec.clean_label == 0 ? 1 : 0;
  CHECK(c0 > 200);
  CHECK(c0 < 400);
  for (int i = 0; i < 600; ++i) CHECK(s.dataset.samples[static_cast<std::size_t>(i)].id == i);
}

TEST_CASE("stormmat container round trip") {
  auto path = std::filesystem::temp_directory_path() / "storm_test.stormmat";
  std::vector<double> m = {1.0, -2.5, 0.0, 3.25, 1e-17, 42.0};
  write_stormmat(path.string(), 2, 3, m);
  int rows = 0, cols = 0;
  std::vector<double> r;
  read_stormmat(path.string(), rows, cols, r);
  CHECK(rows == 2);
  CHECK(cols == 3);
  CHECK(r == m);
  std::filesystem::remove(path);
}

TEST_CASE("make_batch produces a dense row-major matrix") {
  Dataset d;
  d.num_classes = 2;
  d.feature_dim = 4;
  SampleRecord a;
  a.id = 0;
  a.features = {{1, 2.0}, {3, -1.0}};
  a.noisy_label = 1;
  SampleRecord b;
  b.id = 1;
  b.features = {{0, 0.5}};
  b.noisy_label = 0;
  d.samples = {a, b};
  TrainView v = make_train_view(d, {0, 1});
  Batch batch = make_batch(v, {1, 0});
  CHECK(batch.features.at(0, 0) == 0.5);
  CHECK(batch.features.at(1, 1) == 2.0);
  CHECK(batch.features.at(1, 3) == -1.0);
  CHECK(batch.labels == std::vector<int>{0, 1});
  CHECK(batch.ids == std::vector<int>{1, 0});
}

}  // TEST_SUITE
