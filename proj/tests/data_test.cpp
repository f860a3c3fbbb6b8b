#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "bayeshead/data.hpp"

using namespace bayeshead;
namespace fs = std::filesystem;

namespace {

class DataFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("bayeshead_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& body) {
    const auto p = dir_ / name;
    std::ofstream(p, std::ios::binary) << body;
    return p;
  }

  ErrorKind kind_of(const std::function<void()>& f, std::string* message = nullptr) {
    try {
      f();
    } catch (const Error& e) {
      if (message) *message = e.what();
      return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::invalid_input;
  }

  fs::path dir_;
};

FeatureDataset labelled(const std::vector<int>& counts) {
  FeatureDataset d;
  d.n_classes = counts.size();
  std::size_t total = 0;
  for (int c : counts) total += static_cast<std::size_t>(c);
  d.features = Matrix(total, 1);
  std::size_t row = 0;
  for (std::size_t k = 0; k < counts.size(); ++k)
    for (int i = 0; i < counts[k]; ++i, ++row) {
      d.features(row, 0) = static_cast<double>(row);
      d.labels.push_back(static_cast<int>(k));
      d.ids.push_back("r" + std::to_string(row));
    }
  return d;
}

std::set<std::string> id_set(const FeatureDataset& d) { return {d.ids.begin(), d.ids.end()}; }

}  // namespace

TEST_F(DataFiles, LoadsSmallFile) {
  const auto p = write("small.csv", "id,label,f0,f1\na,0,1.5,2\nb,1,-3,4e-1\nc,0,0,0\n");
  const auto d = load_csv(p);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_EQ(d.ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(d.features(1, 1), 0.4);
  EXPECT_EQ(d.n_classes, 2u);
  EXPECT_EQ(d.name, "small");
}

TEST_F(DataFiles, CrlfAndCommentsAndRowIndexIds) {
  const auto p = write("crlf.csv", "# produced elsewhere\r\nlabel,x,y\r\n1,1,2\r\n\r\n0,3,4\r\n");
  const auto d = load_csv(p);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.ids, (std::vector<std::string>{"0", "1"}));
  EXPECT_EQ(d.features(1, 0), 3.0);
  EXPECT_EQ(d.features(1, 1), 4.0);
}

TEST_F(DataFiles, SidecarSchemaSelectsColumnsAndNamesClasses) {
  const auto p = write("named.csv", "name,diagnosis,a,b,c\nx,suspicious,1,2,3\ny,normal,4,5,6\n");
  write("named.csv.schema",
        "id_column=name\nlabel_column=diagnosis\nfeature_columns=c,a\nclasses=normal,suspicious\n");
  const auto d = load_csv(p);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_EQ(d.features(0, 0), 3.0);
  EXPECT_EQ(d.features(0, 1), 1.0);
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(d.ids, (std::vector<std::string>{"x", "y"}));
}

TEST_F(DataFiles, Errors) {
  std::string msg;
  EXPECT_EQ(kind_of([&] { load_csv(dir_ / "absent.csv"); }, &msg), ErrorKind::io);
  EXPECT_NE(msg.find("absent.csv"), std::string::npos);

  const auto empty = write("empty.csv", "id,label,f0\n");
  EXPECT_EQ(kind_of([&] { load_csv(empty); }), ErrorKind::parse);

  const auto text = write("text.csv", "id,label,f0\na,0,1\nb,1,oops\n");
  EXPECT_EQ(kind_of([&] { load_csv(text); }, &msg), ErrorKind::parse);
  EXPECT_NE(msg.find("row 2"), std::string::npos);
  EXPECT_NE(msg.find("oops"), std::string::npos);

  const auto ragged = write("ragged.csv", "id,label,f0,f1\na,0,1,2\nb,1,3\n");
  EXPECT_EQ(kind_of([&] { load_csv(ragged); }, &msg), ErrorKind::parse);
  EXPECT_NE(msg.find("row 2"), std::string::npos);

  const auto nan = write("nan.csv", "id,label,f0\na,0,nan\n");
  EXPECT_EQ(kind_of([&] { load_csv(nan); }), ErrorKind::parse);

  const auto bad_label = write("label.csv", "id,label,f0\na,cat,1\n");
  EXPECT_EQ(kind_of([&] { load_csv(bad_label); }), ErrorKind::schema);

  const auto named = write("named.csv", "id,label,f0\na,dog,1\n");
  write("named.csv.schema", "classes=cat,bird\n");
  EXPECT_EQ(kind_of([&] { load_csv(named); }, &msg), ErrorKind::schema);
  EXPECT_NE(msg.find("dog"), std::string::npos);

  const auto no_label = write("nolabel.csv", "id,class,f0\na,0,1\n");
  EXPECT_EQ(kind_of([&] { load_csv(no_label); }), ErrorKind::schema);
}

TEST_F(DataFiles, WriteThenLoadIsIdentity) {
  auto d = synth_blobs(25, {{0.1, -3.0, 1e-7}, {2.0, 1.0 / 3.0, -5.5}}, 0.7, 3);
  const auto p = dir_ / "roundtrip.csv";
  write_csv(p, d, {"seed=3", "source=unit test"});
  const auto back = load_csv(p);
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.ids, d.ids);
  const auto p2 = dir_ / "again.csv";
  write_csv(p2, back);
  const auto again = load_csv(p2);
  EXPECT_EQ(again.features, d.features);
}

TEST(Balance, PaperCounts) {
  const auto d = labelled({551, 290});
  const auto b = balance_downsample(d, 1);
  EXPECT_EQ(b.class_counts(), (std::vector<std::size_t>{290, 290}));
  for (const auto& id : b.ids) EXPECT_TRUE(id_set(d).count(id));
  EXPECT_EQ(id_set(b).size(), b.size());
  const auto again = balance_downsample(d, 1);
  EXPECT_EQ(again.ids, b.ids);
  EXPECT_NE(balance_downsample(d, 2).ids, b.ids);
}

TEST(Balance, BalancedInputIsPermuted) {
  const auto d = labelled({30, 30, 30});
  const auto b = balance_downsample(d, 4);
  EXPECT_EQ(b.class_counts(), d.class_counts());
  EXPECT_EQ(id_set(b), id_set(d));
}

TEST(Balance, CountsEqualMinimumAcrossShapes) {
  for (const auto& counts : std::vector<std::vector<int>>{{5, 9}, {12, 3, 7}, {1, 1}, {40, 2, 2, 9}}) {
    const auto b = balance_downsample(labelled(counts), 8);
    const auto m = static_cast<std::size_t>(*std::min_element(counts.begin(), counts.end()));
    for (auto c : b.class_counts()) EXPECT_EQ(c, m);
  }
}

TEST(Balance, EmptyClassIsInvalid) {
  auto d = labelled({4, 4});
  d.n_classes = 3;
  try {
    balance_downsample(d, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
}

TEST(Split, StratifiedEightyTwenty) {
  const auto d = labelled({50, 50});
  const auto s = split(d, 0.8, 0.2, 3);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.test.size(), 20u);
  EXPECT_EQ(s.train.class_counts(), (std::vector<std::size_t>{40, 40}));
  EXPECT_EQ(s.test.class_counts(), (std::vector<std::size_t>{10, 10}));
  EXPECT_TRUE(s.warnings.empty());
  const auto again = split(d, 0.8, 0.2, 3);
  EXPECT_EQ(again.train.ids, s.train.ids);
  EXPECT_EQ(again.test.ids, s.test.ids);
}

TEST(Split, AllTrainWarns) {
  const auto d = labelled({10, 10});
  const auto s = split(d, 1.0, 0.0, 3);
  EXPECT_EQ(s.train.size(), 20u);
  EXPECT_TRUE(s.test.empty());
  EXPECT_EQ(s.warnings.size(), 2u);
}

TEST(Split, DisjointAndCovering) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = labelled({17, 33, 8});
    const auto s = split(d, 0.7, 0.3, seed);
    auto all = id_set(s.train);
    for (const auto& id : s.test.ids) EXPECT_TRUE(all.insert(id).second) << id;
    EXPECT_EQ(all, id_set(d));
  }
}

TEST(Split, FractionsMustSumToOne) {
  const auto d = labelled({10, 10});
  EXPECT_THROW(split(d, 0.8, 0.3, 0), Error);
  EXPECT_THROW(split(d, -0.1, 1.1, 0), Error);
  EXPECT_NO_THROW(split(d, 0.8, 0.2 + 1e-12, 0));
}

TEST(Split, FixedTestCount) {
  const auto d = labelled({290, 290});
  const auto s = split_fixed_test_count(d, 50, 0);
  EXPECT_EQ(s.test.class_counts(), (std::vector<std::size_t>{50, 50}));
  EXPECT_EQ(s.train.class_counts(), (std::vector<std::size_t>{240, 240}));
  EXPECT_THROW(split_fixed_test_count(labelled({10, 3}), 5, 0), Error);
}

TEST(SynthBlobs, ShapeAndLabels) {
  const auto d = synth_blobs(100, {{-2, 0}, {2, 0}}, 1.0, 0);
  EXPECT_EQ(d.size(), 200u);
  EXPECT_EQ(d.class_counts(), (std::vector<std::size_t>{100, 100}));
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_EQ(synth_blobs(100, {{-2, 0}, {2, 0}}, 1.0, 0).features, d.features);
}

TEST(SynthBlobs, TinySpreadSitsOnMeans) {
  const std::vector<std::vector<double>> means{{1, 2, 3}, {-4, 0, 0.5}};
  const auto d = synth_blobs(50, means, 1e-9, 9);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_NEAR(d.features(i, j), means[static_cast<std::size_t>(d.labels[i])][j], 1e-6);
}

TEST(SynthBlobs, LinearRuleApproachesBayesRate) {
  const auto d = synth_blobs(20000, {{-2, 0}, {2, 0}}, 1.0, 12);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) ok += (d.features(i, 0) > 0) == (d.labels[i] == 1);
  const double bayes = 0.5 * std::erfc(-2.0 / std::sqrt(2.0));
  EXPECT_NEAR(bayes, 0.9772, 1e-4);
  EXPECT_NEAR(static_cast<double>(ok) / d.size(), bayes, 0.004);
}

TEST(SynthBlobs, InvalidArguments) {
  EXPECT_THROW(synth_blobs(10, {{0, 0}}, 1.0, 0), Error);
  EXPECT_THROW(synth_blobs(10, {{0, 0}, {1, 1}}, 0.0, 0), Error);
  EXPECT_THROW(synth_blobs(10, {{0, 0}, {1}}, 1.0, 0), Error);
}

TEST(SynthShift, ZeroConfigIsIdentity) {
  const auto d = synth_blobs(40, {{-2, 0}, {2, 0}}, 1.0, 1);
  const auto s = synth_shift(d, {}, 5);
  EXPECT_EQ(s.features, d.features);
  EXPECT_EQ(s.labels, d.labels);
  EXPECT_EQ(s.ids, d.ids);
}

TEST(SynthShift, NoiseVariance) {
  FeatureDataset zero;
  zero.n_classes = 2;
  zero.features = Matrix(2500, 4);
  for (std::size_t i = 0; i < 2500; ++i) {
    zero.labels.push_back(static_cast<int>(i % 2));
    zero.ids.push_back(std::to_string(i));
  }
  const auto s = synth_shift(zero, {0.5, 0.0, std::nullopt}, 2);
  double sum = 0.0, sq = 0.0;
  for (double v : s.features.data()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(s.features.data().size());
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 0.25, 0.02);
  EXPECT_EQ(s.labels, zero.labels);
}

TEST(SynthShift, RotateThenOffset) {
  FeatureDataset d;
  d.n_classes = 2;
  d.features = Matrix(2, 3, {1, 0, 7, 0, 2, -1});
  d.labels = {0, 1};
  d.ids = {"a", "b"};
  const auto s = synth_shift(d, {0.0, std::numbers::pi / 2, std::vector<double>{0, 6, 0}}, 0);
  EXPECT_NEAR(s.features(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(s.features(0, 1), 7.0, 1e-15);
  EXPECT_EQ(s.features(0, 2), 7.0);
  EXPECT_NEAR(s.features(1, 0), -2.0, 1e-15);
  EXPECT_NEAR(s.features(1, 1), 6.0, 1e-15);
  EXPECT_EQ(s.features(1, 2), -1.0);
  EXPECT_EQ(s.labels, d.labels);
}

TEST(SynthShift, InvalidConfig) {
  const auto d = synth_blobs(5, {{0, 0}, {1, 1}}, 1.0, 0);
  EXPECT_THROW(synth_shift(d, {-1.0, 0.0, std::nullopt}, 0), Error);
  EXPECT_THROW(synth_shift(d, {0.0, std::nan(""), std::nullopt}, 0), Error);
  EXPECT_THROW(synth_shift(d, {0.0, 0.0, std::vector<double>{1.0}}, 0), Error);
}
