#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "salstab/data.hpp"

using namespace salstab;

namespace {

void put_be32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxFixture {
  std::filesystem::path images;
  std::filesystem::path labels;

  IdxFixture(std::uint32_t image_magic = 0x00000803,
             std::uint32_t label_magic = 0x00000801) {
    auto dir = std::filesystem::temp_directory_path();
    images = dir / "salstab_images.idx";
    labels = dir / "salstab_labels.idx";
    {
      std::ofstream f(images, std::ios::binary);
      put_be32(f, image_magic);
      put_be32(f, 2);  // two images
      put_be32(f, 2);  // 2 x 2
      put_be32(f, 2);
      unsigned char px[8] = {0, 51, 102, 255, 255, 204, 153, 0};
      f.write(reinterpret_cast<const char*>(px), 8);
    }
    {
      std::ofstream f(labels, std::ios::binary);
      put_be32(f, label_magic);
      put_be32(f, 2);
      unsigned char lab[2] = {1, 0};
      f.write(reinterpret_cast<const char*>(lab), 2);
    }
  }
  ~IdxFixture() {
    std::filesystem::remove(images);
    std::filesystem::remove(labels);
  }
};

}  // namespace

TEST_CASE("load_idx parses big-endian headers and scales pixels") {
  IdxFixture fx;
  auto d = load_idx(fx.images.string(), fx.labels.string());
  CHECK(d.size() == 2);
  CHECK(d.dim() == 4);
  CHECK(d.num_classes == 2);
  REQUIRE(d.grid.has_value());
  CHECK(d.grid->first == 2);
  CHECK(d.grid->second == 2);
  CHECK(d.features(0, 0) == 0.0);
  CHECK(d.features(0, 1) == doctest::Approx(51.0 / 255.0));
  CHECK(d.features(0, 3) == 1.0);
  CHECK(d.features(1, 0) == 1.0);
  CHECK(d.labels == std::vector<int>{1, 0});
  CHECK(d.x_min == 0.0);
  CHECK(d.x_max == 1.0);
  CHECK(d.norm_cap > 0.0);
  d.validate();
}

TEST_CASE("load_idx rejects bad magics and truncation") {
  {
    IdxFixture fx(0xdeadbeef, 0x00000801);
    CHECK_THROWS(load_idx(fx.images.string(), fx.labels.string()));
  }
  {
    IdxFixture fx(0x00000803, 0xdeadbeef);
    CHECK_THROWS(load_idx(fx.images.string(), fx.labels.string()));
  }
  {
    IdxFixture fx;
    std::filesystem::resize_file(fx.images, 12);  // cut into the header
    CHECK_THROWS(load_idx(fx.images.string(), fx.labels.string()));
  }
  CHECK_THROWS(load_idx("/nonexistent/img", "/nonexistent/lab"));
}

TEST_CASE("csv round trip preserves features and labels") {
  auto d = synth_blobs(25, 4, 3, 2.0, 5);
  auto path = std::filesystem::temp_directory_path() / "salstab_data.csv";
  write_csv(d, path.string(), "target");
  auto back = load_csv(path.string(), "target");
  CHECK(back.size() == d.size());
  CHECK(back.dim() == d.dim());
  CHECK(back.num_classes == d.num_classes);
  CHECK(back.labels == d.labels);
  CHECK((back.features - d.features).cwiseAbs().maxCoeff() < 1e-12);
  std::filesystem::remove(path);
}

TEST_CASE("load_csv errors carry line numbers") {
  auto path = std::filesystem::temp_directory_path() / "salstab_bad.csv";
  {
    std::ofstream f(path);
    f << "a,b,label\n1.0,2.0,0\n3.0,0\n";  // ragged third line
  }
  try {
    load_csv(path.string(), "label");
    FAIL("expected a parse error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  {
    std::ofstream f(path);
    f << "a,b,label\n1.0,zebra,0\n";
  }
  CHECK_THROWS(load_csv(path.string(), "label"));
  {
    std::ofstream f(path);
    f << "a,b,other\n1.0,2.0,0\n";
  }
  CHECK_THROWS(load_csv(path.string(), "label"));  // missing label column
  std::filesystem::remove(path);
}

TEST_CASE("synth_blobs is deterministic and well-formed") {
  auto a = synth_blobs(200, 6, 3, 4.0, 11);
  auto b = synth_blobs(200, 6, 3, 4.0, 11);
  CHECK((a.features.array() == b.features.array()).all());
  CHECK(a.labels == b.labels);
  auto c = synth_blobs(200, 6, 3, 4.0, 12);
  CHECK_FALSE((a.features.array() == c.features.array()).all());

  CHECK(a.size() == 200);
  CHECK(a.dim() == 6);
  CHECK(a.num_classes == 3);
  for (int lab : a.labels) {
    CHECK(lab >= 0);
    CHECK(lab < 3);
  }
  a.validate();
  CHECK_THROWS(synth_blobs(10, 3, 1, 2.0, 1));
}

TEST_CASE("synth_blobs class means sit near the separation sphere") {
  const int n = 4000, m = 8, classes = 2;
  const double sep = 4.0;
  auto d = synth_blobs(n, m, classes, sep, 3);
  std::vector<Eigen::VectorXd> mean(classes, Eigen::VectorXd::Zero(m));
  std::vector<int> count(classes, 0);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    mean[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])] +=
        d.features.row(i).transpose();
    ++count[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])];
  }
  for (int cl = 0; cl < classes; ++cl) {
    mean[static_cast<std::size_t>(cl)] /= count[static_cast<std::size_t>(cl)];
    // empirical mean norm ~ sep with error O(sqrt(m / n_cl))
    CHECK(mean[static_cast<std::size_t>(cl)].norm() ==
          doctest::Approx(sep).epsilon(0.1));
  }
  CHECK((mean[0] - mean[1]).norm() > 1.0);  // distinct directions
}

TEST_CASE("normalize projects onto the ball and is idempotent") {
  auto d = synth_blobs(100, 5, 2, 5.0, 21);
  const double cap = 2.0;
  auto n1 = normalize(d, cap);
  for (Eigen::Index i = 0; i < n1.size(); ++i)
    CHECK(n1.features.row(i).norm() <= cap * (1 + 1e-9));
  CHECK(n1.norm_cap == cap);
  CHECK(n1.labels == d.labels);

  // a second pass may rescale rows whose norm sits a few ulps above the cap
  auto n2 = normalize(n1, cap);
  CHECK((n2.features - n1.features).cwiseAbs().maxCoeff() < 1e-14);

  // ranges recomputed
  CHECK(n1.x_max <= d.x_max + 1e-12);
  CHECK(n1.x_min >= d.x_min - 1e-12);
  n1.validate();

  CHECK_THROWS(normalize(d, 0.0));
}

TEST_CASE("dataset validation catches inconsistencies") {
  auto d = synth_blobs(10, 3, 2, 2.0, 31);
  d.labels[0] = 7;
  CHECK_THROWS(d.validate());
  d.labels[0] = -1;
  CHECK_THROWS(d.validate());
  d = synth_blobs(10, 4, 2, 2.0, 31);
  d.grid = {2, 3};  // 6 != 4
  CHECK_THROWS(d.validate());
  d.grid = {2, 2};
  CHECK_NOTHROW(d.validate());
}
