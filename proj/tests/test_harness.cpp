#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "salstab/experiment.hpp"

using namespace salstab;

namespace {

const char* kSmokeToml = R"(
# smoke configuration
[dataset]
kind = "synth_blobs"
n = 240
m = 12
classes = 3
separation = 4.0
seed = 1
norm_cap = 6.0

[split]
n_splits = 2
split_size = 80
seed = 10007

[network]
hidden = [6]
activation = "tanh"
init_seed = 7

[train]
step_c = 0.05
iterations = 400
seed = 3

[saliency]
methods = ["simple_grad"]
sigma_ratios = [0.0, 0.1, 0.3]
n_samples = 10
seed = 99

[eval]
size = 32
seed = 123

[output]
dir = "out_test_harness"
)";

}  // namespace

TEST_CASE("toml subset parser") {
  auto doc = toml::Document::parse(R"(
top = 1
[table]
int = 42          # trailing comment
float = 2.5
neg = -3
flag = true
off = false
name = "hello # not a comment"
ints = [1, 2, 3]
floats = [0.5, 1.5]
names = ["a", "b"]
empty = []
)");
  CHECK(doc.get_int("top", 0) == 1);
  CHECK(doc.get_int("table.int", 0) == 42);
  CHECK(doc.get_double("table.float", 0) == 2.5);
  CHECK(doc.get_double("table.int", 0) == 42.0);  // int widens to double
  CHECK(doc.get_int("table.neg", 0) == -3);
  CHECK(doc.get_bool("table.flag", false));
  CHECK_FALSE(doc.get_bool("table.off", true));
  CHECK(doc.get_string("table.name", "") == "hello # not a comment");
  CHECK(doc.at("table.ints").as_int_array() ==
        std::vector<std::int64_t>{1, 2, 3});
  CHECK(doc.at("table.floats").as_double_array() ==
        std::vector<double>{0.5, 1.5});
  CHECK(doc.at("table.names").as_string_array() ==
        std::vector<std::string>{"a", "b"});
  CHECK(doc.at("table.ints").as_double_array() ==
        std::vector<double>{1.0, 2.0, 3.0});
  CHECK(doc.contains("table.flag"));
  CHECK_FALSE(doc.contains("table.missing"));
  CHECK(doc.get_int("table.missing", 9) == 9);
  CHECK_THROWS(doc.at("table.missing"));
  CHECK_THROWS(doc.at("table.name").as_int());
}

TEST_CASE("toml parse errors carry line numbers") {
  try {
    toml::Document::parse("a = 1\nb ~ 2\n");
    FAIL("expected parse error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  CHECK_THROWS(toml::Document::parse("x = \n"));
  CHECK_THROWS(toml::Document::parse("[broken\n"));
  CHECK_THROWS(toml::Document::parse("s = \"unterminated\n"));
}

TEST_CASE("experiment config parsing and defaults") {
  auto cfg = ExperimentConfig::from_toml(toml::Document::parse(kSmokeToml));
  CHECK(cfg.dataset_kind == "synth_blobs");
  CHECK(cfg.synth_n == 240);
  CHECK(cfg.split.n_splits == 2);
  CHECK(cfg.split.seed == 10007);
  CHECK(cfg.hidden == std::vector<Eigen::Index>{6});
  CHECK(cfg.train.iterations == 400);
  CHECK(cfg.sigma_ratios == std::vector<double>{0.0, 0.1, 0.3});
  CHECK(cfg.methods == std::vector<SaliencyMethod>{SaliencyMethod::kSimpleGrad});
  CHECK(cfg.eval_size == 32);
  // untouched keys keep defaults
  CHECK(cfg.ig_steps == 20);
  CHECK(cfg.common_random_numbers);
  CHECK(cfg.normalize_input == false);
}

TEST_CASE("experiment config validation names the offending field") {
  auto broken = [](const std::string& patch) {
    std::string text = std::string(kSmokeToml) + "\n" + patch + "\n";
    return toml::Document::parse(text);
  };
  try {
    ExperimentConfig::from_toml(broken("[saliency]\nsigma_ratios = [0.3, 0.1]"));
    FAIL("expected validation error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("sigma_ratios") != std::string::npos);
  }
  CHECK_THROWS(ExperimentConfig::from_toml(
      broken("[dataset]\nkind = \"parquet\"")));
  CHECK_THROWS(ExperimentConfig::from_toml(
      broken("[saliency]\nmethods = [\"smooth_grad\"]")));
  CHECK_THROWS(ExperimentConfig::from_toml(broken("[split]\nn_splits = 0")));
  CHECK_THROWS(
      ExperimentConfig::from_toml(broken("[network]\nactivation = \"gelu\"")));
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman_rho({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman_rho({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  // monotone but nonlinear is still rho = 1
  CHECK(spearman_rho({1, 2, 3, 4}, {1, 8, 27, 256}) == doctest::Approx(1.0));
  // ties get average ranks
  CHECK(spearman_rho({1, 2, 2, 3}, {1, 2, 2, 3}) == doctest::Approx(1.0));
  CHECK(spearman_rho({1, 1, 1}, {1, 2, 3}) == doctest::Approx(0.0));
  CHECK_THROWS(spearman_rho({1.0}, {1.0}));
  CHECK_THROWS(spearman_rho({1, 2}, {1, 2, 3}));
}

TEST_CASE("hash_hex implements FNV-1a 64") {
  CHECK(hash_hex("") == "cbf29ce484222325");
  CHECK(hash_hex("a") == "af63dc4c8601ec8c");
  CHECK(hash_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("train splits harness: carved eval set and worst-case profile") {
  auto cfg = ExperimentConfig::from_toml(toml::Document::parse(kSmokeToml));
  auto trained = cmd_train_splits(cfg, false);
  CHECK(trained.models.size() == 2);
  CHECK(trained.splits.size() == 2);
  CHECK(trained.eval_set.size() == 32);
  CHECK(trained.pixel_range > 0.0);
  CHECK(trained.profile.depth() == 2);
  CHECK(trained.profile.input_cap == 6.0);
  CHECK(trained.profile_mode == "measured");

  // profile caps dominate every model's measured norms
  for (const auto& model : trained.models) {
    auto norms = spectral_norms(model);
    for (std::size_t l = 0; l < norms.size(); ++l)
      CHECK(norms[l].value <= trained.profile.layer_caps[l] * (1 + 1e-12));
  }

  // eval rows are disjoint from every split's rows
  auto row_in = [](const LabeledDataset& set, const Eigen::RowVectorXd& row) {
    for (Eigen::Index i = 0; i < set.size(); ++i)
      if ((set.features.row(i).array() == row.array()).all()) return true;
    return false;
  };
  for (Eigen::Index e = 0; e < trained.eval_set.size(); ++e) {
    for (const auto& split : trained.splits)
      CHECK_FALSE(row_in(split, trained.eval_set.features.row(e)));
  }
}

TEST_CASE("projected profile mode") {
  auto cfg = ExperimentConfig::from_toml(toml::Document::parse(kSmokeToml));
  cfg.project_caps = {1.0, 1.0};
  auto trained = cmd_train_splits(cfg, false);
  CHECK(trained.profile_mode == "projected");
  for (const auto& model : trained.models) {
    auto norms = spectral_norms(model);
    for (const auto& n : norms) CHECK(n.value <= 1.0 + 1e-9);
  }
}

TEST_CASE("sweep produces ordered rows with the expected shape") {
  auto cfg = ExperimentConfig::from_toml(toml::Document::parse(kSmokeToml));
  auto trained = cmd_train_splits(cfg, false);
  auto report = cmd_sweep_sigma(cfg, trained);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].sigma_ratio == 0.0);
  CHECK(report.rows[0].fidelity == 0.0);
  CHECK(report.rows[0].fidelity_se == 0.0);
  CHECK(report.rows[1].fidelity > 0.0);
  CHECK(std::isnan(report.rows[1].ssim_plain));  // no grid configured
  CHECK(report.rows[1].stability_bound > 0.0);
  CHECK(report.rows[1].fidelity_bound > 0.0);
  CHECK(report.profile_mode == "measured");
  CHECK_FALSE(report.config_hash.empty());
}

TEST_CASE("sweep is deterministic and serialization round trips") {
  auto cfg = ExperimentConfig::from_toml(toml::Document::parse(kSmokeToml));
  auto t1 = cmd_train_splits(cfg, false);
  auto r1 = cmd_sweep_sigma(cfg, t1);
  auto t2 = cmd_train_splits(cfg, false);
  auto r2 = cmd_sweep_sigma(cfg, t2);
  CHECK(report_csv(r1) == report_csv(r2));

  auto back = report_from_json(report_json(r1));
  CHECK(report_csv(back) == report_csv(r1));
  CHECK(back.config_hash == r1.config_hash);
  CHECK(back.smoothing_seed == r1.smoothing_seed);

  // threaded execution matches the serial rows
  auto r3 = cmd_sweep_sigma(cfg, t1, 3);
  CHECK(report_csv(r3) == report_csv(r1));
}

TEST_CASE("report renderings") {
  auto cfg = ExperimentConfig::from_toml(toml::Document::parse(kSmokeToml));
  cfg.sigma_ratios = {0.0, 0.15};
  auto trained = cmd_train_splits(cfg, false);
  auto report = cmd_sweep_sigma(cfg, trained);

  std::string csv = report_csv(report);
  CHECK(csv.find("method,sigma_ratio") == 0);
  CHECK(csv.find("simple_grad") != std::string::npos);
  CHECK(csv.find("nan") != std::string::npos);  // no grid: ssim columns

  std::string plot = report_plot_csv(report);
  CHECK(plot.find("stability_bound") != std::string::npos);

  std::string summary = report_summary_table(report, 0.15);
  CHECK(summary.find("simple_grad") != std::string::npos);
  CHECK(report_summary_table(report, 0.77).find("simple_grad") ==
        std::string::npos);
}

TEST_CASE("bias variance over the sigma grid") {
  auto cfg = ExperimentConfig::from_toml(toml::Document::parse(kSmokeToml));
  cfg.sigma_ratios = {0.0, 0.2};
  auto trained = cmd_train_splits(cfg, false);
  auto rows = cmd_bias_variance(cfg, trained, SaliencyMethod::kSimpleGrad);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].values.avg_fidelity == 0.0);
  CHECK(rows[0].values.avg_variance > 0.0);  // different models differ
  CHECK(rows[1].values.avg_fidelity > 0.0);
  CHECK(rows[1].sigma_abs == doctest::Approx(0.2 * trained.pixel_range));
}

TEST_CASE("verify bounds: clean run and negative control") {
  auto clean = cmd_verify_bounds(99, false, 60);
  REQUIRE(clean.size() == 6);
  for (const auto& s : clean) {
    CAPTURE(s.name);
    CHECK(s.violations == 0);
    CHECK(s.trials > 0);
    CHECK(s.worst_margin >= 0.0);
  }
  auto control = cmd_verify_bounds(99, true, 40);
  bool flagged = false;
  for (const auto& s : control)
    if (s.name == "input_gradient_norm" && s.violations > 0) flagged = true;
  CHECK(flagged);
}

TEST_CASE("build_dataset honors kind, cap, and grid") {
  auto cfg = ExperimentConfig::from_toml(toml::Document::parse(kSmokeToml));
  auto d = build_dataset(cfg);
  CHECK(d.size() == 240);
  CHECK(d.norm_cap == 6.0);
  cfg.grid = {3, 4};
  auto g = build_dataset(cfg);
  REQUIRE(g.grid.has_value());
  CHECK(g.grid->first == 3);
  cfg.grid = {5, 5};  // 25 != 12
  CHECK_THROWS(build_dataset(cfg));
}
