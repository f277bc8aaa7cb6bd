#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "poisonlab/config.hpp"

using namespace poisonlab;

namespace {

ExperimentConfig busy_config() {
  ExperimentConfig c;
  c.seed = 17;
  c.dataset.generator = "gauss_classification";
  c.dataset.n = 321;
  c.dataset.d = 4;
  c.dataset.sep = 1.5;
  c.dataset.classes = {1, 7};
  c.model = "softmax_linear";
  c.hidden = 8;
  c.target.source = "grid";
  c.target.grid = {-3.0, 0.25, -1.0, 1.0, 7, {0.5, -0.1}};
  c.target.eps_w_list = {0.1, 0.3};
  c.attack.name = "fw";
  c.attack.options.epochs = 77;
  c.attack.options.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  c.attack.options.batch_size = kFullBatch;
  c.attack.options.clip_mode = ClipMode::none;
  c.attack.options.optimize_labels = true;
  c.attack.fw_step = "open_loop";
  c.attack.fw_labels = {0, 1};
  c.train.batch_size = 64;
  c.train.grad_tol = 1e-9;
  c.eps_d = {0.25, 0.5, 1.0 / 3.0};
  c.eps_mode = "tau_multiple";
  c.c_convention = 10;
  c.defense = {"sever", 0.2, 3, 5};
  c.output_dir = "somewhere/else";
  return c;
}

std::string config_error(const Json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig c;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_EQ(config_from_json(Json::object()), c);
}

TEST(Config, BusyConfigRoundTrip) {
  const ExperimentConfig c = busy_config();
  const Json j = config_to_json(c);
  const ExperimentConfig back = config_from_json(j);
  EXPECT_EQ(back, c);
  EXPECT_EQ(config_to_json(back), j);
  // Through text as well.
  EXPECT_EQ(config_from_json(Json::parse(j.dump())), c);
}

TEST(Config, BatchSizeSpellings) {
  EXPECT_EQ(batch_from_json(Json("auto")), kAutoBatch);
  EXPECT_EQ(batch_from_json(Json("full")), kFullBatch);
  EXPECT_EQ(batch_from_json(Json(32)), 32);
  EXPECT_THROW(batch_from_json(Json(0)), ConfigError);
  EXPECT_THROW(batch_from_json(Json("half")), ConfigError);
}

TEST(Config, NonFiniteScalars) {
  EXPECT_EQ(real_to_json(std::numeric_limits<double>::infinity()), Json("inf"));
  EXPECT_EQ(real_to_json(-std::numeric_limits<double>::infinity()), Json("-inf"));
  EXPECT_EQ(real_to_json(std::nan("")), Json("nan"));
  EXPECT_TRUE(std::isinf(real_from_json(Json("inf"))));
  EXPECT_TRUE(std::isnan(real_from_json(Json("nan"))));
  EXPECT_EQ(real_from_json(Json(0.1)), 0.1);
  EXPECT_THROW(real_from_json(Json("1.5")), ConfigError);
  EXPECT_THROW(real_from_json(Json::array()), ConfigError);
}

TEST(Config, UnknownNamesSuggest) {
  const std::string top = config_error({{"sed", 3}});
  EXPECT_NE(top.find("did you mean 'seed'"), std::string::npos) << top;
  const std::string atk = config_error({{"attack", {{"name", "gcc"}}}});
  EXPECT_NE(atk.find("did you mean 'gc'"), std::string::npos) << atk;
  EXPECT_NE(atk.find("valid: gc, gm, fw"), std::string::npos) << atk;
  const std::string def = config_error({{"defense", {{"name", "severe"}}}});
  EXPECT_NE(def.find("'sever'"), std::string::npos) << def;
  const std::string gen = config_error({{"dataset", {{"generator", "gaus_classification"}}}});
  EXPECT_NE(gen.find("gauss_classification"), std::string::npos) << gen;
  // Nothing close: list only.
  const std::string far = unknown_name("attack", "zzzzzzzz", kAttacks);
  EXPECT_EQ(far.find("did you mean"), std::string::npos);
  EXPECT_EQ(edit_distance("kitten", "sitting"), 3u);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(config_from_json({{"eps_d", Json::array()}}), ConfigError);
  EXPECT_THROW(config_from_json({{"eps_d", {0.1, -0.2}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"eps_d", "inf"}}), ConfigError);
  EXPECT_THROW(config_from_json({{"eps_mode", "relative"}}), ConfigError);
  EXPECT_THROW(config_from_json({{"attack", {{"lr", -1.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"attack", {{"epochs", "many"}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"defense", {{"name", "dpa"}, {"k", 0}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"target", {{"grid", {{"w1", {1.0}}}}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"model", {{"family", "svm"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(Json::array()), ConfigError);
  EXPECT_THROW(config_from_json({{"model", "least_squares"}}), ConfigError);
  EXPECT_EQ(config_from_json({{"eps_d", 0.3}}).eps_d, (Vector{0.3}));
}

TEST(Config, MissingReferencedFiles) {
  ExperimentConfig c;
  c.target.source = "file";
  c.target.path = "definitely_missing.json";
  EXPECT_THROW(validate_paths(c, std::filesystem::temp_directory_path()), ConfigError);
  c.target.path.clear();
  EXPECT_THROW(validate_paths(c, "."), ConfigError);
  c.target.source = "inline";
  EXPECT_NO_THROW(validate_paths(c, "."));
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(ParamFiles, RoundTripWithMetadata) {
  const auto spec = ModelSpec::mlp(3, 4, 2);
  Params p{Vector(spec.num_params())};
  for (std::size_t i = 0; i < p.size(); ++i) p.values[i] = 0.1 * static_cast<double>(i) - 1.0 / 3.0;
  TargetCandidate meta{p, 0.25, Provenance::grad_ascent};
  meta.tau = 1.5;
  const Json j = params_to_json(spec, p, &meta);
  EXPECT_EQ(j.at("shape"), Json({4, 3, 2}));
  const ParamFile f = params_from_json(Json::parse(j.dump()));
  EXPECT_EQ(f.spec, spec);
  EXPECT_EQ(f.params, p);
  ASSERT_TRUE(f.meta.has_value());
  EXPECT_EQ(f.meta->provenance, Provenance::grad_ascent);
  EXPECT_EQ(f.meta->tau, 1.5);

  Json bad = j;
  bad["values"].erase(0);
  EXPECT_THROW(params_from_json(bad), ShapeError);
  bad = j;
  bad["values"][0] = "nan";
  EXPECT_THROW(params_from_json(bad), DataError);
  EXPECT_THROW(params_from_json(Json::object()), ConfigError);
}

TEST(DatasetFiles, RoundTrip) {
  Dataset ds = gen_or(3, 2, 0.1);
  ds.soft_labels = Matrix(ds.size(), 2, Vector(2 * ds.size(), 0.5));
  const Dataset back = dataset_from_json(Json::parse(dataset_to_json(ds).dump()));
  EXPECT_EQ(back.x, ds.x);
  EXPECT_EQ(back.y, ds.y);
  EXPECT_EQ(back.box_lo, ds.box_lo);
  EXPECT_EQ(back.box_hi, ds.box_hi);
  ASSERT_TRUE(back.soft_labels.has_value());
  EXPECT_EQ(*back.soft_labels, *ds.soft_labels);

  const Dataset reg = gen_gauss_regression(1, 5, 2, Vector{1, 2}, 0.0);
  const Dataset reg_back = dataset_from_json(dataset_to_json(reg));
  EXPECT_EQ(reg_back.task, Task::regression);
  EXPECT_EQ(reg_back.y, reg.y);

  Json broken = dataset_to_json(ds);
  broken["y"][0] = 5;
  EXPECT_THROW(dataset_from_json(broken), DataError);
  EXPECT_THROW(dataset_from_json(Json{{"x", 3}}), DataError);
}
