#include <gtest/gtest.h>

#include "dmsb/config.hpp"

using namespace dmsb;
using nlohmann::json;

TEST(RunConfig, DefaultsFollowTrainingTable) {
  const RunConfig c;
  EXPECT_DOUBLE_EQ(c.g, 0.2);
  EXPECT_DOUBLE_EQ(c.snr, 0.15);
  EXPECT_EQ(c.langevin_steps, 1);
  EXPECT_EQ(c.cache_size, 4096);
  EXPECT_EQ(c.batch_size, 256);
  EXPECT_DOUBLE_EQ(c.lr, 2e-4);
  EXPECT_DOUBLE_EQ(c.ema_decay, 0.999);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, JsonRoundTripAndPartialOverrides) {
  RunConfig c;
  c.g = 0.4;
  c.times = {0.0, 1.5, 3.0};
  c.data_paths = {"a.csv", "b.csv"};
  c.dataset = "csv";
  c.seed = 123456789012345ULL;
  const json j = c;
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(json(back), j);

  const RunConfig partial = run_config_from_json(json{{"n_bi", 7}});
  EXPECT_EQ(partial.n_bi, 7);
  EXPECT_EQ(partial.cache_size, 4096);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(run_config_from_json(json{{"n_bii", 3}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"n_bi", "three"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json::array()), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"cache_size", 0}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"times", {0.0, 0.0}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"g", -1.0}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"dataset", "csv"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"carry", "sometimes"}}), ConfigError);
}

TEST(RunConfig, MapsOntoModuleConfigs) {
  RunConfig c;
  c.hidden_width = 32;
  c.lr = 1e-3;
  c.langevin_steps = 3;
  c.n_proj = 64;
  c.carry = "all";
  const TrainConfig t = c.train_config(3);
  EXPECT_EQ(t.arch.state_dim, 3);
  EXPECT_EQ(t.arch.hidden_width, 32);
  EXPECT_DOUBLE_EQ(t.adamw.lr, 1e-3);
  EXPECT_EQ(t.langevin.n_steps, 3);
  EXPECT_EQ(t.carry, CarryMode::all);
  EXPECT_EQ(c.metric_config().n_proj, 64);
}
