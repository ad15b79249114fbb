#include <gtest/gtest.h>

#include "fedtan/cli/config.hpp"
#include "fedtan/cli/experiment.hpp"

using namespace fedtan;
using namespace fedtan::cli;

namespace {

const char* kMinimal = R"(
[dataset]
kind = synthetic
[scheme]
name = fedtan
)";

std::string error_key(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<none>";
}

}  // namespace

TEST(Config, MinimalUsesDefaults) {
  const auto c = parse_config(kMinimal);
  EXPECT_EQ(c.dataset.kind, DatasetKind::Synthetic);
  EXPECT_EQ(c.partition.kind, PartitionKind::LabelShard);
  EXPECT_EQ(c.partition.clients, 5);
  EXPECT_EQ(c.scheme.scheme, fl::Scheme::FedTAN);
  EXPECT_EQ(c.scheme.local_steps, 5);
  EXPECT_EQ(c.scheme.batch_size, 128);
  EXPECT_DOUBLE_EQ(c.scheme.momentum, 0.1);
  EXPECT_EQ(c.model.hidden, std::vector<long long>{30});
  EXPECT_EQ(c.output, "history.csv");
}

TEST(Config, EmptySchemeNamesTheSchemeKey) {
  EXPECT_EQ(error_key("[dataset]\nkind = mnist\n[scheme]\nname =\n"), "scheme");
  EXPECT_EQ(error_key("[dataset]\nkind = mnist\n"), "scheme");
  EXPECT_EQ(error_key("[dataset]\nkind = mnist\n[scheme]\nname = fedsgd\n"), "scheme");
}

TEST(Config, ErrorsNameTheOffendingKey) {
  const std::string base = std::string(kMinimal);
  EXPECT_EQ(error_key(base + "local_steps = five\n"), "scheme.local_steps");
  EXPECT_EQ(error_key(base + "lr = -1\n"), "scheme.lr");
  EXPECT_EQ(error_key(base + "warmup = 3\n"), "scheme.warmup");
  EXPECT_EQ(error_key(base + "[run]\nparallel = maybe\n"), "run.parallel");
  EXPECT_EQ(error_key(base + "name = fedavg_bn\n"), "scheme.name");
  EXPECT_EQ(error_key(base + "[partition]\nclients = 0\n"), "partition.clients");
  EXPECT_EQ(error_key("[scheme]\nname = fedtan\n"), "dataset");
  EXPECT_EQ(error_key(base + "[optimizer]\n"), "optimizer");
}

TEST(Config, Fedtan2NeedsSwitchInsideRun) {
  const std::string text = "[dataset]\nkind = synthetic\n[scheme]\nname = fedtan2\niterations = 10\nswitch_iteration = 10\n";
  EXPECT_EQ(error_key(text), "scheme.switch_iteration");
}

TEST(Config, FullBatchKeyword) {
  const auto c = parse_config(std::string(kMinimal) + "batch_size = full\n");
  EXPECT_TRUE(c.scheme.full_batch());
}

TEST(Config, SerializeRoundTrips) {
  auto c = parse_config(R"(
# comment line
[dataset]
kind = synthetic
classes = 4
per_class = 30
noise = 0.25
[partition]
kind = iid
clients = 3
[model]
hidden = 16, 8
batch_norm = false
[scheme]
name = fedtan2
iterations = 20
switch_iteration = 7
lr = 0.3
batch_size = full
[run]
seed = 42
output = out/run.csv
timing = true
)");
  EXPECT_EQ(c.model.hidden, (std::vector<long long>{16, 8}));
  EXPECT_EQ(parse_config(serialize_config(c)), c);
  EXPECT_EQ(serialize_config(parse_config(serialize_config(c))), serialize_config(c));
}

TEST(Config, DataRootFromEnvironment) {
  ::setenv(kDataRootEnv, "/tmp/somewhere", 1);
  EXPECT_EQ(parse_config("[dataset]\nkind = mnist\n[scheme]\nname = fedtan\n").dataset.root, "/tmp/somewhere");
  ::unsetenv(kDataRootEnv);
  EXPECT_EQ(default_data_root(), "data/mnist");
}

TEST(Experiment, SyntheticConfigRunsEndToEnd) {
  auto c = parse_config(R"(
[dataset]
kind = synthetic
classes = 4
per_class = 20
test_per_class = 10
input_dim = 5
[partition]
kind = label_shard
clients = 2
classes_per_client = 2
[model]
hidden = 6
[scheme]
name = fedtan
iterations = 4
local_steps = 2
batch_size = 8
lr = 0.2
[run]
eval_every = 2
)");
  int calls = 0;
  const auto h = run_config(c, [&](const fl::Federation&, const fl::RoundResult&) { ++calls; });
  ASSERT_EQ(h.size(), 4u);
  EXPECT_EQ(calls, 4);
  EXPECT_TRUE(std::isnan(h[0].test_accuracy));
  EXPECT_GE(h[1].test_accuracy, 0.0);
  EXPECT_LE(h[3].test_accuracy, 1.0);
  EXPECT_EQ(h[3].cum_rounds, 4u * 4u);
}
