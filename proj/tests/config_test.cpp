#include "lpfs/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace lpfs {
namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const UsageError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsRoundTrip) {
  const RunConfig c;
  const RunConfig back = parse_config(render_config(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(render_config(back), render_config(c));
}

TEST(Config, EveryFieldRoundTrips) {
  RunConfig c;
  c.data.source = "tsv";
  c.data.paths = {"a.tsv", "b.tsv"};
  c.data.negative_keep_rate = 0.1;
  c.synthetic.weight_scale = 1.0 / 3.0;
  c.model.top_hidden = {64, 32, 16};
  c.model.dense_hidden = {};
  c.model.cross = true;
  c.gates.kind = GateKind::kSl0Tanh;
  c.gates.epsilon_floor = 1.2345678901234567e-7;
  c.prox.lr = 0.0031;
  c.selection.method = SelectMethod::kPermutation;
  c.selection.budget = 7;
  c.sweep.lambdas = {1e-5, 0.1 + 0.2};
  c.output.dir = "/tmp/x y";
  const RunConfig back = parse_config(render_config(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(back.gates.epsilon_floor, c.gates.epsilon_floor);
  EXPECT_EQ(back.sweep.lambdas, c.sweep.lambdas);
  EXPECT_EQ(back.data.paths, c.data.paths);
  EXPECT_TRUE(back.model.dense_hidden.empty());
  EXPECT_EQ(*back.prox.lr, 0.0031);
  EXPECT_EQ(back.output.dir, "/tmp/x y");
  EXPECT_FALSE(back == RunConfig{});
}

TEST(Config, PartialTextKeepsDefaults) {
  const RunConfig c = parse_config("# comment\n\n[prox]\nlambda = 0.02\n  [gates]  \n kind=lpfs \n");
  EXPECT_EQ(c.prox.lambda, 0.02);
  EXPECT_EQ(c.gates.kind, GateKind::kLpfs);
  EXPECT_EQ(c.gates.alpha, RunConfig{}.gates.alpha);
  EXPECT_EQ(effective_prox_lr(c), 0.005);
  EXPECT_EQ(effective_prox_lr(RunConfig{}), 0.01);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(error_of("[prox]\nlambda 0.1\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("lambda = 1\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("[prox\n").find("line 1"), std::string::npos);
  const std::string bad_value = error_of("[prox]\n\n\nlambda = abc\n");
  EXPECT_NE(bad_value.find("line 4"), std::string::npos);
  EXPECT_NE(bad_value.find("abc"), std::string::npos);
  EXPECT_NE(error_of("[prox]\nnope = 1\n").find("prox.nope"), std::string::npos);
  EXPECT_NE(error_of("[gates]\nkind = l3\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("[model]\ncross = maybe\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("[model]\ntop_hidden = 4,,2\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("[selection]\nmethod = lasso\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("[train]\nbatch_size = -3\n").find("line 2"), std::string::npos);
}

TEST(Config, SetByDottedName) {
  RunConfig c;
  set_config_value(c, "selection.budget", " 12 ");
  EXPECT_EQ(c.selection.budget, 12u);
  set_config_value(c, "prox.lr", "auto");
  EXPECT_FALSE(c.prox.lr.has_value());
  EXPECT_THROW(set_config_value(c, "budget", "1"), UsageError);
  EXPECT_THROW(set_config_value(c, "selection.nothing", "1"), UsageError);
}

TEST(Config, FieldNamesAreUnique) {
  std::set<std::string> seen;
  for (const ConfigField& f : config_fields()) EXPECT_TRUE(seen.insert(f.name()).second) << f.name();
}

TEST(Config, DerivedSettings) {
  RunConfig c;
  c.gates.epsilon_interval = 7;
  c.prox.momentum = 0.5;
  EXPECT_EQ(epsilon_schedule(c).interval_steps, 7);
  EXPECT_EQ(prox_config(c).momentum, 0.5);
  EXPECT_EQ(synthetic_spec(c).cardinality.size(), c.synthetic.n_fields);
}

TEST(Config, ValidateRejectsUnrunnableValues) {
  EXPECT_NO_THROW(validate_config(RunConfig{}));
  RunConfig c;
  c.gates.epsilon_decay = 1.5;
  EXPECT_THROW(validate_config(c), UsageError);
  c = RunConfig{};
  c.gates.epsilon_floor = 1.0;
  EXPECT_THROW(validate_config(c), UsageError);
  c = RunConfig{};
  c.prox.momentum = 1.0;
  EXPECT_THROW(validate_config(c), UsageError);
  c = RunConfig{};
  c.train.batch_size = 0;
  EXPECT_THROW(validate_config(c), UsageError);
  c = RunConfig{};
  c.synthetic.n_informative = 31;
  EXPECT_THROW(validate_config(c), UsageError);
  c = RunConfig{};
  c.selection.lambda_hi = c.selection.lambda_lo;
  EXPECT_THROW(validate_config(c), UsageError);
}

TEST(Config, LoadFromFile) {
  const auto p = std::filesystem::temp_directory_path() / "lpfs_config_test.txt";
  {
    std::ofstream out(p);
    out << "[output]\ndir = somewhere\n";
  }
  EXPECT_EQ(load_config(p.string()).output.dir, "somewhere");
  std::filesystem::remove(p);
  EXPECT_THROW(load_config(p.string()), UsageError);
}

}  // namespace
}  // namespace lpfs
