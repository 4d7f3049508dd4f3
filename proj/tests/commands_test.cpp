#include "lpfs/commands.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace lpfs {
namespace {

namespace fs = std::filesystem;

RunConfig small_config(const fs::path& dir) {
  RunConfig c;
  c.synthetic.n_fields = 8;
  c.synthetic.n_informative = 3;
  c.synthetic.cardinality = 10;
  c.synthetic.n_continuous = 2;
  c.synthetic.weight_scale = 3.0;
  c.synthetic.n_pretrain = 3000;
  c.synthetic.n_select = 3000;
  c.synthetic.n_eval = 1500;
  c.model.embedding_dim = 3;
  c.model.dense_rep_dim = 3;
  c.model.top_hidden = {8};
  c.model.dense_hidden = {4};
  c.train.batch_size = 64;
  c.train.adagrad_lr = 0.05;
  c.train.pretrain_steps = 300;
  c.gates.alpha = 1.0;
  c.gates.epsilon_decay = 0.5;
  c.gates.epsilon_interval = 10;
  c.prox.lambda = 0.05;
  c.selection.max_steps = 400;
  c.selection.stability_window = 100;
  c.selection.group_steps = 200;
  c.selection.permutation_repeats = 2;
  c.output.dir = dir.string();
  return c;
}

class Commands : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("lpfs_commands_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    c_ = small_config(root_ / "run");
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path pretrained() {
    std::ostringstream log;
    return cmd_pretrain(c_, log).checkpoint;
  }

  fs::path root_;
  RunConfig c_;
};

TEST_F(Commands, PretrainWritesArtifactsDeterministically) {
  std::ostringstream log;
  const PretrainResult a = cmd_pretrain(c_, log);
  EXPECT_EQ(a.losses.size(), 300u);
  EXPECT_GT(a.eval.auc, 0.7);
  for (const char* f : {"pretrain.ckpt", "pretrain_loss.csv", "pretrain_metrics.csv", "config.txt", "ground_truth.txt"})
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  const std::string first = read_file(a.checkpoint);
  RunConfig again = c_;
  again.output.dir = (root_ / "again").string();
  const PretrainResult b = cmd_pretrain(again, log);
  EXPECT_EQ(read_file(b.checkpoint), first);
  EXPECT_TRUE(parse_config(read_file(root_ / "run" / "config.txt")) == c_);
  EXPECT_NE(log.str().find("eval auc"), std::string::npos);
}

TEST_F(Commands, GateSelectAndEvaluateAgree) {
  const fs::path ckpt = pretrained();
  std::ostringstream log;
  const SelectResult s = cmd_select(c_, ckpt, log);
  const fs::path dir = root_ / "run";
  for (const char* f : {"mask.txt", "gates.csv", "trajectory.csv", "histogram.csv", "metrics.csv", "summary.txt",
                        "selected.ckpt", "pruned.ckpt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(read_mask(dir / "mask.txt").bits, s.report.mask.bits);
  EXPECT_EQ(s.report.mask.size(), 9u);
  EXPECT_NEAR(s.report.metrics_before->auc, s.report.metrics_after->auc, 1e-12);
  EXPECT_NEAR(s.report.metrics_before->logloss, s.report.metrics_after->logloss, 1e-12);

  const Metrics gated = cmd_evaluate(c_, dir / "selected.ckpt", log);
  const Metrics pruned = cmd_evaluate(c_, dir / "pruned.ckpt", log);
  EXPECT_EQ(gated.auc, s.report.metrics_before->auc);
  EXPECT_EQ(pruned.auc, s.report.metrics_after->auc);
  EXPECT_TRUE(fs::exists(dir / "pruned_eval.csv"));

  // Selecting from a gated checkpoint is refused.
  EXPECT_THROW(cmd_select(c_, dir / "selected.ckpt", log), DataError);
}

TEST_F(Commands, SelectIsDeterministic) {
  const fs::path ckpt = pretrained();
  std::ostringstream log;
  const SelectResult a = cmd_select(c_, ckpt, log);
  const std::string bytes = read_file(root_ / "run" / "selected.ckpt");
  const SelectResult b = cmd_select(c_, ckpt, log);
  EXPECT_EQ(a.report.final_gates, b.report.final_gates);
  EXPECT_EQ(read_file(root_ / "run" / "selected.ckpt"), bytes);
}

TEST_F(Commands, ZeroLambdaWarns) {
  const fs::path ckpt = pretrained();
  c_.prox.lambda = 0.0;
  std::ostringstream log;
  const SelectResult s = cmd_select(c_, ckpt, log);
  EXPECT_NE(log.str().find("warning"), std::string::npos);
  EXPECT_EQ(s.report.mask.kept(), s.report.mask.size());
}

TEST_F(Commands, PermutationKeepsExactlyTheBudget) {
  const fs::path ckpt = pretrained();
  c_.selection.method = SelectMethod::kPermutation;
  std::ostringstream log;
  EXPECT_THROW(cmd_select(c_, ckpt, log), UsageError);
  c_.selection.budget = 4;
  const SelectResult s = cmd_select(c_, ckpt, log);
  EXPECT_EQ(s.report.mask.kept(), 4u);
  EXPECT_EQ(s.pruned.slot_count(), 4u);
  EXPECT_NE(read_file(root_ / "run" / "metrics.csv").find("pruned,"), std::string::npos);
  c_.selection.budget = 10;
  EXPECT_THROW(cmd_select(c_, ckpt, log), UsageError);
}

TEST_F(Commands, GroupLassoPrunesZeroGroups) {
  const fs::path ckpt = pretrained();
  c_.selection.method = SelectMethod::kGroupLasso;
  c_.selection.group_lambda = 0.5;
  std::ostringstream log;
  const SelectResult s = cmd_select(c_, ckpt, log);
  EXPECT_EQ(s.pruned.slot_count(), s.report.mask.kept());
  EXPECT_NEAR(s.report.metrics_before->auc, s.report.metrics_after->auc, 1e-12);
}

TEST_F(Commands, SweepOfOnePointEqualsSelect) {
  const fs::path ckpt = pretrained();
  std::ostringstream log;
  const SelectResult s = cmd_select(c_, ckpt, log);
  c_.sweep.lambdas = {c_.prox.lambda};
  c_.sweep.alphas = {c_.gates.alpha};
  const SweepResult w = cmd_sweep(c_, ckpt, log);
  ASSERT_EQ(w.rows.size(), 1u);
  EXPECT_EQ(w.rows[0].kept, s.report.mask.kept());
  EXPECT_EQ(w.rows[0].eval_auc, s.report.metrics_before->auc);
  EXPECT_TRUE(fs::exists(root_ / "run" / "sweep.csv"));
  c_.sweep.lambdas.clear();
  EXPECT_THROW(cmd_sweep(c_, ckpt, log), UsageError);
}

TEST_F(Commands, SweepMonotoneCheck) {
  std::vector<SweepRow> rows{{1, 0.1, 5, 0.7}, {1, 0.2, 3, 0.7}, {2, 0.1, 2, 0.7}, {2, 0.2, 4, 0.7}};
  EXPECT_FALSE(kept_nonincreasing_in_lambda(rows));
  rows[3].kept = 2;
  EXPECT_TRUE(kept_nonincreasing_in_lambda(rows));
  SweepResult r{rows, true};
  const std::string csv = sweep_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "alpha,lambda,kept,eval_auc");
  EXPECT_NE(csv.find("2,0.2,2,0.7\n"), std::string::npos);
}

TEST_F(Commands, OutputDirFromEnvironment) {
  ::setenv(kOutputDirEnv, (root_ / "env").c_str(), 1);
  EXPECT_EQ(output_dir(c_), root_ / "env");
  ::unsetenv(kOutputDirEnv);
  EXPECT_EQ(output_dir(c_), root_ / "run");
}

TEST_F(Commands, TsvSourceEndToEnd) {
  c_.data.source = "tsv";
  c_.data.hash_cardinality = 50;
  c_.data.pretrain_days = "0-1";
  c_.data.select_days = "2";
  c_.data.eval_days = "3";
  EXPECT_THROW(load_run_data(c_), UsageError);
  c_.data.paths = {(root_ / "missing.tsv").string()};
  EXPECT_THROW(load_run_data(c_), UsageError);

  SyntheticSpec spec;
  spec.n_fields = 26;
  spec.n_informative = 4;
  spec.cardinality = {6};
  spec.n_continuous = 13;
  const GroundTruth truth = make_ground_truth(spec);
  fs::create_directories(root_);
  c_.data.paths.clear();
  for (int day = 0; day < 4; ++day) {
    const fs::path p = root_ / ("day_" + std::to_string(day) + ".tsv");
    std::ofstream out(p);
    write_tsv(out, synth_generate(spec, truth, 400, 100 + static_cast<std::uint64_t>(day)));
    c_.data.paths.push_back(p.string());
  }
  const RunData d = load_run_data(c_);
  EXPECT_EQ(d.pretrain.size(), 800u);
  EXPECT_EQ(d.select.size(), 400u);
  EXPECT_EQ(d.eval.size(), 400u);
  EXPECT_FALSE(d.truth.has_value());

  c_.model.top_hidden = {4};
  c_.train.pretrain_steps = 20;
  c_.selection.max_steps = 20;
  std::ostringstream log;
  const fs::path ckpt = cmd_pretrain(c_, log).checkpoint;
  EXPECT_FALSE(fs::exists(root_ / "run" / "ground_truth.txt"));
  const SelectResult s = cmd_select(c_, ckpt, log);
  EXPECT_EQ(s.report.mask.size(), 27u);

  c_.data.select_days = "1-2";
  EXPECT_THROW(load_run_data(c_), UsageError);
  c_.data.select_days = "2";
  c_.data.negative_keep_rate = 0.5;
  EXPECT_LT(load_run_data(c_).pretrain.size(), 800u);

  // A checkpoint from another schema is a data error.
  RunConfig other = small_config(root_ / "other");
  EXPECT_THROW(cmd_evaluate(other, ckpt, log), DataError);
}

TEST_F(Commands, UnknownSourceIsUsageError) {
  c_.data.source = "parquet";
  EXPECT_THROW(load_run_data(c_), UsageError);
}

}  // namespace
}  // namespace lpfs
