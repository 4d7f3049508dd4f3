#include "lpfs/report_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "fixtures.hpp"

namespace lpfs {
namespace {

namespace fs = std::filesystem;

class ReportIo : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("lpfs_report_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

std::size_t count_entries(const fs::path& dir) {
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++n;
  return n;
}

TEST_F(ReportIo, AtomicWriteReplacesAndLeavesNoTemp) {
  const fs::path p = dir_ / "nested" / "a.txt";
  atomic_write(p, "first");
  EXPECT_EQ(read_file(p), "first");
  atomic_write(p, "second, longer");
  EXPECT_EQ(read_file(p), "second, longer");
  EXPECT_EQ(count_entries(p.parent_path()), 1u);
  EXPECT_THROW(read_file(dir_ / "missing"), DataError);
}

TEST_F(ReportIo, AtomicWriteFailureKeepsOldFile) {
  const fs::path p = dir_ / "b.txt";
  atomic_write(p, "keep me");
  fs::create_directory(detail::temp_sibling(dir_ / "c.txt"));
  EXPECT_THROW(atomic_write(dir_ / "c.txt", "x"), DataError);
  EXPECT_EQ(read_file(p), "keep me");
  EXPECT_FALSE(fs::exists(dir_ / "c.txt"));
}

TEST_F(ReportIo, MaskListsDenseSlotFirst) {
  const ModelParams m = testing::tiny_model(3, 4, 2, 2, false, 1);
  const std::vector<std::string> names = m.slot_names();
  ASSERT_EQ(names.size(), 4u);
  GateState g = make_gate_state(GateKind::kLpfs, 4, 0.1);
  g.x[0] = 0.0;
  g.x[2] = 0.0;
  const FeatureMask mask = extract_mask(g, names);
  EXPECT_EQ(mask_text(mask), "0101\n");
  atomic_write(dir_ / "mask.txt", mask_text(mask));
  const FeatureMask back = read_mask(dir_ / "mask.txt", names);
  EXPECT_EQ(back.bits, mask.bits);
  EXPECT_EQ(m.slots[0].kind, SlotKind::kDense);
  EXPECT_THROW(read_mask(dir_ / "mask.txt", {"a"}), DataError);
}

TEST_F(ReportIo, WriteReportProducesEveryArtifact) {
  SelectionReport r;
  r.method = "lpfs_pp";
  r.mask = FeatureMask::from_string("101", {"dense", "f0", "f1"});
  r.final_gates = {0.5, 0.0, -1.25};
  r.zero_count_trajectory = {{0, 0}, {100, 1}};
  r.gate_histogram = make_histogram(r.final_gates, 2, 2.0);
  r.metrics_before = Metrics{0.75, 0.5, 0.625};
  r.metrics_after = Metrics{0.75, 0.5, 0.625};
  r.config_snapshot = "[output]\ndir = x\n";
  r.lambda = 0.004;
  r.steps_run = 100;
  write_report(dir_, r);

  EXPECT_EQ(read_file(dir_ / "mask.txt"), "101\n");
  EXPECT_EQ(read_file(dir_ / "gates.csv"), "slot_name,final_gate\ndense,0.5\nf0,0\nf1,-1.25\n");
  EXPECT_EQ(read_file(dir_ / "trajectory.csv"), "step,zero_count\n0,0\n100,1\n");
  EXPECT_EQ(read_file(dir_ / "histogram.csv"), "bin_lo,bin_hi,count\n0,1,2\n1,2,1\n");
  EXPECT_EQ(read_file(dir_ / "metrics.csv"),
            "phase,auc,logloss,accuracy\ngated,0.75,0.5,0.625\nabsorbed,0.75,0.5,0.625\n");
  const std::string summary = read_file(dir_ / "summary.txt");
  EXPECT_NE(summary.find("kept = 2\n"), std::string::npos);
  EXPECT_NE(summary.find("lambda = 0.004\n"), std::string::npos);
  EXPECT_EQ(read_file(dir_ / "config.txt"), r.config_snapshot);
  EXPECT_EQ(count_entries(dir_), 7u);

  r.method = "permutation";
  write_report(dir_, r);
  EXPECT_EQ(read_file(dir_ / "metrics.csv"),
            "phase,auc,logloss,accuracy\nfull,0.75,0.5,0.625\npruned,0.75,0.5,0.625\n");
}

TEST_F(ReportIo, GatesCsvChecksLengths) {
  const FeatureMask m = FeatureMask::from_string("11", {"a", "b"});
  const std::vector<double> one{1.0};
  EXPECT_THROW(gates_csv(m, one), ContractViolation);
}

TEST_F(ReportIo, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.784532198765}) EXPECT_EQ(std::stod(detail::fmt(v)), v);
}

}  // namespace
}  // namespace lpfs
