#include "lpfs/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "lpfs/report_io.hpp"
#include "lpfs/selection.hpp"

namespace lpfs {
namespace {

namespace fs = std::filesystem;

Checkpoint trained_checkpoint(bool with_gates) {
  Checkpoint c;
  c.model = testing::tiny_model(4, 9, 3, 2, true, 21);
  const Dataset d = testing::random_dataset(64, 4, 9, 2, 22);
  pretrain(c.model, d, 10, 16);
  c.global_step = 10;
  if (with_gates) {
    GateState g = testing::random_gates(GateKind::kLpfsPlusPlus, c.model.slot_count(), 0.03, 2.0, 23);
    g.x[1] = 0.0;
    g.velocity[0] = -0.25;
    g.rms_rescale = true;
    g.rms_value = 0.7;
    g.rms_frozen = true;
    c.gates = g;
  }
  return c;
}

void expect_same_forward(const Checkpoint& a, const Checkpoint& b) {
  const Dataset d = testing::random_dataset(40, 4, 9, 2, 99);
  const Vector za = forward(a.model, a.gates ? &*a.gates : nullptr, d.all());
  const Vector zb = forward(b.model, b.gates ? &*b.gates : nullptr, d.all());
  ASSERT_EQ(za.size(), zb.size());
  for (Eigen::Index i = 0; i < za.size(); ++i) EXPECT_EQ(za(i), zb(i));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (bool gated : {false, true}) {
    const Checkpoint c = trained_checkpoint(gated);
    const Checkpoint back = checkpoint_from_bytes(checkpoint_bytes(c));
    EXPECT_TRUE(back.model == c.model);
    EXPECT_EQ(back.global_step, c.global_step);
    ASSERT_EQ(back.gates.has_value(), gated);
    if (gated) {
      EXPECT_EQ(back.gates->x, c.gates->x);
      EXPECT_EQ(back.gates->velocity, c.gates->velocity);
      EXPECT_EQ(back.gates->init_norm, c.gates->init_norm);
      EXPECT_EQ(back.gates->epsilon, c.gates->epsilon);
      EXPECT_EQ(back.gates->alpha, c.gates->alpha);
      EXPECT_EQ(back.gates->kind, c.gates->kind);
      EXPECT_TRUE(back.gates->rms_rescale);
      EXPECT_EQ(back.gates->rms_value, 0.7);
      EXPECT_TRUE(back.gates->rms_frozen);
    }
    expect_same_forward(c, back);
    EXPECT_EQ(checkpoint_bytes(back), checkpoint_bytes(c));
  }
}

TEST(Checkpoint, PrunedModelRoundTrips) {
  Checkpoint c = trained_checkpoint(false);
  std::vector<std::uint8_t> keep(c.model.slot_count(), 0);
  keep[0] = 1;
  keep[2] = 1;
  c.model = drop_slots(c.model, keep);
  const Checkpoint back = checkpoint_from_bytes(checkpoint_bytes(c));
  EXPECT_TRUE(back.model == c.model);
  expect_same_forward(c, back);
}

TEST(Checkpoint, FileRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "lpfs_ckpt_test";
  fs::create_directories(dir);
  const fs::path p = dir / "m.ckpt";
  const Checkpoint c = trained_checkpoint(true);
  save_checkpoint(p, c);
  const Checkpoint back = load_checkpoint(p);
  expect_same_forward(c, back);
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const std::string good = checkpoint_bytes(trained_checkpoint(true));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(checkpoint_from_bytes(bad_magic), DataError);
  std::string bad_version = good;
  bad_version[8] = 9;
  EXPECT_THROW(checkpoint_from_bytes(bad_version), DataError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1})
    EXPECT_THROW(checkpoint_from_bytes(good.substr(0, cut)), DataError) << "cut at " << cut;
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt"), DataError);
}

}  // namespace
}  // namespace lpfs
