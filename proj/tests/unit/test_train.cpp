#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "poolnet/arch.hpp"
#include "poolnet/train.hpp"

using namespace poolnet;
namespace fs = std::filesystem;

namespace {

TrainConfig small_run(const std::string &arch, int epochs) {
  TrainConfig cfg = TrainConfig::for_arch(arch);
  cfg.epochs = epochs;
  cfg.batch_size = 50;
  cfg.seed = 11;
  return cfg;
}

} // namespace

TEST(Train, SameSeedIsBitIdentical) {
  const auto tr = synthetic_cifar_like(300, 1), te = synthetic_cifar_like(100, 2, Split::Test);
  const auto cfg = small_run("A-LeNet5-a", 1);
  const auto a = train(cfg, tr, te), b = train(cfg, tr, te);
  ASSERT_EQ(a.epochs.size(), 1u);
  EXPECT_EQ(a.epochs[0].train_loss, b.epochs[0].train_loss);
  EXPECT_EQ(a.epochs[0].last_batch_loss, b.epochs[0].last_batch_loss);
  EXPECT_EQ(a.final_test_acc, b.final_test_acc);

  auto other = cfg;
  other.seed = 12;
  EXPECT_NE(train(other, tr, te).epochs[0].train_loss, a.epochs[0].train_loss);
}

TEST(Train, LossFallsWithinFirstEpoch) {
  const auto tr = synthetic_cifar_like(500, 3), te = synthetic_cifar_like(100, 4, Split::Test);
  auto cfg = small_run("LeNet5", 1);
  const auto r = train(cfg, tr, te);
  ASSERT_EQ(r.epochs.size(), 1u);
  EXPECT_LT(r.epochs[0].last_batch_loss, r.epochs[0].first_batch_loss);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.status, "ok");
  EXPECT_DOUBLE_EQ(r.epochs[0].lr_conv, 0.032);
}

TEST(Train, UntrainedIsNearChance) {
  const auto tr = synthetic_cifar_like(100, 5), te = synthetic_cifar_like(2000, 6, Split::Test);
  for (const char *arch : {"A-LeNet5-a", "LeNet5"}) {
    const auto r = train(small_run(arch, 0), tr, te);
    EXPECT_TRUE(r.epochs.empty());
    EXPECT_GE(r.initial_test_acc, 0.0);
    EXPECT_NEAR(r.final_test_acc, 0.1, 0.06) << arch;
  }
}

TEST(Train, DivergenceIsReported) {
  const auto tr = synthetic_cifar_like(200, 7), te = synthetic_cifar_like(50, 8, Split::Test);
  auto cfg = small_run("LeNet5", 3);
  cfg.hyper.conv.schedule.base_rate = cfg.hyper.fc.schedule.base_rate = 1e6;
  const auto r = train(cfg, tr, te);
  EXPECT_TRUE(r.diverged);
  EXPECT_NE(r.status.find("diverged"), std::string::npos);
  EXPECT_LT(r.epochs.size(), 3u);
}

TEST(Train, CallbackCanStopEarly) {
  const auto tr = synthetic_cifar_like(100, 9), te = synthetic_cifar_like(50, 10, Split::Test);
  int calls = 0;
  const auto r = train(small_run("A-LeNet5-c", 5), tr, te, [&](const EpochRecord &rec) {
    ++calls;
    EXPECT_EQ(rec.epoch, calls);
    return calls < 2;
  });
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(r.epochs.size(), 2u);
}

TEST(Train, RejectsBadConfig) {
  const auto ds = synthetic_cifar_like(20, 1);
  auto cfg = small_run("LeNet5", -1);
  EXPECT_THROW(train(cfg, ds, ds), std::invalid_argument);
  cfg.epochs = 1;
  cfg.batch_size = 0;
  EXPECT_THROW(train(cfg, ds, ds), std::invalid_argument);
}

TEST(Train, ReportEchoesConfigAndSeed) {
  const auto ds = synthetic_cifar_like(20, 1);
  const auto r = train(small_run("LeNet5", 0), ds, ds);
  const auto j = to_json(r);
  EXPECT_EQ(j["config"]["seed"].get<std::uint64_t>(), 11u);
  EXPECT_EQ(j["config"]["hyper"]["conv"]["eta"].get<double>(), 0.032);
}

TEST(Checkpoint, RoundTrip) {
  const fs::path file = fs::temp_directory_path() / ("poolnet_ckpt_" + std::to_string(::getpid()) + ".bin");
  auto a = Network<float>::build(build_spec("A-VGG6"), 1);
  Tensor<float> x(Shape{2, 3, 32, 32}, 0.25f);
  a.forward(x, Mode::Train); // moves the batch-norm running statistics
  save_checkpoint(a, file);

  auto b = Network<float>::build(build_spec("A-VGG6"), 2);
  EXPECT_NE(a.forward(x, Mode::Eval), b.forward(x, Mode::Eval));
  load_checkpoint(b, file);
  EXPECT_EQ(a.forward(x, Mode::Eval), b.forward(x, Mode::Eval));

  auto wrong = Network<float>::build(build_spec("LeNet5"), 1);
  EXPECT_THROW(load_checkpoint(wrong, file), DataError);
  fs::remove(file);
  EXPECT_THROW(load_checkpoint(b, file), DataError);
}
