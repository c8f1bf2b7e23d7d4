#include <gtest/gtest.h>

#include "poolnet/arch.hpp"

using namespace poolnet;

TEST(Arch, FlattenWidths) {
  const std::pair<const char *, std::size_t> expect[] = {
      {"A-VGG6", 2048},     {"A-VGG13", 2048},    {"A-VGG8", 8192},     {"A-VGG14", 8192},
      {"A-VGG16", 8192},    {"LeNet5", 400},      {"A-LeNet5-a", 576},  {"A-LeNet5-b", 576},
      {"A-LeNet5-c", 256},  {"A-LeNet5-d", 256},  {"A-LeNet5-e", 256},  {"VGG16", 512},
      {"A-VGG16-linear", 8192}, {"A-VGG13-linear", 2048}, {"X-LeNet5-MP4", 576}};
  for (const auto &[name, width] : expect)
    EXPECT_EQ(flatten_width(build_spec(name)), width) << name;
}

TEST(Arch, EveryNameBuildsAndTraces) {
  for (const auto &name : arch_names()) {
    const auto spec = build_spec(name);
    EXPECT_EQ(spec.name, name);
    EXPECT_NO_THROW(shape_trace(spec)) << name;
  }
}

TEST(Arch, NamesAreCaseInsensitive) {
  EXPECT_EQ(canonical_arch_name("a-lenet5-a"), "A-LeNet5-a");
  EXPECT_EQ(canonical_arch_name("a-vgg16"), "A-VGG16");
  EXPECT_THROW(canonical_arch_name("ResNet"), std::invalid_argument);
  EXPECT_THROW(build_spec("A-VGG7"), std::invalid_argument);
}

TEST(Arch, Avgg16TraceStages) {
  const auto trace = shape_trace(build_spec("A-VGG16"));
  bool saw_ap = false, saw_mp = false;
  for (const auto &e : trace) {
    if (e.label.rfind("AP4", 0) == 0) {
      EXPECT_EQ(e.out.h, 8u);
      saw_ap = true;
    }
    if (e.label.rfind("MP2", 0) == 0) {
      EXPECT_EQ(e.out.h, 4u);
      EXPECT_EQ(e.out.c, 512u);
      saw_mp = true;
    }
  }
  EXPECT_TRUE(saw_ap);
  EXPECT_TRUE(saw_mp);
}

TEST(Arch, ParamCounts) {
  // conv 456 + 2416, FC 48120 + 10164 + 850
  EXPECT_EQ(param_count(build_spec("LeNet5")), 62006u);

  ArchSpec fc_only;
  fc_only.in_channels = 2048;
  fc_only.in_height = fc_only.in_width = 1;
  fc_only.items = {FlattenItem{}, FcItem{10}, SoftmaxOutput{10}};
  EXPECT_EQ(param_count(fc_only), 20490u);

  EXPECT_LT(param_count(build_spec("A-VGG14")), param_count(build_spec("A-VGG16")));
}

TEST(Arch, UntraceableSpecsNameTheItem) {
  ArchSpec bad;
  bad.items = {ConvBlock{1, 8, 3, 1, true}, PoolItem{PoolingOp::max(7)}, FlattenItem{}, FcItem{10}};
  try {
    shape_trace(bad);
    FAIL() << "expected ShapeTraceError";
  } catch (const ShapeTraceError &e) {
    EXPECT_EQ(e.item(), 1u);
  }

  ArchSpec late_conv;
  late_conv.items = {FlattenItem{}, ConvBlock{}};
  EXPECT_THROW(shape_trace(late_conv), ShapeTraceError);
}

TEST(Arch, JsonRoundTrip) {
  for (const auto &name : arch_names()) {
    const auto spec = build_spec(name);
    EXPECT_EQ(arch_spec_from_json(to_json(spec)), spec) << name;
  }
}
