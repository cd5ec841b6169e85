#include <gtest/gtest.h>

#include <filesystem>

#include "baanet/serialization.hpp"
#include "test_util.hpp"

using namespace baanet;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("baanet_test_" + name);
}

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.step = 123;
  ck.params.add("a.w", test_support::random_tensor(Shape{2, 3, 3, 3}, 1));
  ck.params.add("a.b", test_support::random_tensor(Shape{2}, 2));
  ck.params.add("scalar", Tensor::scalar(0.25));
  round_to_storage_precision(ck.params);
  ck.config = R"({"seed": 4})";
  return ck;
}

}  // namespace

TEST(TensorFile, RoundTripAtFloatPrecision) {
  const auto path = temp_file("tensor.baat");
  Tensor t = test_support::random_tensor(Shape{3, 5, 7}, 3);
  save_tensor(path, t);
  const Tensor back = load_tensor(path);
  ASSERT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(t[i])));
  std::filesystem::remove(path);
}

TEST(TensorFile, LayoutIsLittleEndianFloat32) {
  ByteWriter w;
  write_tensor(w, Tensor(Shape{2}, std::vector<double>{1.0, -2.0}));
  const auto& b = w.buffer();
  ASSERT_EQ(b.size(), 4u + 2u + 1u + 4u + 8u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "BAAT");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[6], 1);
  EXPECT_EQ(static_cast<unsigned char>(b[7]), 2u);
  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(b[11]), 0x00u);
  EXPECT_EQ(static_cast<unsigned char>(b[14]), 0x3fu);
}

TEST(Checkpoint, RoundTripBitExact) {
  const Checkpoint ck = sample_checkpoint();
  const auto path = temp_file("ck.baac");
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_TRUE(back == ck);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
  std::filesystem::remove(path);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[4] = 7;
  try {
    (void)decode_checkpoint(bytes, "old.baac");
    FAIL();
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("version 7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("version 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("old.baac"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, CorruptInputsFailLoudly) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW((void)decode_checkpoint(bad_magic, "x"), IoError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW((void)decode_checkpoint(truncated, "x"), IoError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW((void)decode_checkpoint(trailing, "x"), IoError);
}

TEST(Checkpoint, MissingFileNamesPath) {
  try {
    (void)load_checkpoint("/nonexistent/dir/model.baac");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/model.baac"), std::string::npos);
  }
}

TEST(Checkpoint, StoragePrecisionRoundingIsIdempotent) {
  ParamStore p;
  p.add("x", test_support::random_tensor(Shape{16}, 4));
  round_to_storage_precision(p);
  const ParamStore once = p;
  round_to_storage_precision(p);
  EXPECT_TRUE(p == once);
}
