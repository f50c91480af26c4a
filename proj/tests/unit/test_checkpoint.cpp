#include <filesystem>

#include <gtest/gtest.h>

#include "spgrpo/checkpoint.hpp"
#include "spgrpo/errors.hpp"

using namespace spgrpo;
using namespace spgrpo::numerics;

namespace {

Checkpoint sample_checkpoint() {
  RandomSource rng(77);
  const std::vector<std::size_t> sizes{4, 6, 3};
  Checkpoint ck;
  ck.net = init_mlp(sizes, rng);
  ck.net.biases[0][2] = -0.125;
  ck.attributes = {{"frames", 8}, {"negative", -3}};
  DenseMatrix emb(2, 3);
  for (double& v : emb.data()) v = rng.normal();
  ck.tensors.emplace("embeddings", emb);
  return ck;
}

}  // namespace

TEST(Checkpoint, EncodeDecodeEncodeIsByteIdentical) {
  const auto ck = sample_checkpoint();
  const auto bytes = encode_checkpoint(ck);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back, ck);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto ck = sample_checkpoint();
  const auto path = std::filesystem::temp_directory_path() / "spgrpo_ck_roundtrip.bin";
  save_checkpoint(path, ck);
  EXPECT_EQ(load_checkpoint(path), ck);
  std::filesystem::remove(path);
}

TEST(Checkpoint, FlippedByteDetected) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(bytes), IoError);
}

TEST(Checkpoint, TruncationDetected) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  EXPECT_THROW(decode_checkpoint(std::string_view(bytes).substr(0, bytes.size() - 9)), IoError);
  EXPECT_THROW(decode_checkpoint(""), IoError);
}

TEST(Checkpoint, BadMagicDetected) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), IoError);
}

TEST(Checkpoint, MissingFileThrows) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/ck.bin"), IoError);
}
