#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "derm/checkpoint.hpp"
#include "derm/train.hpp"

using namespace derm;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ckpt;
  ckpt.config_text = "[train]\nseed = 1\n";
  ckpt.epoch = 3;
  ckpt.best_val_f1 = 0.75;
  ckpt.adam_t = 42;
  Rng rng(6);
  for (const char* name : {"theta.w", "phi.w", "omega.b"}) {
    Tensor<float> t({2, 3});
    for (auto& v : t.data) v = static_cast<float>(rng.gaussian());
    ckpt.tensors.emplace_back(name, t);
  }
  return ckpt;
}

}  // namespace

TEST_CASE("crc32 matches the reference value for 'itsy bitsy spider'") {
  const std::string s = "123456789";
  CHECK(crc32(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()) == 0xCBF43926u);
}

TEST_CASE("checkpoint encode/decode round-trips byte-identically") {
  const auto ckpt = sample_checkpoint();
  const auto bytes = encode_checkpoint(ckpt);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.config_text == ckpt.config_text);
  CHECK(back.epoch == ckpt.epoch);
  CHECK(back.best_val_f1 == ckpt.best_val_f1);
  CHECK(back.adam_t == ckpt.adam_t);
  REQUIRE(back.tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tensors[i].first == ckpt.tensors[i].first);
    CHECK(back.tensors[i].second.data == ckpt.tensors[i].second.data);
  }
  CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("every single-byte corruption is detected") {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto corrupted = bytes;
    const std::size_t pos = rng.next_below(bytes.size());
    corrupted[pos] ^= static_cast<std::uint8_t>(1 + rng.next_below(255));
    CHECK_THROWS_AS(decode_checkpoint(corrupted), CheckpointError);
  }
}

TEST_CASE("magic, version and truncation produce distinct errors") {
  auto bytes = encode_checkpoint(sample_checkpoint());

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad_magic), doctest::Contains("magic"), CheckpointError);

  // Version with a recomputed valid CRC, so only the version check can fire.
  auto bad_version = bytes;
  bad_version[4] = 2;
  const std::uint32_t crc = crc32(bad_version.data(), bad_version.size() - 4);
  for (int i = 0; i < 4; ++i)
    bad_version[bad_version.size() - 4 + i] = static_cast<std::uint8_t>((crc >> (8 * i)) & 0xff);
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad_version), doctest::Contains("version"),
                       CheckpointError);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_WITH_AS(decode_checkpoint(flipped), doctest::Contains("CRC"), CheckpointError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 8);
  CHECK_THROWS_AS(decode_checkpoint(truncated), CheckpointError);
}

TEST_CASE("file save/load round-trips and leaves no temp files") {
  const auto dir = std::filesystem::temp_directory_path() / "derm_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.ckpt").string();
  const auto ckpt = sample_checkpoint();
  save_checkpoint(ckpt, path);
  save_checkpoint(ckpt, path);  // overwrite is atomic
  CHECK(!std::filesystem::exists(path + ".tmp"));
  const auto back = load_checkpoint(path);
  CHECK(encode_checkpoint(back) == encode_checkpoint(ckpt));
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("applying a checkpoint enforces tensor names and shapes") {
  const auto ckpt = sample_checkpoint();
  Tensor<double> good({2, 3}), bad({3, 2}), unnamed({2, 3});
  NamedParams<double> ok{{"theta.w", &good}};
  apply_checkpoint(ckpt, ok);
  CHECK(good.data[0] == doctest::Approx(ckpt.tensors[0].second.data[0]));

  NamedParams<double> wrong_shape{{"theta.w", &bad}};
  CHECK_THROWS_WITH_AS(apply_checkpoint(ckpt, wrong_shape), doctest::Contains("theta.w"),
                       CheckpointError);
  NamedParams<double> missing{{"nope", &unnamed}};
  CHECK_THROWS_WITH_AS(apply_checkpoint(ckpt, missing), doctest::Contains("nope"),
                       CheckpointError);
}
