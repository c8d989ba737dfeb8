#include <filesystem>
#include <fstream>

#include "../support/model_gradcheck.hpp"
#include "doctest.h"
#include "dprobe/errors.hpp"
#include "dprobe/lm/backend.hpp"
#include "dprobe/lm/checkpoint.hpp"
#include "dprobe/lm/mock_backend.hpp"
#include "dprobe/lm/vocab.hpp"

using namespace dprobe;
using namespace dprobe::lm;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.width = 16;
  c.context_length = 48;
  return c;
}

std::shared_ptr<const ModelCheckpoint> tiny_checkpoint(std::uint64_t seed = 3) {
  return std::make_shared<const ModelCheckpoint>(
      ModelCheckpoint{Transformer(tiny_config(), seed), Vocab::standard(), {"unit", seed, 0, "tiny"}});
}

}  // namespace

TEST_CASE("standard vocabulary round-trips text") {
  const auto v = Vocab::standard();
  CHECK(v.size() == 16);
  for (unsigned d = 0; d < 10; ++d) CHECK(v.digit_of(v.digit_id(d)) == d);
  const std::string text = "111*472=52392. 592*392=";
  CHECK(v.decode(v.encode(text)) == text);
  CHECK_FALSE(v.digit_of(v.end_id()).has_value());
  try {
    v.encode("12+3");
    FAIL("expected VocabularyError");
  } catch (const VocabularyError& e) {
    CHECK(std::string(e.what()).find('+') != std::string::npos);
  }
  CHECK_THROWS_AS(Vocab({"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "12", "<end>", "<pad>"}), VocabularyError);
  CHECK_THROWS_AS(Vocab({"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "*"}), VocabularyError);
}

TEST_CASE("model config validation") {
  ModelConfig c = tiny_config();
  c.width = 15;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = tiny_config();
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("forward is deterministic and dropout-off ignores the pass seed") {
  ModelBackend backend(tiny_checkpoint());
  const auto ctx = Vocab::standard().encode("12*34=408. 56*78=");
  const auto a = backend.forward(ctx, {1, 0, false});
  const auto b = backend.forward(ctx, {999, 5, false});
  CHECK(a.probabilities == b.probabilities);
  const auto c = backend.forward(ctx, {7, 0, true, 0.3});
  const auto d = backend.forward(ctx, {7, 0, true, 0.3});
  CHECK(c.probabilities == d.probabilities);
  const auto e = backend.forward(ctx, {8, 0, true, 0.3});
  CHECK(c.probabilities != e.probabilities);
  double total = 0.0;
  for (double p : a.probabilities) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("causality: later tokens never change earlier distributions") {
  ModelBackend backend(tiny_checkpoint(11));
  auto ctx = Vocab::standard().encode("12*34=408. 56*78=4368");
  for (bool active : {false, true}) {
    const PassContext pass{42, 0, active, 0.1};
    const auto base = backend.all_positions(ctx, pass);
    for (std::size_t t = 1; t < ctx.size(); t += 3) {
      auto changed = ctx;
      changed[t] = changed[t] == 3 ? 4 : 3;
      const auto after = backend.all_positions(changed, pass);
      for (std::size_t s = 0; s < t; ++s) REQUIRE(after[s] == base[s]);
    }
  }
}

TEST_CASE("greedy generate stops at END and reports capacity overflow") {
  ModelConfig c = tiny_config();
  c.context_length = 20;
  auto ckpt = std::make_shared<const ModelCheckpoint>(ModelCheckpoint{Transformer(c, 1), Vocab::standard(), {}});
  ModelBackend backend(ckpt);
  const auto ctx = Vocab::standard().encode("12*34=408. 56*78=");  // 17 tokens
  const auto out = backend.greedy_generate(ctx, {}, 2);
  CHECK(out.size() <= 2);
  try {
    backend.greedy_generate(ctx, {}, 10);
  } catch (const CapacityError& e) {
    CHECK(e.partial_output().size() >= 3);
  }
  const auto too_long = Vocab::standard().encode("12*34=408. 56*78=4368. 11*");
  CHECK_THROWS_AS(backend.forward(too_long, {}), CapacityError);
  CHECK_THROWS_AS(backend.forward(std::vector<TokenId>{}, {}), ParameterError);
}

TEST_CASE("full two-layer decoder gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto c = testing::make_model_case(seed);
    CHECK(testing::model_gradcheck(c) < 1e-4);
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  const auto ckpt = tiny_checkpoint(5);
  const auto bytes = serialize_checkpoint(*ckpt);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.model.config() == ckpt->model.config());
  CHECK(back.vocab == ckpt->vocab);
  CHECK(back.provenance == ckpt->provenance);
  REQUIRE(back.model.parameters().size() == ckpt->model.parameters().size());
  for (std::size_t i = 0; i < back.model.parameters().size(); ++i) {
    CHECK(back.model.parameters()[i].name == ckpt->model.parameters()[i].name);
    CHECK(numerics::bitwise_equal(back.model.parameters()[i].value, ckpt->model.parameters()[i].value));
  }
  CHECK(serialize_checkpoint(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "dprobe_unit.ckpt";
  save_checkpoint(*ckpt, path);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("damaged checkpoints are rejected with specific errors") {
  const auto bytes = serialize_checkpoint(*tiny_checkpoint(6));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, std::size_t{40}, bytes.size() / 2,
                          bytes.size() - 1}) {
    CHECK_THROWS_AS(deserialize_checkpoint(std::string_view(bytes).substr(0, cut)), CheckpointError);
  }
  CHECK_THROWS_AS(deserialize_checkpoint(std::string_view(bytes).substr(0, bytes.size() / 2)),
                  CheckpointTruncatedError);

  auto flipped = bytes;
  flipped[bytes.size() - 100] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), CheckpointIntegrityError);

  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(version), CheckpointVersionError);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), CheckpointHeaderError);

  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), CheckpointError);
}

TEST_CASE("mock backend follows its script") {
  auto script = MockScript::parse(R"({"passes": [
      {"repeat": 2, "emit": "232064"},
      {"repeat": 1, "emit": "23"},
      {"repeat": 1, "oracle": true, "perturb": [-1]},
      {"repeat": 1, "oracle": true, "truncate": 4}]})");
  MockBackend mock(script);
  const auto& v = mock.vocab();
  const auto ctx = v.encode("111*472=52392. 362*194=70228. 592*392=");
  auto gen = [&](std::size_t k, bool active = true) {
    return v.decode(mock.greedy_generate(ctx, {k, k, active}, 10));
  };
  CHECK(gen(0) == "232064<end>");
  CHECK(gen(1) == "232064<end>");
  CHECK(gen(2) == "23<end>");
  CHECK(gen(3) == "232065<end>");
  CHECK(gen(4) == "2320<end>");
  CHECK(gen(2, false) == "232064<end>");
  CHECK_THROWS_AS(gen(5), ScriptExhaustedError);

  // Conditional context: entry k continues after the given prefix.
  const auto cond = v.encode("111*472=52392. 362*194=70228. 592*392=23206");
  CHECK(mock.forward(cond, {3, 3, true}).argmax_id == v.digit_id(5));
  CHECK(mock.forward(cond, {0, 0, true}).argmax_id == v.digit_id(4));

  CHECK_THROWS_AS(MockScript::parse("{\"passes\": 3}"), ConsistencyError);
}
