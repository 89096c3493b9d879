#include <cmath>
#include <stdexcept>

#include "doctest.h"

#include "cloneforge/encoder.hpp"
#include "test_support.hpp"

using namespace cloneforge;

namespace {

EncoderConfig config_with(int d, std::uint64_t seed = 3) {
  EncoderConfig c;
  c.embed_dim = d;
  c.seed = seed;
  return c;
}

bool same_parameters(const CloneEncoder& a, const CloneEncoder& b) {
  const auto pa = a.all_parameters(), pb = b.all_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->value.shape != pb[i]->value.shape || pa[i]->value.data != pb[i]->value.data) return false;
  return true;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("parameter count at d = 128 by summation") {
    const std::int64_t expected = (3 * 32 * 25 + 32) + (32 * 64 * 25 + 64) + (64 * 128 * 25 + 128) +
                                  (128 * 128 + 128) + 1;
    CHECK(expected == 275137);
    CloneEncoder enc(config_with(128));
    CHECK(enc.trainable_scalar_count() == expected);
    std::int64_t summed = 0;
    for (const Param* p : enc.trainable_parameters()) summed += p->value.numel();
    CHECK(summed == expected);
  }

  TEST_CASE("d = 64 projection size; fixed mode drops the raw margin") {
    CloneEncoder enc(config_with(64));
    CHECK(enc.fc_weight.value.numel() + enc.fc_bias.value.numel() == 128 * 64 + 64);
    EncoderConfig fixed = config_with(128);
    fixed.margin_mode = MarginMode::fixed;
    CloneEncoder f(fixed);
    CHECK(f.trainable_scalar_count() == 275136);
    for (const Param* p : f.trainable_parameters()) CHECK(p != &f.raw_margin);
  }

  TEST_CASE("init: fan-in uniform bounds, zero biases, deterministic") {
    CloneEncoder a(config_with(128, 9)), b(config_with(128, 9)), c(config_with(128, 10));
    CHECK(same_parameters(a, b));
    CHECK_FALSE(same_parameters(a, c));
    const double bound1 = 1.0 / std::sqrt(3.0 * 25.0);
    for (float v : a.conv1_weight.value.data) CHECK(std::abs(v) <= bound1);
    const double bound_fc = 1.0 / std::sqrt(128.0);
    for (float v : a.fc_weight.value.data) CHECK(std::abs(v) <= bound_fc);
    for (const Param* p : {&a.conv1_bias, &a.conv2_bias, &a.conv3_bias, &a.fc_bias})
      for (float v : p->value.data) CHECK(v == 0.f);
    CHECK(a.raw_margin.value.data[0] == 0.f);
  }

  TEST_CASE("margin: ln 2 when learned from scratch, exact when fixed") {
    CloneEncoder learned(config_with(128));
    CHECK(learned.margin() == doctest::Approx(std::log(2.0)).epsilon(1e-7));
    EncoderConfig fc = config_with(128);
    fc.margin_mode = MarginMode::fixed;
    fc.fixed_margin = 0.5f;
    CloneEncoder fixed(fc);
    CHECK(fixed.margin() == 0.5f);
    fixed.accumulate_margin_grad(1.f);
    CHECK(fixed.raw_margin.grad.data[0] == 0.f);
  }

  TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(CloneEncoder(config_with(0)), std::invalid_argument);
    EncoderConfig fc = config_with(128);
    fc.margin_mode = MarginMode::fixed;
    fc.fixed_margin = 0.f;
    CHECK_THROWS_AS(CloneEncoder{fc}, std::invalid_argument);
  }

  TEST_CASE("forward shape law and spatial sizes") {
    CloneEncoder enc(config_with(64));
    Rng rng(1);
    const Tensor x = testsupport::random_tensor<float>({3, 3, 32, 32}, rng, 0, 1);
    CloneEncoder::Activations act;
    const Tensor z = enc.forward(x, act);
    CHECK(z.shape == Shape{3, 64});
    CHECK(act.conv1.shape == Shape{3, 32, 16, 16});
    CHECK(act.conv2.shape == Shape{3, 64, 8, 8});
    CHECK(act.conv3.shape == Shape{3, 128, 4, 4});
    CHECK_THROWS_AS(enc.forward(Tensor({1, 3, 16, 16})), std::invalid_argument);
  }

  TEST_CASE("zero image with zero biases embeds to zero") {
    CloneEncoder enc(config_with(128));
    const Tensor z = enc.forward(Tensor({2, 3, 32, 32}));
    for (float v : z.data) CHECK(v == 0.f);
  }

  TEST_CASE("forward is batch-independent") {
    CloneEncoder enc(config_with(128));
    Rng rng(5);
    const Tensor a = testsupport::random_tensor<float>({2, 3, 32, 32}, rng, 0, 1);
    const Tensor b = testsupport::random_tensor<float>({3, 3, 32, 32}, rng, 0, 1);
    Tensor ab({5, 3, 32, 32});
    std::copy(a.data.begin(), a.data.end(), ab.data.begin());
    std::copy(b.data.begin(), b.data.end(), ab.data.begin() + a.numel());
    const Tensor za = enc.forward(a), zb = enc.forward(b), zab = enc.forward(ab);
    for (std::size_t i = 0; i < za.data.size(); ++i) CHECK(std::abs(za.data[i] - zab.data[i]) < 1e-6);
    for (std::size_t i = 0; i < zb.data.size(); ++i)
      CHECK(std::abs(zb.data[i] - zab.data[za.data.size() + i]) < 1e-6);
  }

  TEST_CASE("latent norms recompute from the embedding") {
    CloneEncoder enc(config_with(128));
    Rng rng(6);
    const Tensor x = testsupport::random_tensor<float>({4, 3, 32, 32}, rng, 0, 1);
    const Tensor z = enc.forward(x);
    const Tensor n = enc.latent_norms(x);
    for (std::int64_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::int64_t j = 0; j < 128; ++j) s += double(z.data[i * 128 + j]) * z.data[i * 128 + j];
      CHECK(n.data[i] >= 0.f);
      CHECK(std::abs(n.data[i] - std::sqrt(s)) < 1e-5);
    }
  }

  TEST_CASE("model file round trip with and without an operating point") {
    testsupport::TempDir dir;
    EncoderConfig cfg = config_with(64, 77);
    cfg.margin_mode = MarginMode::fixed;
    cfg.fixed_margin = 0.5f;
    CloneEncoder enc(cfg);
    enc.fc_bias.value.data[3] = 0.25f;

    save_encoder(dir / "a.cfe", enc);
    const auto plain = load_encoder(dir / "a.cfe");
    CHECK_FALSE(plain.operating_point.has_value());
    CHECK(same_parameters(enc, plain.encoder));
    CHECK(plain.encoder.config().margin_mode == MarginMode::fixed);
    CHECK(plain.encoder.margin() == 0.5f);

    save_encoder(dir / "b.cfe", enc, OperatingPoint{1.f, 0.5f, 1.5f});
    const auto withop = load_encoder(dir / "b.cfe");
    REQUIRE(withop.operating_point.has_value());
    CHECK(withop.operating_point->tau == 1.5f);
    CHECK(std::filesystem::file_size(dir / "b.cfe") == std::filesystem::file_size(dir / "a.cfe") + 12);

    // Header layout: magic, version, d, margin mode.
    const std::string bytes = [&] {
      std::ifstream is(dir / "a.cfe", std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(is), {});
    }();
    CHECK(bytes.substr(0, 4) == "CFE1");
    CHECK(static_cast<unsigned char>(bytes[8]) == 64);
    CHECK(static_cast<unsigned char>(bytes[12]) == 1);
  }

  TEST_CASE("corrupt model files are rejected") {
    testsupport::TempDir dir;
    {
      std::ofstream os(dir / "bad.cfe", std::ios::binary);
      os << "XXXX";
    }
    CHECK_THROWS(load_encoder(dir / "bad.cfe"));
    CloneEncoder enc(config_with(64));
    save_encoder(dir / "t.cfe", enc);
    std::filesystem::resize_file(dir / "t.cfe", std::filesystem::file_size(dir / "t.cfe") - 7);
    CHECK_THROWS(load_encoder(dir / "t.cfe"));
  }
}
