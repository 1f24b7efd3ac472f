// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "mtlasd/config.hpp"
#include "mtlasd/error.hpp"

using namespace mtlasd;

TEST_SUITE("config") {

TEST_CASE("full preset defaults") {
  const Config c = Config::full();
  CHECK(c.encoder.n_blocks == 3);
  CHECK(c.encoder.ffn_units == 512);
  CHECK(c.encoder.attention_heads == 4);
  CHECK(c.encoder.model_dim == 128);
  CHECK(c.encoder.pooled_dim == 64);
  CHECK_FALSE(c.encoder.positional_encoding);
  CHECK(c.heads.arc_scale == 16.0);
  CHECK(c.heads.arc_margin == 1.28);
  CHECK(c.heads.alpha == 1.0);
  CHECK(c.heads.beta == 1.0);
  CHECK(c.train.stage1_epochs == 80);
  CHECK(c.train.stage2_epochs == 40);
  CHECK(c.train.batch_size == 28);
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.frontend.n_mels == 128);
  CHECK(c.frontend.fft_size == 1024);
  CHECK(c.frontend.hop == 512);
  CHECK_NOTHROW(c.validate());
  const Config t = Config::tiny();
  CHECK(t.encoder.n_blocks == 1);
  CHECK(t.encoder.model_dim == 16);
  CHECK_NOTHROW(t.validate());
  CHECK_THROWS_AS(Config::preset("huge"), Error);
}

TEST_CASE("key-value documents parse comments and both separators") {
  const KeyValues kv = parse_key_values("# header\nencoder.n_blocks = 2\n\nheads.alpha: 0.5  # inline\n");
  CHECK(kv.at("encoder.n_blocks") == "2");
  CHECK(kv.at("heads.alpha") == "0.5");
  CHECK(kv.size() == 2);
  CHECK_THROWS_AS(parse_key_values("no separator here"), Error);
}

TEST_CASE("apply overrides fields and round-trips through key values") {
  Config c;
  c.apply({{"encoder.conv_norm", "layer"},
           {"heads.reduction", "mean"},
           {"train.seed", "18446744073709551615"},
           {"augment.kinds", "1,7,8"},
           {"hop", "256"}});
  CHECK(c.encoder.conv_norm == ConvNorm::kLayer);
  CHECK(c.heads.reduction == Reduction::kMean);
  CHECK(c.train.seed == 18446744073709551615ULL);
  CHECK(c.augment.kinds == std::vector<int>{1, 7, 8});
  CHECK(c.frontend.hop == 256);
  Config d;
  d.apply(c.to_key_values());
  CHECK(d.to_key_values() == c.to_key_values());
  CHECK(format_key_values(c.to_key_values()).find("heads.reduction = mean") != std::string::npos);
}

TEST_CASE("invalid values are rejected") {
  Config c;
  CHECK_THROWS_AS(c.apply({{"encoder.bogus", "1"}}), Error);
  CHECK_THROWS_AS(c.apply({{"encoder.n_blocks", "three"}}), Error);
  CHECK_THROWS_AS(c.apply({{"encoder.conv_norm", "group"}}), Error);
  auto invalid = [](const KeyValues& kv) {
    Config x;
    x.apply(kv);
    x.validate();
  };
  CHECK_THROWS_AS(invalid({{"encoder.attention_heads", "3"}}), Error);
  CHECK_THROWS_AS(invalid({{"encoder.conv_kernel", "4"}}), Error);
  CHECK_THROWS_AS(invalid({{"encoder.positional_encoding", "true"}}), Error);
  CHECK_THROWS_AS(invalid({{"heads.arc_margin", "3.2"}}), Error);
  CHECK_THROWS_AS(invalid({{"heads.alpha", "-1"}}), Error);
  CHECK_THROWS_AS(invalid({{"train.batch_size", "27"}}), Error);
  CHECK_THROWS_AS(invalid({{"augment.kinds", "9"}}), Error);
  CHECK_THROWS_AS(invalid({{"n_mels", "64"}}), Error);  // stem width must match
}

}
