#include <gtest/gtest.h>

#include <random>

#include "gridfarm/wire.hpp"

using namespace gridfarm;
using namespace gridfarm::wire;

TEST(Wire, HeaderIsBigEndianLength) {
  const auto f = encode_frame(std::string(258, 'x'));
  ASSERT_EQ(f.size(), 262u);
  EXPECT_EQ(static_cast<unsigned char>(f[0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(f[1]), 0);
  EXPECT_EQ(static_cast<unsigned char>(f[2]), 1);
  EXPECT_EQ(static_cast<unsigned char>(f[3]), 2);
}

TEST(Wire, EncodeDecodeEveryKind) {
  for (auto k : kAllKinds) {
    FrameDecoder dec;
    dec.feed(encode(k, "abcd", {{"task_id", 9}}));
    std::string payload;
    ASSERT_EQ(dec.next(payload), FrameDecoder::Status::Frame);
    const auto m = decode_body(payload);
    EXPECT_EQ(m.kind, k);
    EXPECT_EQ(m.session, "abcd");
    EXPECT_EQ(m.body.at("task_id"), 9);
    EXPECT_EQ(parse_kind(to_string(k)), k);
  }
  EXPECT_FALSE(parse_kind("register"));
}

TEST(Wire, ByteAtATimeFeedReassemblesFrames) {
  std::string stream;
  for (int i = 0; i < 50; ++i) stream += encode(Kind::Heartbeat, "s", {{"i", i}});
  std::mt19937 rng(3);
  FrameDecoder dec;
  std::vector<int> got;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    const std::size_t n = std::min<std::size_t>(1 + rng() % 7, stream.size() - pos);
    dec.feed(stream.data() + pos, n);
    pos += n;
    std::string payload;
    while (dec.next(payload) == FrameDecoder::Status::Frame) got.push_back(decode_body(payload).body.at("i"));
  }
  ASSERT_EQ(got.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(got[i], i);
  EXPECT_EQ(dec.buffered(), 0u);
}

TEST(Wire, OversizeFramePoisonsDecoder) {
  FrameDecoder dec(16);
  dec.feed(encode_frame(std::string(17, 'a')));
  std::string payload;
  EXPECT_EQ(dec.next(payload), FrameDecoder::Status::Oversize);
  dec.feed(encode(Kind::Heartbeat));
  EXPECT_EQ(dec.next(payload), FrameDecoder::Status::Oversize);
}

TEST(Wire, FrameAtLimitIsAccepted) {
  FrameDecoder dec(16);
  dec.feed(encode_frame(std::string(16, 'a')));
  std::string payload;
  EXPECT_EQ(dec.next(payload), FrameDecoder::Status::Frame);
  EXPECT_EQ(payload.size(), 16u);
}

TEST(Wire, DecodeBodyRejectsMalformed) {
  EXPECT_THROW(decode_body("not json"), ProtocolError);
  EXPECT_THROW(decode_body("[1,2]"), ProtocolError);
  EXPECT_THROW(decode_body("{}"), ProtocolError);
  EXPECT_THROW(decode_body(R"({"kind":7})"), ProtocolError);
  EXPECT_THROW(decode_body(R"({"kind":"TELEPORT"})"), ProtocolError);
  EXPECT_THROW(decode_body(R"({"kind":"HEARTBEAT","session":12})"), ProtocolError);
  EXPECT_NO_THROW(decode_body(R"({"kind":"HEARTBEAT"})"));
}

TEST(Wire, ScoreHexRoundTrip) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng();
    const auto s = score_to_hex(v);
    EXPECT_EQ(s.size(), 16u);
    EXPECT_EQ(score_from_hex(s), v);
  }
  EXPECT_EQ(score_from_hex("FF"), 255u);
  EXPECT_FALSE(score_from_hex(""));
  EXPECT_FALSE(score_from_hex("0123456789abcdef0"));
  EXPECT_FALSE(score_from_hex("12g4"));
}
