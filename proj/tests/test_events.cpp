#include <filesystem>
#include <random>

#include "doctest.h"
#include "stereospike/events.hpp"

using namespace stereospike;

namespace {

EventStream random_stream(std::uint64_t seed, std::size_t n, int h, int w) {
  std::mt19937_64 rng(seed);
  std::vector<Event> ev(n);
  Microseconds t = 0;
  for (Event& e : ev) {
    t += rng() % 50;
    e = {t, static_cast<std::uint16_t>(rng() % w), static_cast<std::uint16_t>(rng() % h),
         rng() % 2 ? Polarity::kOn : Polarity::kOff};
  }
  return EventStream(h, w, std::move(ev));
}

}  // namespace

TEST_CASE("stream construction validates order and bounds") {
  CHECK_THROWS_AS(EventStream(4, 4, {{10, 0, 0, Polarity::kOn}, {5, 0, 0, Polarity::kOn}}), std::invalid_argument);
  CHECK_THROWS_AS(EventStream(4, 4, {{1, 4, 0, Polarity::kOn}}), std::invalid_argument);
  CHECK_NOTHROW(EventStream(4, 4, {{1, 3, 3, Polarity::kOff}, {1, 0, 0, Polarity::kOn}}));
}

TEST_CASE("binning uses half-open windows and fixed channel order") {
  const EventStream s(2, 3,
                      {{99, 0, 0, Polarity::kOn},
                       {100, 1, 0, Polarity::kOn},
                       {150, 1, 0, Polarity::kOff},
                       {199, 2, 1, Polarity::kOn},
                       {200, 2, 1, Polarity::kOn}});
  const SpikeHistogram h = bin_events(s, 100, 100);
  CHECK(h.window_start == 100);
  CHECK(h.window_end == 200);
  CHECK(h.at(kOnChannel, 0, 0) == 0);
  CHECK(h.at(kOnChannel, 0, 1) == 1);
  CHECK(h.at(kOffChannel, 0, 1) == 1);
  CHECK(h.at(kOnChannel, 1, 2) == 1);
  int total = 0;
  for (auto c : h.counts) total += c;
  CHECK(total == 3);
  CHECK_THROWS(bin_events(s, 0, 0));
}

TEST_CASE("histogram counts saturate with an error rather than wrapping") {
  std::vector<Event> ev(70000, Event{5, 0, 0, Polarity::kOn});
  const EventStream s(1, 1, std::move(ev));
  CHECK_THROWS_AS(bin_events(s, 0, 10), std::overflow_error);
}

TEST_CASE("chunks concatenate contiguous windows channel-wise") {
  const EventStream s = random_stream(3, 2000, 5, 6);
  const InputChunk c = make_chunk(s, 1000, 4, 2500);
  CHECK(c.n_frames == 4);
  CHECK(c.channels() == 8);
  for (int k = 0; k < 4; ++k) {
    const SpikeHistogram h = bin_events(s, 1000 + k * 2500, 2500);
    for (int ch = 0; ch < 2; ++ch)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) CHECK(c.at(2 * k + ch, y, x) == h.at(ch, y, x));
  }
  CHECK_THROWS(make_chunk(s, 0, 0, 10));
}

TEST_CASE(".evt write and read are an identity") {
  const EventStream s = random_stream(9, 5000, 64, 64);
  const auto path = std::filesystem::temp_directory_path() / "stereospike_test_events.evt";
  write_evt(s, path);
  CHECK(read_evt(path) == s);
  CHECK(std::filesystem::file_size(path) == kEvtHeaderBytes + kEvtRecordBytes * s.size());
  std::filesystem::remove(path);
  CHECK(decode_evt(encode_evt(EventStream(3, 2, {}))) == EventStream(3, 2, {}));
}

TEST_CASE(".evt decoding rejects malformed input") {
  auto bytes = encode_evt(random_stream(1, 10, 8, 8));
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_evt(bytes), EventFormatError);
  }
  SUBCASE("unknown version") {
    bytes[4] = 9;
    CHECK_THROWS_AS(decode_evt(bytes), EventFormatError);
  }
  SUBCASE("truncated record") {
    bytes.pop_back();
    CHECK_THROWS_AS(decode_evt(bytes), EventFormatError);
  }
  SUBCASE("bad polarity") {
    bytes[kEvtHeaderBytes + 12] = 7;
    CHECK_THROWS_AS(decode_evt(bytes), EventFormatError);
  }
  SUBCASE("short header") {
    bytes.resize(8);
    CHECK_THROWS_AS(decode_evt(bytes), EventFormatError);
  }
}
