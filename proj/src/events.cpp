#include "stereospike/events.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "binary_io.hpp"

namespace stereospike {

EventStream::EventStream(int height, int width, std::vector<Event> events)
    : height_(height), width_(width), events_(std::move(events)) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("event stream geometry must be positive");
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const Event& e = events_[i];
    if (e.x >= width_ || e.y >= height_) {
      throw std::invalid_argument("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                                  std::to_string(e.y) + ") outside " + std::to_string(width_) + "x" +
                                  std::to_string(height_));
    }
    if (i > 0 && e.t < events_[i - 1].t) {
      throw std::invalid_argument("events not sorted by timestamp at index " + std::to_string(i));
    }
  }
}

namespace {

void accumulate_window(const EventStream& stream, Microseconds t0, Microseconds dt, std::uint16_t* out) {
  const auto events = stream.events();
  const auto by_time = [](const Event& e, Microseconds t) { return e.t < t; };
  const auto first = std::lower_bound(events.begin(), events.end(), t0, by_time);
  const auto last = std::lower_bound(first, events.end(), t0 + dt, by_time);
  const std::size_t plane = static_cast<std::size_t>(stream.height()) * stream.width();
  for (auto it = first; it != last; ++it) {
    const int channel = it->polarity == Polarity::kOn ? kOnChannel : kOffChannel;
    std::uint16_t& c = out[channel * plane + static_cast<std::size_t>(it->y) * stream.width() + it->x];
    if (c == std::numeric_limits<std::uint16_t>::max()) {
      throw std::overflow_error("spike histogram count overflow");
    }
    ++c;
  }
}

}  // namespace

SpikeHistogram bin_events(const EventStream& stream, Microseconds t0, Microseconds dt) {
  if (dt == 0) throw std::invalid_argument("bin_events: dt must be > 0");
  SpikeHistogram h;
  h.height = stream.height();
  h.width = stream.width();
  h.window_start = t0;
  h.window_end = t0 + dt;
  h.counts.assign(2 * static_cast<std::size_t>(h.height) * h.width, 0);
  accumulate_window(stream, t0, dt, h.counts.data());
  return h;
}

InputChunk make_chunk(const EventStream& stream, Microseconds t0, int n, Microseconds dt) {
  if (n < 1) throw std::invalid_argument("make_chunk: n must be >= 1");
  if (dt == 0) throw std::invalid_argument("make_chunk: dt must be > 0");
  InputChunk c;
  c.n_frames = n;
  c.height = stream.height();
  c.width = stream.width();
  c.frame_length = dt;
  const std::size_t frame = 2 * static_cast<std::size_t>(c.height) * c.width;
  c.data.assign(frame * n, 0);
  for (int k = 0; k < n; ++k) {
    accumulate_window(stream, t0 + static_cast<Microseconds>(k) * dt, dt, c.data.data() + frame * k);
  }
  return c;
}

std::vector<std::uint8_t> encode_evt(const EventStream& stream) {
  io::ByteWriter w;
  w.bytes().reserve(kEvtHeaderBytes + kEvtRecordBytes * stream.size());
  w.raw("EVTS");
  w.u16(kEvtVersion);
  w.u16(static_cast<std::uint16_t>(stream.height()));
  w.u16(static_cast<std::uint16_t>(stream.width()));
  for (int i = 0; i < 6; ++i) w.u8(0);
  for (const Event& e : stream.events()) {
    w.u64(e.t);
    w.u16(e.x);
    w.u16(e.y);
    w.u8(static_cast<std::uint8_t>(e.polarity));
    w.u8(0);
  }
  return std::move(w.bytes());
}

EventStream decode_evt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kEvtHeaderBytes) throw EventFormatError("evt: file shorter than header");
  io::ByteReader r(bytes, "evt");
  if (r.raw(4) != "EVTS") throw EventFormatError("evt: bad magic");
  const std::uint16_t version = r.u16();
  if (version != kEvtVersion) {
    throw EventFormatError("evt: unsupported version " + std::to_string(version));
  }
  const int height = r.u16();
  const int width = r.u16();
  r.raw(6);
  if (r.remaining() % kEvtRecordBytes != 0) {
    throw EventFormatError("evt: payload is not a whole number of records");
  }
  std::vector<Event> events(r.remaining() / kEvtRecordBytes);
  for (Event& e : events) {
    e.t = r.u64();
    e.x = r.u16();
    e.y = r.u16();
    const std::uint8_t p = r.u8();
    if (p > 1) throw EventFormatError("evt: invalid polarity byte");
    e.polarity = static_cast<Polarity>(p);
    r.u8();
  }
  try {
    return EventStream(height, width, std::move(events));
  } catch (const std::invalid_argument& ex) {
    throw EventFormatError(std::string("evt: ") + ex.what());
  }
}

void write_evt(const EventStream& stream, const std::filesystem::path& path) {
  io::write_file(path, encode_evt(stream));
}

EventStream read_evt(const std::filesystem::path& path) {
  return decode_evt(io::read_file(path));
}

}  // namespace stereospike
