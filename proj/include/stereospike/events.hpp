#pragma once

// DVS event streams and their conversion into spike histograms.
//
// Histogram channel order is fixed: channel 0 counts ON events, channel 1
// counts OFF events. Binning windows are half-open, [t0, t0 + dt).

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace stereospike {

using Microseconds = std::uint64_t;

enum class Polarity : std::uint8_t { kOff = 0, kOn = 1 };

inline constexpr int kOnChannel = 0;
inline constexpr int kOffChannel = 1;

struct Event {
  Microseconds t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Polarity polarity = Polarity::kOn;

  friend bool operator==(const Event&, const Event&) = default;
};

class EventStream {
 public:
  EventStream() = default;
  // Throws std::invalid_argument if events are unsorted or out of bounds.
  EventStream(int height, int width, std::vector<Event> events);

  int height() const { return height_; }
  int width() const { return width_; }
  std::span<const Event> events() const { return events_; }
  std::size_t size() const { return events_.size(); }

  friend bool operator==(const EventStream&, const EventStream&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Event> events_;
};

// Per-polarity event counts, shape (2, H, W).
struct SpikeHistogram {
  int height = 0;
  int width = 0;
  Microseconds window_start = 0;
  Microseconds window_end = 0;
  std::vector<std::uint16_t> counts;

  std::uint16_t at(int channel, int y, int x) const {
    return counts[(static_cast<std::size_t>(channel) * height + y) * width + x];
  }
};

// n histograms concatenated channel-wise, shape (2n, H, W). Raw counts.
struct InputChunk {
  int n_frames = 0;
  int height = 0;
  int width = 0;
  Microseconds frame_length = 0;
  std::vector<std::uint16_t> data;

  int channels() const { return 2 * n_frames; }
  double window_length_ms() const { return static_cast<double>(frame_length) / 1000.0; }
  std::uint16_t at(int channel, int y, int x) const {
    return data[(static_cast<std::size_t>(channel) * height + y) * width + x];
  }
};

SpikeHistogram bin_events(const EventStream& stream, Microseconds t0, Microseconds dt);

// Windows [t0 + k*dt, t0 + (k+1)*dt) for k = 0..n-1, contiguous.
InputChunk make_chunk(const EventStream& stream, Microseconds t0, int n, Microseconds dt);

class EventFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// `.evt` layout, little-endian:
//   header (16 bytes): "EVTS", version u16, H u16, W u16, 6 reserved zero bytes
//   records (14 bytes each, sorted by t): t u64, x u16, y u16, p u8, pad u8
// The record count is implied by the file length.
inline constexpr std::uint16_t kEvtVersion = 1;
inline constexpr std::size_t kEvtHeaderBytes = 16;
inline constexpr std::size_t kEvtRecordBytes = 14;

std::vector<std::uint8_t> encode_evt(const EventStream& stream);
EventStream decode_evt(std::span<const std::uint8_t> bytes);
void write_evt(const EventStream& stream, const std::filesystem::path& path);
EventStream read_evt(const std::filesystem::path& path);

}  // namespace stereospike
