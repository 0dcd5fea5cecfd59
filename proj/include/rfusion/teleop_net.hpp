#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rfusion/depth_fusion.hpp"
#include "rfusion/rigid_transform.hpp"

namespace rfusion {

// ---------------------------------------------------------------------------
// Binary frame format

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PayloadKind : std::uint8_t { kDisparityRgb = 1, kFusedPng = 2 };

/// Fixed 27-byte little-endian header:
///   0  magic "RFN1"         4 bytes
///   4  seq                  u64
///   12 capture timestamp    u48 microseconds
///   18 width                u16
///   20 height               u16
///   22 payload kind         u8
///   23 payload length       u32
struct FrameWireHeader {
  static constexpr std::size_t kSize = 27;
  static constexpr std::uint64_t kMaxTimestamp = (std::uint64_t{1} << 48) - 1;

  std::uint64_t seq = 0;
  std::uint64_t capture_timestamp_us = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  PayloadKind kind = PayloadKind::kDisparityRgb;
  std::uint32_t payload_length = 0;

  bool operator==(const FrameWireHeader&) const = default;
};

void encode_header(const FrameWireHeader& h, std::uint8_t* out);
/// Throws WireError on a short buffer, wrong magic or unknown payload kind.
FrameWireHeader decode_header(std::span<const std::uint8_t> bytes);

/// Disparity step on the wire, in pixels.
inline constexpr float kDisparityQuantum = 1.0f / 256.0f;

/// Nearest representable wire disparity (saturates at 65535/256).
float quantize_disparity(float d);

/// DISPARITY_RGB payload: W*H u16 disparity (1/256 px units, row-major), then
/// W*H*3 u8 RGB. The capture pose is not carried (it travels on the control
/// channel). Throws std::invalid_argument for an invalid frame or one whose
/// size or timestamp exceeds the header fields.
std::vector<std::uint8_t> encode_frame(const DepthFrame& frame);

/// Throws WireError on magic mismatch, length mismatch or truncation; never
/// returns a partial frame.
DepthFrame decode_frame(std::span<const std::uint8_t> bytes);

/// FUSED_PNG message: header followed by a PNG image of the fused view.
std::vector<std::uint8_t> encode_png_message(std::uint64_t seq, std::uint64_t timestamp_us, int width, int height,
                                             std::span<const std::uint8_t> png);
/// Returns the header and a view of the PNG bytes inside `bytes`.
std::pair<FrameWireHeader, std::span<const std::uint8_t>> decode_png_message(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Link model and frame channel

/// One-way delay distribution of the frame link.
struct LinkModel {
  double one_way_delay_mean_ms = 0.0;
  double jitter_std_ms = 0.0;
  double loss_rate = 0.0;
  std::uint64_t seed = 0;

  /// Values calibrated so that the default capture/present pipeline measures
  /// a motion-to-photon latency of 153.47 +- 33.33 ms (see calibrate_link).
  static LinkModel Calibrated(std::uint64_t seed = 1);

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Per-datagram loss and delay draws, in send order.
class LinkSampler {
 public:
  explicit LinkSampler(const LinkModel& link);

  struct Draw {
    bool lost = false;
    std::uint64_t delay_us = 0;
  };
  Draw next();

 private:
  LinkModel link_;
  std::mt19937_64 rng_;
};

struct ChannelStats {
  std::uint64_t sent = 0;
  std::uint64_t lost = 0;
  std::uint64_t stale_dropped = 0;
  std::uint64_t delivered = 0;
};

template <typename Payload>
struct Delivered {
  std::uint64_t seq = 0;
  std::uint64_t sent_us = 0;
  std::uint64_t arrival_us = 0;
  Payload payload;
};

namespace detail {

template <typename Payload>
struct FrameChannelState {
  explicit FrameChannelState(const LinkModel& link) : sampler(link) {}

  std::mutex mutex;
  LinkSampler sampler;
  std::uint64_t order = 0;
  struct InFlight {
    std::uint64_t arrival_us;
    std::uint64_t order;
    Delivered<Payload> item;
  };
  std::vector<InFlight> in_flight;
  std::optional<std::uint64_t> last_delivered;
  ChannelStats stats;
};

}  // namespace detail

/// Datagram sender: each send samples loss and delay from the link model.
template <typename Payload>
class FrameSender {
 public:
  explicit FrameSender(std::shared_ptr<detail::FrameChannelState<Payload>> s) : state_(std::move(s)) {}

  void send(std::uint64_t seq, Payload payload, std::uint64_t now_us) {
    std::lock_guard lock(state_->mutex);
    const auto draw = state_->sampler.next();
    ++state_->stats.sent;
    if (draw.lost) {
      ++state_->stats.lost;
      return;
    }
    const std::uint64_t arrival = now_us + draw.delay_us;
    state_->in_flight.push_back({arrival, state_->order++, {seq, now_us, arrival, std::move(payload)}});
  }

 private:
  std::shared_ptr<detail::FrameChannelState<Payload>> state_;
};

/// Datagram receiver with stale-drop: arrivals are processed in arrival order
/// and any frame whose seq is not above the last delivered one is discarded.
template <typename Payload>
class FrameReceiver {
 public:
  explicit FrameReceiver(std::shared_ptr<detail::FrameChannelState<Payload>> s) : state_(std::move(s)) {}

  /// Everything that has arrived by `now_us`, oldest arrival first.
  std::vector<Delivered<Payload>> poll(std::uint64_t now_us) {
    std::lock_guard lock(state_->mutex);
    auto& q = state_->in_flight;
    std::stable_sort(q.begin(), q.end(), [](const auto& a, const auto& b) {
      return a.arrival_us != b.arrival_us ? a.arrival_us < b.arrival_us : a.order < b.order;
    });
    std::vector<Delivered<Payload>> out;
    std::size_t n = 0;
    while (n < q.size() && q[n].arrival_us <= now_us) {
      auto& item = q[n].item;
      if (state_->last_delivered && item.seq <= *state_->last_delivered) {
        ++state_->stats.stale_dropped;
      } else {
        state_->last_delivered = item.seq;
        ++state_->stats.delivered;
        out.push_back(std::move(item));
      }
      ++n;
    }
    q.erase(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  std::size_t in_flight() const {
    std::lock_guard lock(state_->mutex);
    return state_->in_flight.size();
  }

  ChannelStats stats() const {
    std::lock_guard lock(state_->mutex);
    return state_->stats;
  }

 private:
  std::shared_ptr<detail::FrameChannelState<Payload>> state_;
};

template <typename Payload = std::vector<std::uint8_t>>
std::pair<FrameSender<Payload>, FrameReceiver<Payload>> frame_channel(const LinkModel& link) {
  link.validate();
  auto state = std::make_shared<detail::FrameChannelState<Payload>>(link);
  return {FrameSender<Payload>(state), FrameReceiver<Payload>(state)};
}

// ---------------------------------------------------------------------------
// Control protocol (JSON lines)

class ControlParseError : public std::runtime_error {
 public:
  ControlParseError(std::size_t line, const std::string& what)
      : std::runtime_error("control record at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class ControlKind { kTwist, kOdom, kGoal, kMode, kCamera };

const char* to_string(ControlKind kind);

/// Operator to robot: velocity command.
struct TwistBody {
  double linear = 0.0;
  double angular = 0.0;
  bool operator==(const TwistBody&) const = default;
};

/// Robot to operator: odometry estimate plus the pose of the latest captured
/// depth frame (`frame_seq`, 0 when none).
struct OdomBody {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;
  double omega = 0.0;
  std::uint64_t frame_seq = 0;
  Eigen::Quaterniond camera_rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d camera_translation = Eigen::Vector3d::Zero();

  bool operator==(const OdomBody& o) const {
    return x == o.x && y == o.y && theta == o.theta && v == o.v && omega == o.omega && frame_seq == o.frame_seq &&
           camera_rotation.coeffs() == o.camera_rotation.coeffs() && camera_translation == o.camera_translation;
  }
};

/// Robot to operator: goal progress.
struct GoalBody {
  int index = 0;  // current goal, 1..3; 4 once complete
  double x = 0.0;
  double y = 0.0;
  bool reached = false;
  bool operator==(const GoalBody&) const = default;
};

/// Operator to robot: view mode switch ("exo", "ego" or "cloud").
struct ModeBody {
  std::string mode;
  bool operator==(const ModeBody&) const = default;
};

/// Operator to robot: exocentric camera translation in meters.
struct CameraBody {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
  bool operator==(const CameraBody&) const = default;
};

struct ControlMessage {
  std::uint64_t stamp_us = 0;
  std::variant<TwistBody, OdomBody, GoalBody, ModeBody, CameraBody> body;

  ControlKind kind() const { return static_cast<ControlKind>(body.index()); }
  bool operator==(const ControlMessage&) const = default;
};

/// One JSON record without the trailing newline.
std::string to_json_line(const ControlMessage& msg);
/// Throws ControlParseError (carrying `line_number`) for malformed JSON,
/// unknown kinds or missing fields.
ControlMessage parse_control_line(const std::string& line, std::size_t line_number = 1);
/// Parses newline-delimited records, skipping blank lines.
std::vector<ControlMessage> parse_control_stream(std::istream& in);

namespace detail {

struct ControlChannelState {
  std::mutex mutex;
  std::uint64_t delay_us = 0;
  std::deque<std::pair<std::uint64_t, std::string>> lines;  // (due time, record)
  std::size_t line_number = 0;
};

}  // namespace detail

/// Reliable, ordered sender; records travel as JSON lines.
class ControlSender {
 public:
  explicit ControlSender(std::shared_ptr<detail::ControlChannelState> s) : state_(std::move(s)) {}
  void send(const ControlMessage& msg, std::uint64_t now_us);
  /// Queues an already-encoded line (used by socket bridges).
  void send_line(std::string line, std::uint64_t now_us);

 private:
  std::shared_ptr<detail::ControlChannelState> state_;
};

class ControlReceiver {
 public:
  explicit ControlReceiver(std::shared_ptr<detail::ControlChannelState> s) : state_(std::move(s)) {}
  /// Every record due by `now_us`, in send order. Throws ControlParseError on
  /// a malformed record; records before it are consumed and lost to the caller.
  std::vector<ControlMessage> poll(std::uint64_t now_us);

 private:
  std::shared_ptr<detail::ControlChannelState> state_;
};

/// Reliable ordered channel with an optional fixed delay and no loss.
std::pair<ControlSender, ControlReceiver> control_channel(std::uint64_t delay_us = 0);

// ---------------------------------------------------------------------------
// Motion-to-photon measurement

enum class TraceEventKind { kInput, kCapture, kDeliver, kPresent };

/// `id` is the input id for input events and the frame seq otherwise;
/// `input_id` on a capture is the newest input the captured state reflects.
struct TraceEvent {
  TraceEventKind kind = TraceEventKind::kInput;
  std::uint64_t time_us = 0;
  std::uint64_t id = 0;
  std::uint64_t input_id = 0;
};

class M2pError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct M2pStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t pairs = 0;
};

inline constexpr std::size_t kMinM2pPairs = 30;

/// Latency of each input to the first present of a frame reflecting it.
/// Throws M2pError for events that reference unknown frames or inputs, or
/// when fewer than 30 pairs match.
M2pStats measure_m2p(const std::vector<TraceEvent>& trace);

std::vector<TraceEvent> read_trace(std::istream& in);
void write_trace(std::ostream& out, const std::vector<TraceEvent>& trace);

/// Capture cadence quantized to the session tick: capture n is due on the
/// first tick at or after n / fps seconds.
class CaptureClock {
 public:
  CaptureClock(std::uint64_t tick_us, int fps) : tick_us_(tick_us), fps_(fps) {}
  /// Call once per tick with increasing tick indices.
  bool due(std::uint64_t tick_index) {
    if (tick_index * tick_us_ * static_cast<std::uint64_t>(fps_) >= next_ * 1'000'000ULL) {
      ++next_;
      return true;
    }
    return false;
  }
  std::uint64_t tick_us() const { return tick_us_; }
  int fps() const { return fps_; }

 private:
  std::uint64_t tick_us_;
  int fps_;
  std::uint64_t next_ = 0;
};

/// Capture, link and present cadence used to measure motion-to-photon.
struct PipelineConfig {
  std::uint64_t tick_us = 20'000;
  int capture_fps = 30;
  std::uint64_t frames = 1000;
  LinkModel link;
  std::uint64_t input_seed = 7;
};

/// Runs the tick loop (ingest, capture/send, poll/deliver, present) with one
/// operator input per tick at a random phase inside the preceding tick.
std::vector<TraceEvent> simulate_m2p_trace(const PipelineConfig& config);

/// Iteratively adjusts delay mean and jitter until the simulated pipeline
/// measures the target mean and standard deviation.
LinkModel calibrate_link(double target_mean_ms, double target_std_ms, PipelineConfig base, int iterations = 30);

inline constexpr double kTargetM2pMeanMs = 153.47;
inline constexpr double kTargetM2pStdMs = 33.33;

}  // namespace rfusion
