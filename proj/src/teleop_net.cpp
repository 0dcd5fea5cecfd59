#include "rfusion/teleop_net.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace rfusion {

// ---------------------------------------------------------------------------
// Binary frame format

namespace {

constexpr std::uint8_t kMagic[4] = {'R', 'F', 'N', '1'};

void put_le(std::uint8_t* out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_le(const std::uint8_t* in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

FrameWireHeader checked_header(std::span<const std::uint8_t> bytes, PayloadKind expected) {
  const FrameWireHeader h = decode_header(bytes);
  if (h.kind != expected) {
    throw WireError("unexpected payload kind " + std::to_string(static_cast<int>(h.kind)));
  }
  const std::size_t body = bytes.size() - FrameWireHeader::kSize;
  if (body < h.payload_length) {
    throw WireError("truncated frame: header announces " + std::to_string(h.payload_length) + " payload bytes, " +
                    std::to_string(body) + " present");
  }
  if (body > h.payload_length) {
    throw WireError("length mismatch: header announces " + std::to_string(h.payload_length) + " payload bytes, " +
                    std::to_string(body) + " present");
  }
  return h;
}

}  // namespace

void encode_header(const FrameWireHeader& h, std::uint8_t* out) {
  if (h.capture_timestamp_us > FrameWireHeader::kMaxTimestamp) {
    throw std::invalid_argument("capture timestamp exceeds the 48-bit wire field");
  }
  std::memcpy(out, kMagic, 4);
  put_le(out + 4, h.seq, 8);
  put_le(out + 12, h.capture_timestamp_us, 6);
  put_le(out + 18, h.width, 2);
  put_le(out + 20, h.height, 2);
  out[22] = static_cast<std::uint8_t>(h.kind);
  put_le(out + 23, h.payload_length, 4);
}

FrameWireHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < FrameWireHeader::kSize) {
    throw WireError("truncated header: " + std::to_string(bytes.size()) + " of 27 bytes");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw WireError("bad magic: expected RFN1");
  }
  FrameWireHeader h;
  h.seq = get_le(bytes.data() + 4, 8);
  h.capture_timestamp_us = get_le(bytes.data() + 12, 6);
  h.width = static_cast<std::uint16_t>(get_le(bytes.data() + 18, 2));
  h.height = static_cast<std::uint16_t>(get_le(bytes.data() + 20, 2));
  const std::uint8_t kind = bytes[22];
  if (kind != static_cast<std::uint8_t>(PayloadKind::kDisparityRgb) &&
      kind != static_cast<std::uint8_t>(PayloadKind::kFusedPng)) {
    throw WireError("unknown payload kind " + std::to_string(kind));
  }
  h.kind = static_cast<PayloadKind>(kind);
  h.payload_length = static_cast<std::uint32_t>(get_le(bytes.data() + 23, 4));
  return h;
}

namespace {

std::uint16_t disparity_code(float d) {
  const double q = std::round(static_cast<double>(d) * 256.0);
  return static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
}

}  // namespace

float quantize_disparity(float d) { return static_cast<float>(disparity_code(d)) * kDisparityQuantum; }

std::vector<std::uint8_t> encode_frame(const DepthFrame& frame) {
  frame.validate();
  if (frame.width > 0xFFFF || frame.height > 0xFFFF) {
    throw std::invalid_argument("frame dimensions exceed the 16-bit wire fields");
  }
  const std::size_t n = static_cast<std::size_t>(frame.pixel_count());
  const std::size_t payload = n * 5;
  if (payload > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("frame payload exceeds the 32-bit length field");
  }
  FrameWireHeader h;
  h.seq = frame.seq;
  h.capture_timestamp_us = frame.timestamp_us;
  h.width = static_cast<std::uint16_t>(frame.width);
  h.height = static_cast<std::uint16_t>(frame.height);
  h.kind = PayloadKind::kDisparityRgb;
  h.payload_length = static_cast<std::uint32_t>(payload);

  std::vector<std::uint8_t> out(FrameWireHeader::kSize + payload);
  encode_header(h, out.data());
  std::uint8_t* disp = out.data() + FrameWireHeader::kSize;
  for (std::size_t i = 0; i < n; ++i) put_le(disp + 2 * i, disparity_code(frame.disparity(static_cast<Eigen::Index>(i))), 2);
  std::uint8_t* rgb = disp + 2 * n;
  std::memcpy(rgb, frame.color.data(), 3 * n);
  return out;
}

DepthFrame decode_frame(std::span<const std::uint8_t> bytes) {
  const FrameWireHeader h = checked_header(bytes, PayloadKind::kDisparityRgb);
  if (h.width == 0 || h.height == 0) {
    throw WireError("frame has zero area");
  }
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (h.payload_length != n * 5) {
    throw WireError("length mismatch: " + std::to_string(h.width) + "x" + std::to_string(h.height) + " frame needs " +
                    std::to_string(n * 5) + " payload bytes, header announces " + std::to_string(h.payload_length));
  }
  DepthFrame f(h.width, h.height);
  f.seq = h.seq;
  f.timestamp_us = h.capture_timestamp_us;
  const std::uint8_t* disp = bytes.data() + FrameWireHeader::kSize;
  for (std::size_t i = 0; i < n; ++i) {
    f.disparity(static_cast<Eigen::Index>(i)) = static_cast<float>(get_le(disp + 2 * i, 2)) * kDisparityQuantum;
  }
  std::memcpy(f.color.data(), disp + 2 * n, 3 * n);
  return f;
}

std::vector<std::uint8_t> encode_png_message(std::uint64_t seq, std::uint64_t timestamp_us, int width, int height,
                                             std::span<const std::uint8_t> png) {
  if (width < 1 || height < 1 || width > 0xFFFF || height > 0xFFFF) {
    throw std::invalid_argument("image dimensions do not fit the wire header");
  }
  FrameWireHeader h;
  h.seq = seq;
  h.capture_timestamp_us = timestamp_us;
  h.width = static_cast<std::uint16_t>(width);
  h.height = static_cast<std::uint16_t>(height);
  h.kind = PayloadKind::kFusedPng;
  h.payload_length = static_cast<std::uint32_t>(png.size());
  std::vector<std::uint8_t> out(FrameWireHeader::kSize + png.size());
  encode_header(h, out.data());
  std::memcpy(out.data() + FrameWireHeader::kSize, png.data(), png.size());
  return out;
}

std::pair<FrameWireHeader, std::span<const std::uint8_t>> decode_png_message(std::span<const std::uint8_t> bytes) {
  const FrameWireHeader h = checked_header(bytes, PayloadKind::kFusedPng);
  return {h, bytes.subspan(FrameWireHeader::kSize)};
}

// ---------------------------------------------------------------------------
// Link model

LinkModel LinkModel::Calibrated(std::uint64_t seed) {
  LinkModel link;
  link.one_way_delay_mean_ms = 136.63;
  link.jitter_std_ms = 37.57;
  link.loss_rate = 0.0;
  link.seed = seed;
  return link;
}

void LinkModel::validate() const {
  if (!(one_way_delay_mean_ms >= 0.0) || !std::isfinite(one_way_delay_mean_ms)) {
    throw std::invalid_argument("link delay mean must be finite and >= 0");
  }
  if (!(jitter_std_ms >= 0.0) || !std::isfinite(jitter_std_ms)) {
    throw std::invalid_argument("link jitter must be finite and >= 0");
  }
  if (!(loss_rate >= 0.0 && loss_rate < 1.0)) {
    throw std::invalid_argument("link loss rate must lie in [0, 1)");
  }
}

LinkSampler::LinkSampler(const LinkModel& link) : link_(link), rng_(link.seed) { link.validate(); }

LinkSampler::Draw LinkSampler::next() {
  // Both draws are always taken so the schedule depends only on the seed and
  // the send count.
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const double z = std::normal_distribution<double>(0.0, 1.0)(rng_);
  Draw d;
  d.lost = u < link_.loss_rate;
  const double delay_ms = std::max(0.0, link_.one_way_delay_mean_ms + link_.jitter_std_ms * z);
  d.delay_us = static_cast<std::uint64_t>(std::llround(delay_ms * 1000.0));
  return d;
}

// ---------------------------------------------------------------------------
// Control protocol

const char* to_string(ControlKind kind) {
  switch (kind) {
    case ControlKind::kTwist:
      return "TWIST";
    case ControlKind::kOdom:
      return "ODOM";
    case ControlKind::kGoal:
      return "GOAL";
    case ControlKind::kMode:
      return "MODE";
    case ControlKind::kCamera:
      return "CAMERA";
  }
  return "TWIST";
}

namespace {

using nlohmann::json;

void require_finite(std::initializer_list<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("control message field is not finite");
  }
}

bool valid_mode(const std::string& m) { return m == "exo" || m == "ego" || m == "cloud"; }

struct BodyToJson {
  json& j;
  void operator()(const TwistBody& b) const {
    require_finite({b.linear, b.angular});
    j["linear"] = b.linear;
    j["angular"] = b.angular;
  }
  void operator()(const OdomBody& b) const {
    require_finite({b.x, b.y, b.theta, b.v, b.omega});
    j["x"] = b.x;
    j["y"] = b.y;
    j["theta"] = b.theta;
    j["v"] = b.v;
    j["omega"] = b.omega;
    j["frame_seq"] = b.frame_seq;
    const auto& q = b.camera_rotation;
    const auto& t = b.camera_translation;
    j["camera"] = {{"rotation", {q.w(), q.x(), q.y(), q.z()}}, {"translation", {t.x(), t.y(), t.z()}}};
  }
  void operator()(const GoalBody& b) const {
    require_finite({b.x, b.y});
    j["index"] = b.index;
    j["x"] = b.x;
    j["y"] = b.y;
    j["reached"] = b.reached;
  }
  void operator()(const ModeBody& b) const {
    if (!valid_mode(b.mode)) throw std::invalid_argument("unknown view mode '" + b.mode + "'");
    j["mode"] = b.mode;
  }
  void operator()(const CameraBody& b) const {
    require_finite({b.dx, b.dy, b.dz});
    j["dx"] = b.dx;
    j["dy"] = b.dy;
    j["dz"] = b.dz;
  }
};

}  // namespace

std::string to_json_line(const ControlMessage& msg) {
  json j;
  j["kind"] = to_string(msg.kind());
  j["stamp"] = msg.stamp_us;
  std::visit(BodyToJson{j}, msg.body);
  return j.dump();
}

ControlMessage parse_control_line(const std::string& line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ControlParseError(line_number, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ControlParseError(line_number, "record is not a JSON object");
  try {
    ControlMessage m;
    m.stamp_us = j.value("stamp", std::uint64_t{0});
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "TWIST") {
      m.body = TwistBody{j.at("linear").get<double>(), j.at("angular").get<double>()};
    } else if (kind == "ODOM") {
      OdomBody b;
      b.x = j.at("x").get<double>();
      b.y = j.at("y").get<double>();
      b.theta = j.at("theta").get<double>();
      b.v = j.value("v", 0.0);
      b.omega = j.value("omega", 0.0);
      b.frame_seq = j.value("frame_seq", std::uint64_t{0});
      if (j.contains("camera")) {
        const auto& r = j.at("camera").at("rotation");
        const auto& t = j.at("camera").at("translation");
        b.camera_rotation = Eigen::Quaterniond(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
                                               r.at(3).get<double>());
        b.camera_translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
      }
      m.body = b;
    } else if (kind == "GOAL") {
      m.body = GoalBody{j.at("index").get<int>(), j.value("x", 0.0), j.value("y", 0.0), j.value("reached", false)};
    } else if (kind == "MODE") {
      ModeBody b{j.at("mode").get<std::string>()};
      if (!valid_mode(b.mode)) throw ControlParseError(line_number, "unknown view mode '" + b.mode + "'");
      m.body = b;
    } else if (kind == "CAMERA") {
      m.body = CameraBody{j.value("dx", 0.0), j.value("dy", 0.0), j.value("dz", 0.0)};
    } else {
      throw ControlParseError(line_number, "unknown kind '" + kind + "'");
    }
    return m;
  } catch (const json::exception& e) {
    throw ControlParseError(line_number, std::string("bad field: ") + e.what());
  }
}

std::vector<ControlMessage> parse_control_stream(std::istream& in) {
  std::vector<ControlMessage> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_control_line(line, n));
  }
  return out;
}

void ControlSender::send(const ControlMessage& msg, std::uint64_t now_us) { send_line(to_json_line(msg), now_us); }

void ControlSender::send_line(std::string line, std::uint64_t now_us) {
  std::lock_guard lock(state_->mutex);
  state_->lines.emplace_back(now_us + state_->delay_us, std::move(line));
}

std::vector<ControlMessage> ControlReceiver::poll(std::uint64_t now_us) {
  std::lock_guard lock(state_->mutex);
  std::vector<ControlMessage> out;
  while (!state_->lines.empty() && state_->lines.front().first <= now_us) {
    const std::string line = std::move(state_->lines.front().second);
    state_->lines.pop_front();
    out.push_back(parse_control_line(line, ++state_->line_number));
  }
  return out;
}

std::pair<ControlSender, ControlReceiver> control_channel(std::uint64_t delay_us) {
  auto state = std::make_shared<detail::ControlChannelState>();
  state->delay_us = delay_us;
  return {ControlSender(state), ControlReceiver(state)};
}

// ---------------------------------------------------------------------------
// Motion-to-photon

M2pStats measure_m2p(const std::vector<TraceEvent>& trace) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> inputs;  // (id, time)
  std::unordered_map<std::uint64_t, std::uint64_t> reflects;     // frame seq -> input id
  std::vector<double> latencies;
  std::size_t next_input = 0;
  for (const auto& e : trace) {
    switch (e.kind) {
      case TraceEventKind::kInput:
        if (!inputs.empty() && e.id <= inputs.back().first) {
          throw M2pError("input ids must increase; got " + std::to_string(e.id));
        }
        inputs.emplace_back(e.id, e.time_us);
        break;
      case TraceEventKind::kCapture:
        if (e.input_id != 0 && (inputs.empty() || e.input_id > inputs.back().first)) {
          throw M2pError("capture of frame " + std::to_string(e.id) + " reflects unknown input " +
                         std::to_string(e.input_id));
        }
        reflects[e.id] = e.input_id;
        break;
      case TraceEventKind::kDeliver:
      case TraceEventKind::kPresent: {
        const auto it = reflects.find(e.id);
        if (it == reflects.end()) {
          throw M2pError(std::string(e.kind == TraceEventKind::kDeliver ? "delivery" : "present") + " of frame " +
                         std::to_string(e.id) + " without a capture event");
        }
        if (e.kind == TraceEventKind::kDeliver) break;
        while (next_input < inputs.size() && inputs[next_input].first <= it->second) {
          latencies.push_back(static_cast<double>(e.time_us - inputs[next_input].second) / 1000.0);
          ++next_input;
        }
        break;
      }
    }
  }
  if (latencies.size() < kMinM2pPairs) {
    throw M2pError("only " + std::to_string(latencies.size()) + " matched input-to-present pairs; need " +
                   std::to_string(kMinM2pPairs));
  }
  M2pStats s;
  s.pairs = latencies.size();
  double sum = 0.0;
  for (double l : latencies) sum += l;
  s.mean_ms = sum / static_cast<double>(s.pairs);
  double ss = 0.0;
  for (double l : latencies) ss += (l - s.mean_ms) * (l - s.mean_ms);
  s.std_ms = std::sqrt(ss / static_cast<double>(s.pairs - 1));
  return s;
}

namespace {

const char* event_name(TraceEventKind k) {
  switch (k) {
    case TraceEventKind::kInput:
      return "input";
    case TraceEventKind::kCapture:
      return "capture";
    case TraceEventKind::kDeliver:
      return "deliver";
    case TraceEventKind::kPresent:
      return "present";
  }
  return "input";
}

}  // namespace

void write_trace(std::ostream& out, const std::vector<TraceEvent>& trace) {
  for (const auto& e : trace) {
    json j;
    j["event"] = event_name(e.kind);
    j["t_us"] = e.time_us;
    if (e.kind == TraceEventKind::kInput) {
      j["id"] = e.id;
    } else {
      j["seq"] = e.id;
    }
    if (e.kind == TraceEventKind::kCapture) j["input_id"] = e.input_id;
    out << j.dump() << "\n";
  }
}

std::vector<TraceEvent> read_trace(std::istream& in) {
  std::vector<TraceEvent> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TraceEvent e;
      const std::string kind = j.at("event").get<std::string>();
      e.time_us = j.at("t_us").get<std::uint64_t>();
      if (kind == "input") {
        e.kind = TraceEventKind::kInput;
        e.id = j.at("id").get<std::uint64_t>();
      } else if (kind == "capture" || kind == "deliver" || kind == "present") {
        e.kind = kind == "capture" ? TraceEventKind::kCapture
                                   : (kind == "deliver" ? TraceEventKind::kDeliver : TraceEventKind::kPresent);
        e.id = j.at("seq").get<std::uint64_t>();
        if (e.kind == TraceEventKind::kCapture) e.input_id = j.value("input_id", std::uint64_t{0});
      } else {
        throw M2pError("trace line " + std::to_string(n) + ": unknown event '" + kind + "'");
      }
      out.push_back(e);
    } catch (const json::exception& e) {
      throw M2pError("trace line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TraceEvent> simulate_m2p_trace(const PipelineConfig& config) {
  if (config.tick_us == 0 || config.capture_fps < 1) {
    throw std::invalid_argument("pipeline tick and capture rate must be positive");
  }
  auto [tx, rx] = frame_channel<std::uint64_t>(config.link);
  CaptureClock clock(config.tick_us, config.capture_fps);
  std::mt19937_64 rng(config.input_seed);
  std::uniform_int_distribution<std::uint64_t> phase(0, config.tick_us - 1);

  std::vector<TraceEvent> trace;
  std::uint64_t input_id = 0;
  std::uint64_t captured = 0;
  // Generous bound so a pathological link cannot spin forever.
  const std::uint64_t max_ticks =
      (config.frames + 2) * (1'000'000 / config.tick_us + 1) / static_cast<std::uint64_t>(config.capture_fps) + 100'000;
  for (std::uint64_t k = 0; k < max_ticks; ++k) {
    const std::uint64_t t = k * config.tick_us;
    // Ingest: the operator input that arrived during the preceding tick.
    if (k > 0 && captured < config.frames) {
      trace.push_back({TraceEventKind::kInput, t - phase(rng), ++input_id, 0});
    }
    // Capture and send.
    if (captured < config.frames && clock.due(k)) {
      ++captured;
      trace.push_back({TraceEventKind::kCapture, t, captured, input_id});
      tx.send(captured, input_id, t);
    }
    // Deliver, then present the newest frame.
    const auto delivered = rx.poll(t);
    for (const auto& d : delivered) trace.push_back({TraceEventKind::kDeliver, t, d.seq, 0});
    if (!delivered.empty()) trace.push_back({TraceEventKind::kPresent, t, delivered.back().seq, 0});
    if (captured == config.frames && rx.in_flight() == 0) break;
  }
  return trace;
}

LinkModel calibrate_link(double target_mean_ms, double target_std_ms, PipelineConfig base, int iterations) {
  base.link.loss_rate = 0.0;
  base.link.one_way_delay_mean_ms = 0.0;
  base.link.jitter_std_ms = 0.0;
  const M2pStats floor = measure_m2p(simulate_m2p_trace(base));
  base.link.one_way_delay_mean_ms = std::max(0.0, target_mean_ms - floor.mean_ms);
  base.link.jitter_std_ms = std::sqrt(std::max(0.0, target_std_ms * target_std_ms - floor.std_ms * floor.std_ms));
  for (int i = 0; i < iterations; ++i) {
    const M2pStats s = measure_m2p(simulate_m2p_trace(base));
    base.link.one_way_delay_mean_ms = std::max(0.0, base.link.one_way_delay_mean_ms + (target_mean_ms - s.mean_ms));
    if (s.std_ms > 0.0) base.link.jitter_std_ms *= target_std_ms / s.std_ms;
  }
  return base.link;
}

}  // namespace rfusion
