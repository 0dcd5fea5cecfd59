#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "rfusion/server.hpp"

using namespace rfusion;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

nlohmann::json http_json(unsigned short port, http::verb verb, const std::string& body = "") {
  asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({asio::ip::make_address("127.0.0.1"), port});
  http::request<http::string_body> req{verb, "/api/session", 11};
  req.set(http::field::host, "127.0.0.1");
  if (!body.empty()) {
    req.set(http::field::content_type, "application/json");
    req.body() = body;
  }
  req.prepare_payload();
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  return {{"status", res.result_int()}, {"body", nlohmann::json::parse(res.body())}};
}

class WsClient {
 public:
  WsClient(unsigned short port, const std::string& target) : ws_(ioc_) {
    beast::get_lowest_layer(ws_).connect({asio::ip::make_address("127.0.0.1"), port});
    ws_.handshake("127.0.0.1", target);
  }
  std::string read(bool* binary = nullptr) {
    beast::flat_buffer buf;
    ws_.read(buf);
    if (binary) *binary = ws_.got_binary();
    return beast::buffers_to_string(buf.data());
  }
  void write(const std::string& text) {
    ws_.text(true);
    ws_.write(asio::buffer(text));
  }
  /// Reads messages until one contains `needle`.
  std::string read_until(const std::string& needle) {
    for (int i = 0; i < 2000; ++i) {
      const std::string m = read();
      if (m.find(needle) != std::string::npos) return m;
    }
    return {};
  }

 private:
  asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

ServerConfig test_config(const std::filesystem::path& record) {
  ServerConfig c;
  c.port = 0;
  c.session.sensor = StereoIntrinsics::FromFov(40, 24);
  c.session.render = true;
  c.session.view_width = 64;
  c.session.view_height = 48;
  c.session.timeout_s = 2.0;
  c.record_path = record;
  return c;
}

}  // namespace

TEST(Server, HttpWebSocketsAndReplay) {
  const auto record = std::filesystem::temp_directory_path() / "rfusion_server_record.jsonl";
  const ServerConfig config = test_config(record);
  OperatorServer server(config);
  const unsigned short port = server.start();
  ASSERT_GT(port, 0);

  const auto idle = http_json(port, http::verb::get);
  EXPECT_EQ(idle["status"], 200);
  EXPECT_EQ(idle["body"]["running"], false);

  WsClient frames(port, "/ws/frames");
  WsClient control(port, "/ws/control");

  const auto started = http_json(port, http::verb::post, R"({"action":"start","mode":"cloud","trajectory":2})");
  EXPECT_EQ(started["status"], 200);
  EXPECT_EQ(started["body"]["running"], true);
  EXPECT_EQ(started["body"]["mode"], "cloud");
  EXPECT_EQ(started["body"]["trajectory"], 2);

  const auto bad = http_json(port, http::verb::post, R"({"action":"fly"})");
  EXPECT_EQ(bad["status"], 400);
  EXPECT_TRUE(bad["body"].contains("error"));

  // Binary FUSED_PNG frame: wire header then a PNG signature.
  bool binary = false;
  const std::string msg = frames.read(&binary);
  EXPECT_TRUE(binary);
  const std::vector<std::uint8_t> bytes(msg.begin(), msg.end());
  const auto [header, png] = decode_png_message(bytes);
  EXPECT_EQ(header.kind, PayloadKind::kFusedPng);
  EXPECT_EQ(header.width, 64);
  EXPECT_EQ(header.height, 48);
  ASSERT_GE(png.size(), 8u);
  const std::uint8_t signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  EXPECT_TRUE(std::equal(signature, signature + 8, png.begin()));

  control.write(R"({"kind":"TWIST","stamp":0,"linear":0.05,"angular":0.2})" "\n");
  EXPECT_NE(control.read_until("\"ODOM\"").find("frame_seq"), std::string::npos);

  control.write(R"({"kind":"ODOM","stamp":0,"x":0,"y":0,"theta":0})" "\n");
  EXPECT_NE(control.read_until("\"error\"").find("robot-to-operator"), std::string::npos);
  control.write("not json\n");
  EXPECT_FALSE(control.read_until("\"error\"").empty());

  control.write(R"({"kind":"TWIST","stamp":0,"linear":0.05,"angular":-0.1})" "\n");

  nlohmann::json state;
  for (int i = 0; i < 100; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    state = http_json(port, http::verb::get)["body"];
    if (state["time_s"].get<double>() >= config.session.timeout_s) break;
  }
  server.stop();
  EXPECT_GE(state["metrics"]["commands"].get<int>(), 2);

  // Replaying the recorded log headlessly reproduces the live metrics.
  std::ifstream in(record);
  std::vector<TimedControl> controls;
  for (const auto& m : parse_control_stream(in)) controls.push_back({m.stamp_us, m});
  std::filesystem::remove(record);
  EXPECT_EQ(controls.size(), 2u);
  SessionConfig replay = config.session;
  replay.trajectory = 2;
  replay.render = false;
  const SessionMetrics headless = run_session(replay, controls);
  EXPECT_EQ(metrics_to_json(headless), state["metrics"]);
}

TEST(Server, StopsCleanlyWithOpenSockets) {
  OperatorServer server(test_config({}));
  const unsigned short port = server.start();
  WsClient frames(port, "/ws/frames");
  WsClient control(port, "/ws/control");
  server.stop();
  server.stop();
  SUCCEED();
}
