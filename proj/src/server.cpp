#include "rfusion/server.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <fstream>
#include <list>
#include <sstream>
#include <thread>

#include "rfusion/image_io.hpp"

namespace rfusion {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

nlohmann::json session_state_json(const Session& session, bool running) {
  nlohmann::json j;
  j["running"] = running;
  j["mode"] = to_string(session.mode());
  j["trajectory"] = session.config().trajectory;
  j["goal_index"] = session.goal_index();
  j["complete"] = session.complete();
  j["time_s"] = static_cast<double>(session.now_us()) / 1e6;
  j["frame_seq"] = session.view_seq();
  const Pose2& p = session.indicator_pose();
  j["robot"] = {{"x", p.x}, {"y", p.y}, {"theta", p.theta}};
  j["goals"] = nlohmann::json::array();
  for (const auto& g : session.trajectory().goals) j["goals"].push_back({g.x, g.y});
  j["metrics"] = metrics_to_json(session.metrics());
  return j;
}

namespace {

class FrameSocket;
class ControlSocket;

}  // namespace

struct OperatorServer::Impl : std::enable_shared_from_this<OperatorServer::Impl> {
  explicit Impl(ServerConfig c) : config(std::move(c)), acceptor(ioc), timer(ioc) {}

  ServerConfig config;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  std::thread thread;
  std::chrono::steady_clock::time_point next_tick;

  std::unique_ptr<Session> session;
  bool running = false;
  std::uint64_t sent_version = 0;
  std::ofstream record;

  std::list<std::weak_ptr<FrameSocket>> frame_sockets;
  std::list<std::weak_ptr<ControlSocket>> control_sockets;

  void reset(const SessionConfig& sc, bool run) {
    session = std::make_unique<Session>(sc);
    running = run;
    sent_version = 0;
  }

  void do_accept();
  void schedule_tick();
  void on_tick();
  void broadcast_frame(std::shared_ptr<const std::string> msg);
  void broadcast_control(std::shared_ptr<const std::string> msg);
  void handle_control_text(const std::string& text, const std::shared_ptr<ControlSocket>& from);
  http::response<http::string_body> handle_http(const http::request<http::string_body>& req);
};

namespace {

// Serialized writes with a bounded queue; when the client falls behind, the
// oldest queued message is discarded (frames are latest-wins anyway).
template <typename Derived>
class WsSocket : public std::enable_shared_from_this<Derived> {
 public:
  WsSocket(tcp::socket socket, std::weak_ptr<OperatorServer::Impl> server, bool binary)
      : ws_(std::move(socket)), server_(std::move(server)), binary_(binary) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = this->shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->read();
      self->write_next();
    });
  }

  void push(std::shared_ptr<const std::string> msg) {
    if (queue_.size() >= 4) queue_.pop_front();
    queue_.push_back(std::move(msg));
    if (open_ && !writing_) write_next();
  }

  bool open() const { return open_; }

  void close() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
    open_ = false;
  }

 public:
  virtual ~WsSocket() = default;
  virtual void on_text(const std::string&) {}

 protected:

  websocket::stream<beast::tcp_stream> ws_;
  std::weak_ptr<OperatorServer::Impl> server_;

 private:
  void read() {
    ws_.async_read(buffer_, [self = this->shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->on_text(text);
      self->read();
    });
  }

  void write_next() {
    if (queue_.empty() || !open_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    auto msg = queue_.front();
    queue_.pop_front();
    ws_.binary(binary_);
    ws_.async_write(asio::buffer(*msg), [self = this->shared_from_this(), msg](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        self->writing_ = false;
        return;
      }
      self->write_next();
    });
  }

  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool binary_;
  bool open_ = false;
  bool writing_ = false;
};

class FrameSocket : public WsSocket<FrameSocket> {
 public:
  using WsSocket::WsSocket;
};

class ControlSocket : public WsSocket<ControlSocket> {
 public:
  using WsSocket::WsSocket;

  void on_text(const std::string& text) override {
    if (auto server = server_.lock()) server->handle_control_text(text, shared_from_this());
  }
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, std::shared_ptr<OperatorServer::Impl> server)
      : stream_(std::move(socket)), server_(std::move(server)) {}

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

 private:
  void on_request() {
    if (websocket::is_upgrade(req_)) {
      const std::string target(req_.target());
      stream_.expires_never();
      if (target == "/ws/frames") {
        auto s = std::make_shared<FrameSocket>(stream_.release_socket(), server_, true);
        server_->frame_sockets.push_back(s);
        s->start(std::move(req_));
      } else if (target == "/ws/control") {
        auto s = std::make_shared<ControlSocket>(stream_.release_socket(), server_, false);
        server_->control_sockets.push_back(s);
        s->start(std::move(req_));
      }
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(server_->handle_http(req_));
    res->keep_alive(req_.keep_alive());
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->keep_alive()) {
        self->read();
      } else {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      }
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<OperatorServer::Impl> server_;
};

std::string mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

}  // namespace

http::response<http::string_body> OperatorServer::Impl::handle_http(const http::request<http::string_body>& req) {
  http::response<http::string_body> res{http::status::ok, req.version()};
  res.set(http::field::server, "rfusion");
  auto json_reply = [&](http::status status, const nlohmann::json& body) {
    res.result(status);
    res.set(http::field::content_type, "application/json");
    res.body() = body.dump();
  };
  const std::string target(req.target());
  if (target == "/api/session") {
    if (req.method() == http::verb::get) {
      json_reply(http::status::ok, session_state_json(*session, running));
      return res;
    }
    if (req.method() == http::verb::post) {
      try {
        const auto body = req.body().empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body());
        const std::string action = body.value("action", std::string("start"));
        if (action != "start" && action != "reset") {
          throw std::invalid_argument("unknown action '" + action + "' (expected start or reset)");
        }
        SessionConfig sc = session->config();
        if (body.contains("mode")) sc.mode = parse_view_mode(body.at("mode").get<std::string>());
        if (body.contains("trajectory")) sc.trajectory = body.at("trajectory").get<int>();
        reset(sc, action == "start");
        json_reply(http::status::ok, session_state_json(*session, running));
      } catch (const std::exception& e) {
        json_reply(http::status::bad_request, {{"error", e.what()}});
      }
      return res;
    }
    json_reply(http::status::method_not_allowed, {{"error", "use GET or POST"}});
    return res;
  }
  if (req.method() == http::verb::get && !config.static_dir.empty() && target.find("..") == std::string::npos) {
    std::filesystem::path p = config.static_dir / (target == "/" ? std::string("index.html") : target.substr(1));
    std::ifstream in(p, std::ios::binary);
    if (in) {
      std::ostringstream ss;
      ss << in.rdbuf();
      res.set(http::field::content_type, mime_type(p));
      res.body() = ss.str();
      return res;
    }
  }
  json_reply(http::status::not_found, {{"error", "not found"}});
  return res;
}

void OperatorServer::Impl::do_accept() {
  acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<HttpSession>(std::move(socket), self)->read();
    self->do_accept();
  });
}

void OperatorServer::Impl::schedule_tick() {
  next_tick += std::chrono::microseconds(session->config().tick_us);
  const auto now = std::chrono::steady_clock::now();
  if (next_tick < now) next_tick = now;  // best effort when rendering falls behind
  timer.expires_at(next_tick);
  timer.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    self->on_tick();
  });
}

void OperatorServer::Impl::on_tick() {
  if (running && !session->complete() && !session->timed_out()) {
    try {
      session->tick();
    } catch (const std::exception& e) {
      running = false;
      broadcast_control(std::make_shared<const std::string>(nlohmann::json{{"error", e.what()}}.dump() + "\n"));
    }
  }
  // Forward goal events and the newest odometry record to operators.
  std::string lines;
  std::optional<ControlMessage> last_odom;
  for (auto& m : session->take_operator_messages()) {
    if (m.kind() == ControlKind::kOdom) {
      last_odom = std::move(m);
    } else {
      lines += to_json_line(m) + "\n";
    }
  }
  if (last_odom) lines += to_json_line(*last_odom) + "\n";
  if (!lines.empty()) broadcast_control(std::make_shared<const std::string>(std::move(lines)));

  if (session->view_version() != sent_version) {
    sent_version = session->view_version();
    const RenderTarget& view = session->view();
    const auto png = encode_png(view);
    const auto msg = encode_png_message(session->view_seq(), session->now_us(), view.width, view.height, png);
    broadcast_frame(std::make_shared<const std::string>(msg.begin(), msg.end()));
  }
  schedule_tick();
}

void OperatorServer::Impl::broadcast_frame(std::shared_ptr<const std::string> msg) {
  for (auto it = frame_sockets.begin(); it != frame_sockets.end();) {
    if (auto s = it->lock()) {
      s->push(msg);
      ++it;
    } else {
      it = frame_sockets.erase(it);
    }
  }
}

void OperatorServer::Impl::broadcast_control(std::shared_ptr<const std::string> msg) {
  for (auto it = control_sockets.begin(); it != control_sockets.end();) {
    if (auto s = it->lock()) {
      s->push(msg);
      ++it;
    } else {
      it = control_sockets.erase(it);
    }
  }
}

void OperatorServer::Impl::handle_control_text(const std::string& text, const std::shared_ptr<ControlSocket>& from) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ControlMessage msg = parse_control_line(line, n);
      if (msg.kind() == ControlKind::kOdom || msg.kind() == ControlKind::kGoal) {
        throw std::invalid_argument(std::string(to_string(msg.kind())) + " records are robot-to-operator only");
      }
      // Stamp with the tick that will ingest the message so the log replays
      // onto the same ticks.
      msg.stamp_us = session->now_us();
      session->uplink().send(msg, msg.stamp_us);
      if (record.is_open()) record << to_json_line(msg) << "\n" << std::flush;
    } catch (const std::exception& e) {
      from->push(std::make_shared<const std::string>(nlohmann::json{{"error", e.what()}}.dump() + "\n"));
    }
  }
}

OperatorServer::OperatorServer(ServerConfig config) : impl_(std::make_shared<Impl>(std::move(config))) {
  impl_->reset(impl_->config.session, false);
  if (!impl_->config.record_path.empty()) {
    impl_->record.open(impl_->config.record_path);
    if (!impl_->record) {
      throw std::invalid_argument("cannot write control log '" + impl_->config.record_path.string() + "'");
    }
  }
}

OperatorServer::~OperatorServer() { stop(); }

unsigned short OperatorServer::start() {
  const tcp::endpoint endpoint(asio::ip::make_address(impl_->config.address), impl_->config.port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint);
  impl_->acceptor.listen();
  const unsigned short port = impl_->acceptor.local_endpoint().port();
  impl_->do_accept();
  impl_->next_tick = std::chrono::steady_clock::now();
  impl_->schedule_tick();
  impl_->thread = std::thread([impl = impl_] { impl->ioc.run(); });
  return port;
}

void OperatorServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  asio::post(impl_->ioc, [impl = impl_] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    impl->timer.cancel();
    for (auto& w : impl->frame_sockets) {
      if (auto s = w.lock()) s->close();
    }
    for (auto& w : impl->control_sockets) {
      if (auto s = w.lock()) s->close();
    }
    impl->ioc.stop();
  });
  impl_->thread.join();
  // Let aborted handlers run so they release their references.
  impl_->ioc.restart();
  impl_->ioc.poll();
}

void OperatorServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace rfusion
