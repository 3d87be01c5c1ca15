#include "softbci/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <thread>

#include <fmt/format.h>

#include "softbci/error.hpp"

namespace softbci {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

json handle_message(LiveSession& session, const std::string& text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    return CommandResult{false, "message is not valid JSON"}.to_json("unknown");
  }
  std::string name = "unknown";
  if (j.is_object() && j.contains("type") && j["type"].is_string()) name = j["type"];
  try {
    const auto cmd = parse_command(j, base);
    return session.apply_command(cmd).to_json(command_name(cmd));
  } catch (const Error& e) {
    return CommandResult{false, e.what()}.to_json(name);
  }
}

namespace {

constexpr auto kPushPeriod = std::chrono::milliseconds(50);

json health_json(LiveSession& session) {
  return {{"status", "ok"},
          {"running", session.running()},
          {"session_t_s", static_cast<double>(session.session_ticks()) * kControlPeriod},
          {"subscribers", session.hub().subscriber_count()},
          {"snapshots_published", session.hub().published()}};
}

/// Outbound queue shared by both streaming transports. At most one snapshot
/// waits in the queue; a newer one replaces it.
class Outbox {
 public:
  void push_reply(std::string msg) { queue_.push_back({std::move(msg), false}); }
  void push_snapshot(std::string msg) {
    // The front item may be on the wire already; anything behind it is fair game.
    for (std::size_t i = writing_ ? 1 : 0; i < queue_.size(); ++i) {
      if (queue_[i].snapshot) {
        queue_[i].text = std::move(msg);
        ++dropped_;
        return;
      }
    }
    queue_.push_back({std::move(msg), true});
  }
  bool writing() const { return writing_; }
  bool empty() const { return queue_.empty(); }
  const std::string& front() { writing_ = true; return queue_.front().text; }
  void pop() { queue_.pop_front(); writing_ = false; }

 private:
  struct Item {
    std::string text;
    bool snapshot;
  };
  std::deque<Item> queue_;
  bool writing_ = false;
  std::uint64_t dropped_ = 0;
};

struct Shared {
  LiveSession& session;
  RunConfig base;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, Shared& shared)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), shared_(shared) {}

  void run(http::request<http::string_body> req) {
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->sub_ = self->shared_.session.hub().subscribe();
      self->do_read();
      self->arm_timer();
    });
  }

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      const auto text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->outbox_.push_reply(handle_message(self->shared_.session, text, self->shared_.base).dump());
      self->flush();
      self->do_read();
    });
  }

  void arm_timer() {
    timer_.expires_after(kPushPeriod);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      if (auto snap = self->sub_->try_next()) {
        self->outbox_.push_snapshot(snap->to_json().dump());
        self->flush();
      }
      self->arm_timer();
    });
  }

  void flush() {
    if (closed_ || outbox_.writing() || outbox_.empty()) return;
    ws_.async_write(asio::buffer(outbox_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->outbox_.pop();
                      if (ec) return self->close();
                      self->flush();
                    });
  }

  void close() {
    closed_ = true;
    timer_.cancel();
    sub_.reset();
  }

  websocket::stream<beast::tcp_stream> ws_;
  asio::steady_timer timer_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  std::shared_ptr<SnapshotHub::Subscription> sub_;
  Outbox outbox_;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Shared& shared) : stream_(std::move(socket)), shared_(shared) {}

  void run() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) return;
                       self->on_request();
                     });
  }

  void on_request() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), shared_)->run(std::move(req_));
        return;
      }
      return respond(http::status::not_found, {{"error", "websocket endpoint is /ws"}});
    }
    const auto target = std::string(req_.target());
    const auto path = target.substr(0, target.find('?'));
    if (path == "/health" && req_.method() == http::verb::get) {
      return respond(http::status::ok, health_json(shared_.session));
    }
    if (path == "/config" && req_.method() == http::verb::get) {
      return respond(http::status::ok, shared_.session.config_json());
    }
    if (path == "/command" && req_.method() == http::verb::post) {
      auto reply = handle_message(shared_.session, req_.body(), shared_.base);
      const bool ok = reply["type"] == "ack";
      return respond(ok ? http::status::ok : http::status::bad_request, reply);
    }
    if (path == "/health" || path == "/config" || path == "/command") {
      return respond(http::status::method_not_allowed, {{"error", "method not allowed"}});
    }
    respond(http::status::not_found, {{"error", fmt::format("no route for {}", path)}});
  }

  void respond(http::status status, const json& body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, "application/json");
    res->set(http::field::access_control_allow_origin, "*");
    res->keep_alive(req_.keep_alive());
    res->body() = body.dump();
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!res->keep_alive()) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->do_read();
                      });
  }

  beast::tcp_stream stream_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

class NdjsonSession : public std::enable_shared_from_this<NdjsonSession> {
 public:
  NdjsonSession(tcp::socket socket, Shared& shared)
      : socket_(std::move(socket)), timer_(socket_.get_executor()), shared_(shared) {}

  void run() {
    sub_ = shared_.session.hub().subscribe();
    do_read();
    arm_timer();
  }

 private:
  void do_read() {
    asio::async_read_until(socket_, buffer_, '\n',
                           [self = shared_from_this()](beast::error_code ec, std::size_t n) {
                             if (ec) return self->close();
                             std::string line(n, '\0');
                             asio::buffer_copy(asio::buffer(line), self->buffer_.data());
                             self->buffer_.consume(n);
                             while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) {
                               line.pop_back();
                             }
                             if (!line.empty()) {
                               self->outbox_.push_reply(
                                   handle_message(self->shared_.session, line, self->shared_.base)
                                       .dump() +
                                   "\n");
                               self->flush();
                             }
                             self->do_read();
                           });
  }

  void arm_timer() {
    timer_.expires_after(kPushPeriod);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      if (auto snap = self->sub_->try_next()) {
        self->outbox_.push_snapshot(snap->to_json().dump() + "\n");
        self->flush();
      }
      self->arm_timer();
    });
  }

  void flush() {
    if (closed_ || outbox_.writing() || outbox_.empty()) return;
    asio::async_write(socket_, asio::buffer(outbox_.front()),
                      [self = shared_from_this()](beast::error_code ec, std::size_t) {
                        self->outbox_.pop();
                        if (ec) return self->close();
                        self->flush();
                      });
  }

  void close() {
    closed_ = true;
    timer_.cancel();
    sub_.reset();
  }

  tcp::socket socket_;
  asio::steady_timer timer_;
  Shared& shared_;
  asio::streambuf buffer_;
  std::shared_ptr<SnapshotHub::Subscription> sub_;
  Outbox outbox_;
  bool closed_ = false;
};

template <class SessionT>
class Listener : public std::enable_shared_from_this<Listener<SessionT>> {
 public:
  Listener(asio::io_context& ioc, const tcp::endpoint& ep, Shared& shared)
      : acceptor_(ioc), shared_(shared) {
    beast::error_code ec;
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
      throw IoError(fmt::format("cannot listen on {}:{}: {}", ep.address().to_string(), ep.port(),
                                ec.message()));
    }
  }

  void run() { do_accept(); }
  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }
  void close() {
    beast::error_code ignored;
    acceptor_.close(ignored);
  }

 private:
  void do_accept() {
    acceptor_.async_accept([self = this->shared_from_this()](beast::error_code ec, tcp::socket s) {
      if (ec == asio::error::operation_aborted) return;
      if (!ec) std::make_shared<SessionT>(std::move(s), self->shared_)->run();
      self->do_accept();
    });
  }

  tcp::acceptor acceptor_;
  Shared& shared_;
};

}  // namespace

struct Server::Impl {
  Impl(LiveSession& session, ServerOptions opts)
      : options(std::move(opts)), shared{session, options.base_config} {}

  ServerOptions options;
  Shared shared;
  asio::io_context ioc{1};
  std::shared_ptr<Listener<HttpSession>> http;
  std::shared_ptr<Listener<NdjsonSession>> ndjson;
  std::thread thread;
};

Server::Server(LiveSession& session, ServerOptions options)
    : impl_(std::make_unique<Impl>(session, std::move(options))) {}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->thread.joinable()) return;
  beast::error_code ec;
  const auto address = asio::ip::make_address(impl_->options.bind, ec);
  if (ec) throw ConfigError(fmt::format("invalid bind address `{}`", impl_->options.bind));
  impl_->http = std::make_shared<Listener<HttpSession>>(
      impl_->ioc, tcp::endpoint{address, impl_->options.port}, impl_->shared);
  if (impl_->options.tcp_port) {
    impl_->ndjson = std::make_shared<Listener<NdjsonSession>>(
        impl_->ioc, tcp::endpoint{address, *impl_->options.tcp_port}, impl_->shared);
  }
  impl_->http->run();
  if (impl_->ndjson) impl_->ndjson->run();
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void Server::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->ioc.stop();
  impl_->thread.join();
}

std::uint16_t Server::port() const { return impl_->http ? impl_->http->port() : 0; }

std::optional<std::uint16_t> Server::tcp_port() const {
  if (!impl_->ndjson) return std::nullopt;
  return impl_->ndjson->port();
}

}  // namespace softbci
