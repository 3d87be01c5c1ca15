#include <doctest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "softbci/error.hpp"
#include "softbci/server.hpp"

using namespace softbci;
using nlohmann::json;

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

struct Reply {
  unsigned status = 0;
  std::string content_type;
  std::string cors;
  json body;
};

Reply request(std::uint16_t port, http::verb verb, const std::string& target,
              const std::string& body = {}) {
  asio::io_context io;
  beast::tcp_stream stream(io);
  stream.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  if (!body.empty()) {
    req.set(http::field::content_type, "application/json");
    req.body() = body;
    req.prepare_payload();
  }
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  Reply r;
  r.status = res.result_int();
  r.content_type = std::string(res[http::field::content_type]);
  r.cors = std::string(res[http::field::access_control_allow_origin]);
  r.body = json::parse(res.body(), nullptr, false);
  return r;
}

json ws_read(websocket::stream<tcp::socket>& ws) {
  beast::flat_buffer buf;
  ws.read(buf);
  return json::parse(beast::buffers_to_string(buf.data()));
}

/// Reads messages until one of the given type arrives.
json ws_read_type(websocket::stream<tcp::socket>& ws, const std::string& type) {
  for (int i = 0; i < 200; ++i) {
    auto j = ws_read(ws);
    if (j["type"] == type) return j;
  }
  FAIL("no message of type " << type);
  return {};
}

struct Fixture {
  LiveSession session;
  ServerOptions opts;
  std::unique_ptr<Server> server;

  explicit Fixture(bool with_tcp = false) {
    opts.port = 0;
    if (with_tcp) opts.tcp_port = 0;
    opts.base_config.p_ref = 40.0;
    opts.base_config.threshold = 10.0;
    server = std::make_unique<Server>(session, opts);
    server->start();
    session.start_realtime();
  }
  ~Fixture() {
    server->stop();
    session.stop_realtime();
  }
};

}  // namespace

TEST_SUITE("server") {

TEST_CASE("health and config endpoints") {
  Fixture f;
  REQUIRE(f.server->port() != 0);
  auto h = request(f.server->port(), http::verb::get, "/health");
  CHECK(h.status == 200);
  CHECK(h.content_type == "application/json");
  CHECK(h.cors == "*");
  CHECK(h.body["status"] == "ok");
  CHECK(h.body["running"] == false);

  auto c = request(f.server->port(), http::verb::get, "/config");
  CHECK(c.status == 200);
  CHECK(c.body == json::object());

  auto ack = request(f.server->port(), http::verb::post, "/command",
                     R"({"type":"start","config":{"seed":7,"guard":"off"}})");
  CHECK(ack.status == 200);
  CHECK(ack.body["type"] == "ack");
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  c = request(f.server->port(), http::verb::get, "/config");
  CHECK(c.body["seed"] == 7);
  CHECK(c.body["guard"] == false);
  CHECK(c.body["p_ref"] == 40.0);
  h = request(f.server->port(), http::verb::get, "/health");
  CHECK(h.body["running"] == true);

  auto rej = request(f.server->port(), http::verb::post, "/command",
                     R"({"type":"set_param","name":"beta_gain","value":-1})");
  CHECK(rej.status == 400);
  CHECK(rej.body["type"] == "rejection");

  CHECK(request(f.server->port(), http::verb::get, "/nope").status == 404);
  CHECK(request(f.server->port(), http::verb::delete_, "/health").status == 405);
}

TEST_CASE("websocket streams snapshots and answers commands") {
  Fixture f;
  asio::io_context io;
  websocket::stream<tcp::socket> ws(io);
  ws.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), f.server->port()));
  ws.handshake("127.0.0.1", "/ws");

  auto first = ws_read_type(ws, "snapshot");
  CHECK(first["running"] == false);

  ws.write(asio::buffer(std::string(R"({"type":"start"})")));
  auto ack = ws_read_type(ws, "ack");
  CHECK(ack["command"] == "start");

  ws.write(asio::buffer(std::string(R"({"type":"set_param","name":"beta_gain","value":-1})")));
  auto rej = ws_read_type(ws, "rejection");
  CHECK(rej["command"] == "set_param");
  CHECK(rej["reason"].get<std::string>().find("beta_gain") != std::string::npos);

  ws.write(asio::buffer(std::string("not json")));
  CHECK(ws_read_type(ws, "rejection")["reason"] == "message is not valid JSON");

  ws.write(asio::buffer(std::string(R"({"type":"override_alpha","a_psd":100})")));
  CHECK(ws_read_type(ws, "ack")["command"] == "override_alpha");

  std::uint64_t last_seq = first["seq"];
  bool saw_override = false;
  for (int i = 0; i < 10; ++i) {
    auto s = ws_read_type(ws, "snapshot");
    CHECK(s["seq"].get<std::uint64_t>() > last_seq);
    last_seq = s["seq"];
    saw_override = saw_override || s["override_active"] == true;
  }
  CHECK(saw_override);

  auto h = request(f.server->port(), http::verb::get, "/health");
  CHECK(h.body["subscribers"] == 1);
  ws.close(websocket::close_code::normal);
}

TEST_CASE("ndjson fallback speaks the same payloads") {
  Fixture f(true);
  REQUIRE(f.server->tcp_port());
  asio::io_context io;
  tcp::socket sock(io);
  sock.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), *f.server->tcp_port()));
  asio::streambuf buf;
  auto read_line = [&] {
    asio::read_until(sock, buf, '\n');
    std::istream in(&buf);
    std::string line;
    std::getline(in, line);
    return json::parse(line);
  };
  auto read_type = [&](const std::string& type) {
    for (int i = 0; i < 200; ++i) {
      auto j = read_line();
      if (j["type"] == type) return j;
    }
    FAIL("no message of type " << type);
    return json{};
  };
  CHECK(read_type("snapshot").contains("flower"));
  asio::write(sock, asio::buffer(std::string("{\"type\":\"start\"}\n")));
  CHECK(read_type("ack")["command"] == "start");
  asio::write(sock, asio::buffer(std::string("{\"type\":\"set_eyes\",\"eyes\":\"sideways\"}\n")));
  CHECK(read_type("rejection")["command"] == "set_eyes");
}

TEST_CASE("handle_message") {
  LiveSession s;
  RunConfig base;
  base.p_ref = 40.0;
  base.threshold = 10.0;
  CHECK(handle_message(s, "{", base)["reason"] == "message is not valid JSON");
  CHECK(handle_message(s, R"({"type":"stop"})", base)["reason"] == "no active run");
  CHECK(handle_message(s, R"({"type":"start"})", base)["type"] == "ack");
  CHECK(handle_message(s, R"({"type":"set_guard","enabled":"maybe"})", base)["type"] == "rejection");
}

TEST_CASE("busy port is an io error") {
  LiveSession s;
  ServerOptions o;
  o.port = 0;
  Server a(s, o);
  a.start();
  o.port = a.port();
  Server b(s, o);
  CHECK_THROWS_AS(b.start(), IoError);
  a.stop();
}

}  // TEST_SUITE
