#include "seqx/http_transport.hpp"

#include <httplib.h>

#include "seqx/error.hpp"
#include "seqx/protocol.hpp"

namespace seqx {

HttpTransport::HttpTransport(std::string name, std::string endpoint, std::string token,
                             int timeout_seconds)
    : name_(std::move(name)),
      endpoint_(std::move(endpoint)),
      token_(std::move(token)),
      timeout_seconds_(timeout_seconds) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
}

std::string HttpTransport::post(const std::string& path, const std::string& body) const {
  httplib::Client client(endpoint_);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) {
    throw TransportError(name_, "POST " + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500) {
    throw TransportError(name_, "POST " + path + " returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw ProtocolError(name_, "POST " + path + " returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

LogProbResponse HttpTransport::logprobs(const std::string& text) {
  const auto body = post("/logprobs", protocol::encode_logprobs_request(text).dump());
  return protocol::decode_logprobs_response(name_, protocol::parse_body(name_, body), text);
}

std::string HttpTransport::generate(const std::string& prompt, std::size_t max_new_tokens,
                                    bool instruction_wrap) {
  const auto body = post("/generate", protocol::encode_generate_request(prompt, max_new_tokens,
                                                                       instruction_wrap).dump());
  return protocol::decode_generate_response(name_, protocol::parse_body(name_, body));
}

std::vector<std::string> HttpTransport::perturb(const std::string& text, std::size_t n) {
  const auto body = post("/perturb", protocol::encode_perturb_request(text, n).dump());
  return protocol::decode_perturb_response(name_, protocol::parse_body(name_, body));
}

// ---------------------------------------------------------------------------

struct ProtocolServer::Impl {
  httplib::Server server;
  std::string model;
  std::shared_ptr<BackendTransport> backend;
  mutable std::mutex mu;
  std::vector<Request> log;
};

namespace {

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(protocol::json{{"error", message}}.dump(), "application/json");
}

}  // namespace

ProtocolServer::ProtocolServer(std::string model_name, std::shared_ptr<BackendTransport> backend)
    : impl_(std::make_unique<Impl>()) {
  impl_->model = std::move(model_name);
  impl_->backend = std::move(backend);
  Impl* impl = impl_.get();

  auto handle = [impl](const std::string& path, auto&& fn) {
    impl->server.Post(path, [impl, path, fn](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(impl->mu);
        impl->log.push_back({path, req.body});
      }
      try {
        const auto body = protocol::json::parse(req.body);
        res.set_content(fn(body).dump(), "application/json");
      } catch (const protocol::json::exception& e) {
        reply_error(res, 400, e.what());
      } catch (const InputError& e) {
        reply_error(res, 400, e.what());
      } catch (const std::exception& e) {
        reply_error(res, 503, e.what());
      }
    });
  };

  handle("/logprobs", [impl](const protocol::json& body) {
    const auto text = body.at("text").get<std::string>();
    if (text.empty()) throw InputError("empty text");
    auto response = impl->backend->logprobs(text);
    response.backend = impl->model;
    return protocol::encode_logprobs_response(response, text);
  });
  handle("/generate", [impl](const protocol::json& body) {
    std::string prompt = body.at("prompt").get<std::string>();
    const auto max_new = body.at("max_new_tokens").get<std::size_t>();
    const bool wrap = body.value("instruction_wrap", false);
    if (wrap && !prompt.starts_with(kContinuationInstruction)) {
      prompt = std::string(kContinuationInstruction) + prompt;
    }
    return protocol::encode_generate_response(impl->backend->generate(prompt, max_new, wrap));
  });
  handle("/perturb", [impl](const protocol::json& body) {
    const auto text = body.at("text").get<std::string>();
    const auto n = body.at("n").get<std::size_t>();
    if (n == 0) throw InputError("n must be >= 1");
    return protocol::encode_perturb_response(impl->backend->perturb(text, n));
  });
  impl_->server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"status\":\"ok\"}", "application/json");
  });
}

ProtocolServer::~ProtocolServer() { stop(); }

int ProtocolServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? impl_->server.bind_to_any_port(host) : port;
  if (port != 0 && !impl_->server.bind_to_port(host, port)) {
    throw InputError("cannot bind " + host + ":" + std::to_string(port));
  }
  if (port_ < 0) throw InputError("cannot bind " + host);
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void ProtocolServer::listen_blocking(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!impl_->server.listen(host, port)) {
    throw InputError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void ProtocolServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string ProtocolServer::endpoint() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

std::vector<ProtocolServer::Request> ProtocolServer::requests() const {
  std::lock_guard lock(impl_->mu);
  return impl_->log;
}

}  // namespace seqx
