#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "seqx/backend.hpp"

namespace seqx {

/// HTTP+JSON transport. A fresh connection is opened per request, so one
/// instance can be shared between threads.
class HttpTransport : public BackendTransport {
 public:
  HttpTransport(std::string name, std::string endpoint, std::string token = {},
                int timeout_seconds = 60);

  LogProbResponse logprobs(const std::string& text) override;
  std::string generate(const std::string& prompt, std::size_t max_new_tokens,
                       bool instruction_wrap) override;
  std::vector<std::string> perturb(const std::string& text, std::size_t n) override;

 private:
  std::string post(const std::string& path, const std::string& body) const;

  std::string name_;
  std::string endpoint_;
  std::string token_;
  int timeout_seconds_;
};

/// Serves a transport over the backend HTTP protocol (POST /logprobs,
/// /generate, /perturb; GET /healthz) on a background thread.
class ProtocolServer {
 public:
  struct Request {
    std::string path;
    std::string body;
  };

  ProtocolServer(std::string model_name, std::shared_ptr<BackendTransport> backend);
  ~ProtocolServer();
  ProtocolServer(const ProtocolServer&) = delete;
  ProtocolServer& operator=(const ProtocolServer&) = delete;

  /// Binds (port 0 = any free port) and starts serving; returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen_blocking(const std::string& host, int port);
  void stop();
  int port() const { return port_; }
  std::string endpoint() const;

  std::vector<Request> requests() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
  std::string host_;
};

}  // namespace seqx
