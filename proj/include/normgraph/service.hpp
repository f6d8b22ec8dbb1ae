#pragma once

// JSON-over-HTTP API for the annotation console. `Service::handle` is the
// transport-free core; `HttpServer` binds it to a socket.
//
// Every request carries "Authorization: Bearer <annotator>:<secret>" when a
// secret is configured. Mutations accept "If-Match: <version>" (stale ->
// 409 stale_version) and "Idempotency-Key: <id>" (a retried request gets the
// first response back). Round operations hold an exclusive lock; a second
// one while the first is in flight gets 409 round_in_progress.
//
// Errors are {"code", "message", "offending_ids"}.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "normgraph/config.hpp"
#include "normgraph/provider.hpp"
#include "normgraph/store.hpp"

namespace httplib {
class Server;
}

namespace normgraph::service {

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct Response {
  int status = 200;
  Json body = Json::object();
  std::map<std::string, std::string> headers;
};

struct ServiceOptions {
  /// Empty disables auth; requests then act as annotator "anonymous".
  std::string secret;
  Config config;
  /// Used by POST /verify; absent -> 503.
  std::shared_ptr<ChatProvider> provider;
  /// Test hook: runs while a round operation holds the round lock.
  std::function<void(const std::string&)> on_round_locked;
};

class Service {
 public:
  Service(ProjectStore& store, ServiceOptions opts);
  ~Service();

  Response handle(const Request& req);

 private:
  Response dispatch(const Request& req, const std::string& annotator);
  Response commit(const Request& req, const std::vector<Event>& events, Json extra = Json::object());

  Response get_clusters(const Request& req);
  Response get_samples(const Request& req, const std::string& id);
  Response get_concepts(const Request& req);
  Response get_concept(const Request& req, const std::string& id);
  Response post_concepts(const Request& req, const std::string& annotator);
  Response post_marks(const Request& req, const std::string& id);
  Response post_cluster_round(const Request& req);
  Response post_augment(const Request& req);
  Response post_reassign(const Request& req);
  Response get_progress(const Request& req);
  Response post_judgments(const Request& req, const std::string& annotator);
  Response post_verify(const Request& req);
  Response get_report(const Request& req, const std::string& kind);

  ProjectStore& store_;
  ServiceOptions opts_;
  std::mutex round_mu_;
  std::mutex verify_mu_;
  std::mutex write_mu_;
  std::mutex idem_mu_;
  std::map<std::string, std::pair<std::string, Response>> idempotent_;  // key -> (request hash, response)
};

/// Structured error response.
Response error(int status, const std::string& code, const std::string& message,
               const std::vector<std::string>& offending = {});

/// Serves a Service on host:port from a background thread.
class HttpServer {
 public:
  explicit HttpServer(Service& svc);
  ~HttpServer();
  /// Binds (port 0 picks a free port) and starts listening; returns the port.
  int start(const std::string& host, int port);
  /// Blocks until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  Service& svc_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace normgraph::service
