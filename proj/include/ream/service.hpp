#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "ream/augmentor.hpp"
#include "ream/corpus.hpp"
#include "ream/embeddings.hpp"
#include "ream/model.hpp"
#include "ream/training.hpp"

namespace ream::service {

struct ServiceOptions {
  int default_max_attempts = augment::AnnotationSession::kDefaultMaxAttempts;
  // Corpus for oracle sessions: a create request carrying "sample_id" is
  // scored with the gold labeler of that sample instead of the model.
  std::shared_ptr<const Corpus> oracle_corpus;
  model::Labeler oracle_labeler;
  // Written with every session's export on stop() when non-empty.
  std::filesystem::path snapshot_path;
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

// HTTP API over a loaded model:
//   POST /score                     {query, references}        -> {score}
//   POST /sessions                  {query, initial_refs, candidates, max_attempts?, sample_id?}
//   GET  /sessions/{id}                                        -> session view
//   POST /sessions/{id}/decision    {action, text?}            -> {feedback, view}
//   GET  /sessions/{id}/export                                 -> full session JSON
// Errors are {"error": str} with 400 (bad request), 404 (unknown session or
// route), 409 (session finished) or 503 (encoder unavailable).
class Service {
 public:
  Service(std::shared_ptr<const EmbeddingProvider> provider,
          std::shared_ptr<const model::ModelParams> params, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Routes one request without any socket I/O.
  Response handle(const std::string& method, const std::string& path, const std::string& body);

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

  augment::SessionStore& sessions() { return store_; }
  nlohmann::json snapshot() const;

 private:
  struct Http;

  Response score(const nlohmann::json& body);
  Response create_session(const nlohmann::json& body);
  Response get_session(const std::string& id, bool full);
  Response decide(const std::string& id, const nlohmann::json& body);

  std::shared_ptr<const EmbeddingProvider> provider_;
  std::shared_ptr<const model::ModelParams> params_;
  augment::SetScorer scorer_;
  ServiceOptions options_;
  augment::SessionStore store_;
  std::unique_ptr<Http> http_;
  std::thread thread_;
};

}  // namespace ream::service
