#include "ream/service.hpp"

#include <fstream>
#include <regex>

#include <httplib.h>

#include "ream/errors.hpp"
#include "ream/log.hpp"

namespace ream::service {

struct Service::Http {
  httplib::Server server;
};

namespace {

Response error(int status, const std::string& msg) { return {status, {{"error", msg}}}; }

std::vector<std::string> string_list(const nlohmann::json& body, const char* key, bool required) {
  if (!body.contains(key)) {
    if (required) throw ValidationError(std::string("missing field '") + key + "'");
    return {};
  }
  const auto& v = body.at(key);
  if (!v.is_array()) throw ValidationError(std::string("'") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ValidationError(std::string("'") + key + "' must contain strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::string required_string(const nlohmann::json& body, const char* key) {
  if (!body.contains(key) || !body.at(key).is_string())
    throw ValidationError(std::string("missing string field '") + key + "'");
  return body.at(key).get<std::string>();
}

}  // namespace

Service::Service(std::shared_ptr<const EmbeddingProvider> provider,
                 std::shared_ptr<const model::ModelParams> params, ServiceOptions options)
    : provider_(std::move(provider)),
      params_(std::move(params)),
      scorer_(augment::model_scorer(provider_, params_)),
      options_(std::move(options)) {}

Service::~Service() { stop(); }

Response Service::handle(const std::string& method, const std::string& path,
                         const std::string& body) {
  static const std::regex kSession(R"(^/sessions/([A-Za-z0-9_-]+)(/decision|/export)?/?$)");
  try {
    auto parse = [&] {
      auto j = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
      if (!j.is_object()) throw ValidationError("request body must be a JSON object");
      return j;
    };
    std::smatch m;
    if (path == "/score" && method == "POST") return score(parse());
    if ((path == "/sessions" || path == "/sessions/") && method == "POST")
      return create_session(parse());
    if (std::regex_match(path, m, kSession)) {
      const std::string id = m[1];
      const std::string tail = m[2];
      if (tail.empty() && method == "GET") return get_session(id, false);
      if (tail == "/export" && method == "GET") return get_session(id, true);
      if (tail == "/decision" && method == "POST") return decide(id, parse());
      return error(405, "method not allowed");
    }
    if (path == "/health" && method == "GET") return {200, {{"status", "ok"}}};
    return error(404, "no route for " + method + " " + path);
  } catch (const nlohmann::json::exception& e) {
    return error(400, std::string("invalid JSON: ") + e.what());
  } catch (const ValidationError& e) {
    return error(400, e.what());
  } catch (const StateError& e) {
    return error(409, e.what());
  } catch (const TransportError& e) {
    return error(503, e.what());
  } catch (const MissingEmbeddingError& e) {
    return error(503, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

Response Service::score(const nlohmann::json& body) {
  const auto query = required_string(body, "query");
  const auto refs = string_list(body, "references", true);
  if (refs.empty()) throw ValidationError("references must not be empty");
  return {200, {{"score", scorer_(query, refs)}}};
}

Response Service::create_session(const nlohmann::json& body) {
  const auto query = required_string(body, "query");
  auto init = string_list(body, "initial_refs", true);
  auto candidates = string_list(body, "candidates", false);
  if (init.empty()) throw ValidationError("initial_refs must not be empty");
  int max_attempts = options_.default_max_attempts;
  if (body.contains("max_attempts")) {
    if (!body["max_attempts"].is_number_integer())
      throw ValidationError("max_attempts must be an integer");
    max_attempts = body["max_attempts"].get<int>();
  }
  augment::SetScorer scorer = scorer_;
  if (body.contains("sample_id")) {
    if (!options_.oracle_corpus || !options_.oracle_labeler)
      throw ValidationError("this server has no oracle corpus; omit sample_id");
    const auto sid = required_string(body, "sample_id");
    std::shared_ptr<const EvalSample> sample;
    for (const auto& s : *options_.oracle_corpus)
      if (s.query.id == sid) sample = std::shared_ptr<const EvalSample>(options_.oracle_corpus, &s);
    if (!sample) throw ValidationError("unknown sample_id '" + sid + "'");
    scorer = augment::oracle_scorer(sample, options_.oracle_labeler);
  }
  auto entry = store_.create(query, std::move(init), std::move(candidates), std::move(scorer),
                             max_attempts);
  std::lock_guard lock(entry->mu);
  return {201, entry->session->view()};
}

Response Service::get_session(const std::string& id, bool full) {
  auto entry = store_.find(id);
  if (!entry) return error(404, "unknown session '" + id + "'");
  std::lock_guard lock(entry->mu);
  return {200, full ? entry->session->export_json() : entry->session->view()};
}

Response Service::decide(const std::string& id, const nlohmann::json& body) {
  auto entry = store_.find(id);
  if (!entry) return error(404, "unknown session '" + id + "'");
  augment::Decision d;
  d.kind = augment::decision_from_string(required_string(body, "action"));
  if (d.kind == augment::DecisionKind::edit) d.text = required_string(body, "text");
  std::lock_guard lock(entry->mu);
  const auto fb = entry->session->decide(d);
  return {200,
          {{"feedback",
            {{"outcome", augment::to_string(fb.outcome)},
             {"score", fb.score},
             {"delta", fb.delta},
             {"message", fb.message}}},
           {"view", entry->session->view()}}};
}

nlohmann::json Service::snapshot() const {
  auto out = nlohmann::json::array();
  for (const auto& id : store_.ids()) {
    auto entry = store_.find(id);
    std::lock_guard lock(entry->mu);
    out.push_back(entry->session->export_json());
  }
  return out;
}

int Service::start(const std::string& host, int port) {
  if (http_) throw StateError("service already started");
  http_ = std::make_unique<Http>();
  auto& srv = http_->server;
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Get(".*", dispatch);
  srv.Post(".*", dispatch);
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  int bound = port;
  if (port == 0) {
    bound = srv.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
  } else if (!srv.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  log::info("serving on http://" + host + ":" + std::to_string(bound));
  return bound;
}

void Service::stop() {
  if (!http_) return;
  http_->server.stop();
  if (thread_.joinable()) thread_.join();
  http_.reset();
  if (!options_.snapshot_path.empty()) {
    std::ofstream out(options_.snapshot_path);
    if (out) out << snapshot().dump(2) << '\n';
    else log::warning("cannot write session snapshot " + options_.snapshot_path.string());
  }
}

}  // namespace ream::service
