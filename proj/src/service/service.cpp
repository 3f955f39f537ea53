#include "ccgm/service/service.hpp"

#include <httplib.h>

#include <stdexcept>

#include "ccgm/engine/export.hpp"
#include "ccgm/model/checkpoint.hpp"

namespace ccgm::service {

namespace {

using nlohmann::json;

Response error(int status, const std::string& code, const std::string& message,
               json extra = json::object()) {
  extra["code"] = code;
  extra["message"] = message;
  return {status, {{"error", std::move(extra)}}};
}

Response no_model() { return error(409, "no_model", "no model loaded"); }
Response no_sample() { return error(409, "no_sample", "no active sample; POST /sample first"); }

struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json parse_body(const std::string& body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw BadRequest("body must be a JSON object");
  return doc;
}

// Features as a 1 x d row; wrong length is reported separately from malformed input.
std::optional<Response> read_features(const json& doc, std::size_t d, diff::Matrix& out) {
  if (!doc.contains("features") || !doc["features"].is_array()) {
    return error(400, "bad_request", "field 'features' must be an array of numbers");
  }
  const auto& f = doc["features"];
  for (const auto& v : f)
    if (!v.is_number()) return error(400, "bad_request", "field 'features' must be an array of numbers");
  if (f.size() != d) {
    return error(422, "wrong_dimension",
                 "expected " + std::to_string(d) + " features, got " + std::to_string(f.size()),
                 {{"expected_dim", d}, {"got_dim", f.size()}});
  }
  out = diff::Matrix(1, d);
  for (std::size_t i = 0; i < d; ++i) out(0, i) = f[i].get<double>();
  return std::nullopt;
}

engine::InterventionSpec read_spec(const json& doc, const std::vector<std::string>& names) {
  if (!doc.contains("spec")) return {};
  return engine::InterventionSpec::from_json(doc["spec"], names);
}

template <typename F>
Response guarded(F&& f) {
  try {
    return f();
  } catch (const BadRequest& e) {
    return error(400, "bad_request", e.what());
  } catch (const std::invalid_argument& e) {
    return error(422, "invalid", e.what());
  } catch (const json::exception& e) {
    return error(400, "bad_request", e.what());
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

}  // namespace

json node_states_json(const std::vector<std::string>& names, const engine::NodeStateVector& states) {
  json nodes = json::array();
  for (std::size_t i = 0; i < states.size(); ++i) {
    nodes.push_back({{"name", names[i]},
                     {"probability", states[i].probability},
                     {"state", states[i].state},
                     {"provenance", engine::to_string(states[i].provenance)},
                     {"embedding", states[i].embedding}});
  }
  return {{"nodes", std::move(nodes)}};
}

void Session::load(model::CgmModel model, std::optional<diff::Matrix> reference) {
  if (reference && reference->cols() != model.config().d) {
    throw std::invalid_argument("reference data has " + std::to_string(reference->cols()) +
                                " features, model expects " + std::to_string(model.config().d));
  }
  auto snap = std::make_shared<Snapshot>();
  snap->model = std::move(model);
  snap->reference = std::move(reference);
  snap->graph = engine::annotated_structured(snap->model, snap->reference ? &*snap->reference : nullptr);
  {
    std::lock_guard lock(snapshot_mu_);
    snapshot_ = std::move(snap);
  }
  std::lock_guard state(state_mu_);
  active_.reset();
  spec_ = {};
}

void Session::load_checkpoint(const std::filesystem::path& checkpoint,
                              const std::optional<std::filesystem::path>& dataset_csv) {
  model::CgmModel m = model::load_cgm(checkpoint);
  std::optional<diff::Matrix> ref;
  if (dataset_csv) ref = data::read_csv(*dataset_csv).features;
  load(std::move(m), std::move(ref));
}

std::shared_ptr<const Snapshot> Session::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

Response Session::health() const {
  const auto snap = snapshot();
  json body{{"status", "ok"}, {"model_loaded", snap != nullptr}};
  if (snap) {
    body["k"] = snap->model.k();
    body["feature_dim"] = snap->model.config().d;
    body["pns_available"] = snap->reference.has_value();
  }
  return {200, body};
}

Response Session::graph() const {
  const auto snap = snapshot();
  if (!snap) return no_model();
  return {200, snap->graph};
}

Response Session::sample(const std::string& body) {
  return guarded([&]() -> Response {
    const auto snap = snapshot();
    if (!snap) return no_model();
    const json doc = parse_body(body);
    diff::Matrix x;
    if (auto err = read_features(doc, snap->model.config().d, x)) return *err;
    const auto result = engine::unfold_predict(snap->model, x);
    std::lock_guard lock(state_mu_);
    active_ = std::move(x);
    spec_ = {};
    return {200, node_states_json(snap->model.concept_names(), result.sample(0))};
  });
}

Response Session::predict(const std::string& body) const {
  return guarded([&]() -> Response {
    const auto snap = snapshot();
    if (!snap) return no_model();
    const json doc = parse_body(body);
    diff::Matrix x;
    if (auto err = read_features(doc, snap->model.config().d, x)) return *err;
    return {200, node_states_json(snap->model.concept_names(), engine::unfold_predict(snap->model, x).sample(0))};
  });
}

Response Session::intervene(const std::string& body) {
  return guarded([&]() -> Response {
    const auto snap = snapshot();
    if (!snap) return no_model();
    const json doc = parse_body(body);
    const auto& names = snap->model.concept_names();
    const engine::InterventionSpec spec = read_spec(doc, names);
    std::lock_guard lock(state_mu_);
    if (!active_) return no_sample();
    const auto before = engine::unfold_predict(snap->model, *active_).sample(0);
    const auto after = engine::unfold_predict(snap->model, *active_, spec).sample(0);
    spec_ = spec;
    json changed = json::array();
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (before[i].probability != after[i].probability || after[i].provenance != before[i].provenance) {
        changed.push_back(names[i]);
      }
    }
    return {200,
            {{"spec", spec.to_json(names)},
             {"before", node_states_json(names, before)["nodes"]},
             {"after", node_states_json(names, after)["nodes"]},
             {"changed", std::move(changed)}}};
  });
}

Response Session::counterfactual(const std::string& body) {
  return guarded([&]() -> Response {
    const auto snap = snapshot();
    if (!snap) return no_model();
    const json doc = parse_body(body);
    const engine::InterventionSpec spec = read_spec(doc, snap->model.concept_names());
    std::lock_guard lock(state_mu_);
    if (!active_) return no_sample();
    return {200, engine::counterfactual_query(snap->model, *active_, spec).to_json()};
  });
}

Response Session::pns() const {
  return guarded([&]() -> Response {
    const auto snap = snapshot();
    if (!snap) return no_model();
    if (!snap->reference) return error(409, "no_dataset", "PNS needs a dataset; start with --dataset");
    const auto& names = snap->model.concept_names();
    json rows = json::array();
    for (const auto& r : engine::pns_table(snap->model, *snap->reference)) {
      rows.push_back({{"cause", names[r.cause]},
                      {"cause_value", r.cause_value},
                      {"effect", names[r.effect]},
                      {"effect_value", 1},
                      {"value", r.bounds.upper},
                      {"lower", r.bounds.lower},
                      {"upper", r.bounds.upper},
                      {"p1", r.bounds.p1},
                      {"p0", r.bounds.p0}});
    }
    return {200, {{"rows", std::move(rows)}}};
  });
}

void mount(httplib::Server& server, Session& session) {
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get("/health", [&, reply](const httplib::Request&, httplib::Response& res) { reply(res, session.health()); });
  server.Get("/graph", [&, reply](const httplib::Request&, httplib::Response& res) { reply(res, session.graph()); });
  server.Get("/pns", [&, reply](const httplib::Request&, httplib::Response& res) { reply(res, session.pns()); });
  server.Post("/sample", [&, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, session.sample(req.body));
  });
  server.Post("/predict", [&, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, session.predict(req.body));
  });
  server.Post("/intervene", [&, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, session.intervene(req.body));
  });
  server.Post("/counterfactual", [&, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, session.counterfactual(req.body));
  });
}

bool serve(Session& session, const std::string& host, int port) {
  httplib::Server server;
  mount(server, session);
  return server.listen(host, port);
}

}  // namespace ccgm::service
