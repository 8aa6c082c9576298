#include "kgr/service.hpp"

#include <atomic>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace kgr {

using nlohmann::json;

std::shared_ptr<const Backend> Backend::build(std::vector<QASample> samples) {
    auto backend = std::make_shared<Backend>();
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].sample_id == "*")
            throw std::invalid_argument("sample_id \"*\" is reserved");
        if (!backend->index.emplace(samples[i].sample_id, i).second)
            throw std::invalid_argument("duplicate sample_id \"" +
                                        samples[i].sample_id + "\"");
    }
    backend->samples = std::move(samples);
    return backend;
}

const KnowledgeGraph* Backend::graph_for(const std::string& sample_id) const {
    if (sample_id == "*") {
        std::lock_guard lock(shared_graph_mutex);
        if (!shared_graph) {
            std::vector<Triple> all;
            for (const QASample& s : samples)
                for (const Triple& t : s.graph->triples()) all.push_back(t);
            shared_graph = std::make_shared<KnowledgeGraph>(std::move(all));
        }
        return shared_graph.get();
    }
    auto it = index.find(sample_id);
    return it == index.end() ? nullptr : samples[it->second].graph.get();
}

struct KgService::Impl {
    ServiceConfig config;
    std::shared_ptr<const Backend> backend;
    mutable std::mutex backend_mutex;
    httplib::Server server;
    std::thread server_thread;
    std::chrono::steady_clock::time_point started_at;

    std::shared_ptr<const Backend> snapshot() const {
        std::lock_guard lock(backend_mutex);
        return backend;
    }
};

namespace {

RetrieveResponse from_observation(const Observation& obs, double timing_ms) {
    RetrieveResponse response;
    response.ok = obs.ok;
    response.rendered_text = obs.text;
    if (obs.ok)
        response.result_labels = obs.labels;
    else if (obs.error)
        response.error_code = error_code_name(*obs.error);
    response.timing_ms = timing_ms;
    return response;
}

RetrieveResponse handle_retrieve(const Backend& backend,
                                 const ServiceConfig& config,
                                 const RetrieveRequest& request) {
    auto start = std::chrono::steady_clock::now();
    const KnowledgeGraph* graph = backend.graph_for(request.sample_id);
    Observation obs;
    if (!graph) {
        obs = sample_not_found(request.sample_id);
    } else {
        FormatMode mode =
            request.format_mode_set ? request.format_mode : config.format_mode;
        obs = execute(*graph, {request.action_name, request.args}, mode,
                      config.result_cap);
    }
    double ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    return from_observation(obs, ms);
}

json response_to_json(const RetrieveResponse& response) {
    json out{{"status", response.ok ? "ok" : "error"},
             {"rendered_text", response.rendered_text},
             {"timing_ms", response.timing_ms}};
    if (response.ok)
        out["result_labels"] = response.result_labels;
    else
        out["error_code"] = response.error_code;
    return out;
}

// Missing/ill-typed fields yield a catalogue-style protocol error.
std::optional<RetrieveRequest> request_from_json(const json& body,
                                                 std::string* error) {
    if (!body.is_object() || !body.contains("sample_id") ||
        !body.contains("action_name") || !body["sample_id"].is_string() ||
        !body["action_name"].is_string()) {
        *error = "Missing required fields for retrieve: sample_id, action_name";
        return std::nullopt;
    }
    RetrieveRequest request;
    request.sample_id = body["sample_id"].get<std::string>();
    request.action_name = body["action_name"].get<std::string>();
    if (request.sample_id.empty()) {
        *error = "Missing required fields for retrieve: sample_id";
        return std::nullopt;
    }
    if (body.contains("args")) {
        if (!body["args"].is_array()) {
            *error = "Field \"args\" must be a list of strings";
            return std::nullopt;
        }
        for (const auto& a : body["args"]) {
            if (!a.is_string()) {
                *error = "Field \"args\" must be a list of strings";
                return std::nullopt;
            }
            request.args.push_back(a.get<std::string>());
        }
    }
    if (body.contains("format_mode")) {
        std::string mode = body["format_mode"].get<std::string>();
        if (mode == "hierarchical")
            request.format_mode = FormatMode::Hierarchical;
        else if (mode == "flat")
            request.format_mode = FormatMode::Flat;
        else {
            *error = "Field \"format_mode\" must be \"flat\" or \"hierarchical\"";
            return std::nullopt;
        }
        request.format_mode_set = true;
    }
    return request;
}

void protocol_error(httplib::Response& res, const std::string& message) {
    json out{{"status", "error"},
             {"error_code", "KG_FORMAT_ERROR"},
             {"rendered_text", message}};
    res.status = 400;
    res.set_content(out.dump(), "application/json");
}

}  // namespace

KgService::KgService(std::vector<QASample> dataset, ServiceConfig config)
    : impl_(std::make_unique<Impl>()) {
    impl_->config = config;
    impl_->backend = Backend::build(std::move(dataset));
    impl_->started_at = std::chrono::steady_clock::now();

    impl_->server.set_read_timeout(config.request_timeout_seconds, 0);
    impl_->server.set_write_timeout(config.request_timeout_seconds, 0);

    impl_->server.Post("/retrieve", [this](const httplib::Request& req,
                                           httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded()) {
            protocol_error(res, "Request body is not valid JSON");
            return;
        }
        std::string error;
        auto request = request_from_json(body, &error);
        if (!request) {
            protocol_error(res, error);
            return;
        }
        auto backend = impl_->snapshot();
        auto response = handle_retrieve(*backend, impl_->config, *request);
        res.set_content(response_to_json(response).dump(), "application/json");
    });

    impl_->server.Post("/retrieve/batch", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_array()) {
            protocol_error(res, "Request body must be a JSON array");
            return;
        }
        auto backend = impl_->snapshot();  // one snapshot for the whole batch
        json out = json::array();
        for (const auto& item : body) {
            std::string error;
            auto request = request_from_json(item, &error);
            if (!request) {
                out.push_back(json{{"status", "error"},
                                   {"error_code", "KG_FORMAT_ERROR"},
                                   {"rendered_text", error}});
                continue;
            }
            out.push_back(response_to_json(
                handle_retrieve(*backend, impl_->config, *request)));
        }
        res.set_content(out.dump(), "application/json");
    });

    impl_->server.Get("/health", [this](const httplib::Request&,
                                        httplib::Response& res) {
        auto backend = impl_->snapshot();
        size_t triples = 0, entities = 0;
        for (const QASample& s : backend->samples) {
            triples += s.graph->triple_count();
            entities += s.graph->entity_count();
        }
        double uptime = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - impl_->started_at)
                            .count();
        json out{{"status", "ok"},
                 {"samples", backend->samples.size()},
                 {"total_triples", triples},
                 {"total_entities", entities},
                 {"uptime_seconds", uptime}};
        res.set_content(out.dump(), "application/json");
    });

    impl_->server.Get(R"(/samples/(.+))", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
        auto backend = impl_->snapshot();
        std::string id = req.matches[1];
        auto it = backend->index.find(id);
        if (it == backend->index.end()) {
            json out{{"status", "error"},
                     {"error_code", "KG_SAMPLE_NOT_FOUND"},
                     {"rendered_text",
                      "Sample \"" + id + "\" not found in KG"}};
            res.status = 404;
            res.set_content(out.dump(), "application/json");
            return;
        }
        // anchor entities and graph statistics only; gold answers are
        // never serialized on any endpoint
        const QASample& sample = backend->samples[it->second];
        json out{{"sample_id", sample.sample_id},
                 {"anchor_entities", sample.anchor_entities},
                 {"entities", sample.graph->entity_count()},
                 {"relations", sample.graph->relation_count()},
                 {"triples", sample.graph->triple_count()}};
        res.set_content(out.dump(), "application/json");
    });

    impl_->server.Post("/admin/swap", [this](const httplib::Request& req,
                                             httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() ||
            !body.contains("samples") || !body["samples"].is_array()) {
            protocol_error(res, "Swap body must carry a \"samples\" array");
            return;
        }
        std::stringstream rows;
        for (const auto& row : body["samples"]) rows << row.dump() << '\n';
        QALoadResult loaded = load_qa_dataset(rows);
        if (!loaded.errors.empty()) {
            json out{{"status", "error"},
                     {"rendered_text", "dataset rejected"},
                     {"errors", loaded.errors}};
            res.status = 400;
            res.set_content(out.dump(), "application/json");
            return;
        }
        try {
            swap_backend(std::move(loaded.samples));
        } catch (const std::invalid_argument& err) {
            protocol_error(res, err.what());
            return;
        }
        auto backend = impl_->snapshot();
        json out{{"status", "ok"}, {"samples", backend->samples.size()}};
        res.set_content(out.dump(), "application/json");
    });
}

KgService::~KgService() { stop(); }

int KgService::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw std::runtime_error("failed to bind service port");
    } else if (!impl_->server.bind_to_port(host, port)) {
        throw std::runtime_error("failed to bind service to port " +
                                 std::to_string(port));
    }
    impl_->server_thread =
        std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void KgService::stop() {
    if (impl_->server_thread.joinable()) {
        impl_->server.stop();
        impl_->server_thread.join();
    }
}

void KgService::swap_backend(std::vector<QASample> dataset) {
    auto next = Backend::build(std::move(dataset));  // validated before swap
    std::lock_guard lock(impl_->backend_mutex);
    impl_->backend = std::move(next);
}

RetrieveResponse KgService::retrieve(const RetrieveRequest& request) const {
    auto backend = impl_->snapshot();
    return handle_retrieve(*backend, impl_->config, request);
}

}  // namespace kgr
