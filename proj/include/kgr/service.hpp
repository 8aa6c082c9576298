#pragma once
// KG retrieval server: per-sample graph scoping, batch execution, health
// and sample-inspection endpoints, and atomic backend swap.

#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "kgr/actions.hpp"
#include "kgr/graph.hpp"

namespace kgr {

struct ServiceConfig {
    FormatMode format_mode = FormatMode::Flat;
    size_t result_cap = kDefaultResultCap;
    int request_timeout_seconds = 5;
};

struct RetrieveRequest {
    std::string sample_id;
    std::string action_name;
    std::vector<std::string> args;
    FormatMode format_mode = FormatMode::Flat;
    bool format_mode_set = false;  // request override vs service default
};

struct RetrieveResponse {
    bool ok = false;
    std::string rendered_text;
    std::vector<std::string> result_labels;  // ok only
    std::string error_code;                  // error only
    double timing_ms = 0.0;
};

// Immutable snapshot resolved per request; swapped atomically.
struct Backend {
    std::vector<QASample> samples;
    std::unordered_map<std::string, size_t> index;
    mutable std::mutex shared_graph_mutex;
    mutable GraphPtr shared_graph;  // union graph for sample_id "*", lazy

    static std::shared_ptr<const Backend> build(std::vector<QASample> samples);
    const KnowledgeGraph* graph_for(const std::string& sample_id) const;
};

class KgService {
public:
    KgService(std::vector<QASample> dataset, ServiceConfig config = {});
    ~KgService();

    // Blocks until the listener is ready; returns the bound port.
    int start(const std::string& host, int port);
    void stop();

    // Atomic with respect to request dispatch; invalid datasets are
    // rejected and the old backend retained.
    void swap_backend(std::vector<QASample> dataset);

    // Direct engine invocation on the current backend (differential tests).
    RetrieveResponse retrieve(const RetrieveRequest& request) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace kgr
