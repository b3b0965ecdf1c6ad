#pragma once

// JSON-over-HTTP front end of a Session, consumed by the annotator UI.
//
//   GET  /api/session                     session state
//   GET  /api/question?annotator=ID       next leased question; 204 when the batch is exhausted
//   POST /api/answer                      {"question_id", "choice": "A"|"B", "annotator_id"}
//   GET  /api/image/{id}                  PNG
//   GET  /api/dendrogram                  nested JSON; ?format=newick for Newick
//   GET  /api/report?format=csv|json      NMI per level, method vs pixel baseline
//   POST /api/round/advance?force=1&wait=1
//                                         closes the round; retraining runs in the background unless wait=1
//
// Errors map to 400 (bad input), 404 (unknown id), 409 (wrong phase) with {"error": message}.

#include <afc/session.hpp>

#include <filesystem>
#include <memory>
#include <string>

namespace afc {

class HttpService {
public:
    explicit HttpService(Session& session, std::filesystem::path static_dir = {});
    ~HttpService();

    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Binds to host:port (0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(). Call after bind().
    void run();
    /// bind() plus run() on a background thread.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace afc
