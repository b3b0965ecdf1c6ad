#include <afc/error.hpp>
#include <afc/http_service.hpp>

#include <httplib.h>
#include <json.hpp>

#include <thread>

namespace afc {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}}.dump());
}

json question_json(const TripletQuery& q, int round, const std::string& prompt) {
    auto image = [](const ImageId& id) { return json{{"id", id}, {"url", "/api/image/" + id}}; };
    return {{"question_id", q.id},      {"round", round},
            {"anchor", image(q.anchor)}, {"option_a", image(q.option_a)},
            {"option_b", image(q.option_b)}, {"status", to_string(q.status)},
            {"prompt", prompt}};
}

json triplet_json(const Triplet& t) {
    return {{"anchor", t.anchor}, {"positive", t.positive}, {"negative", t.negative}};
}

// Runs a handler body and maps library exceptions to HTTP statuses.
template <typename F>
httplib::Server::Handler guarded(F body) {
    return [body](const httplib::Request& req, httplib::Response& res) {
        try {
            body(req, res);
        } catch (const InputError& e) {
            send_error(res, 400, e.what());
        } catch (const LookupError& e) {
            send_error(res, 404, e.what());
        } catch (const StateError& e) {
            send_error(res, 409, e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    };
}

} // namespace

struct HttpService::Impl {
    Session& session;
    httplib::Server server;
    std::thread listener;
    std::thread trainer;
    std::mutex trainer_mutex;
    std::mutex error_mutex;
    std::string last_error;

    explicit Impl(Session& s) : session(s) {}

    void join_trainer() {
        if (trainer.joinable()) trainer.join();
    }

    void routes() {
        server.Get("/api/session", guarded([this](const httplib::Request&, httplib::Response& res) {
            json j = json::parse(session_state_json(session.state()));
            std::lock_guard lock(error_mutex);
            if (!last_error.empty()) j["last_error"] = last_error;
            send_json(res, 200, j.dump());
        }));

        server.Get("/api/question", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("annotator")) throw InputError("missing 'annotator' parameter");
            auto q = session.next_question(req.get_param_value("annotator"));
            if (!q) {
                res.status = 204;
                return;
            }
            send_json(res, 200, question_json(*q, session.state().round, session.config().prompt).dump());
        }));

        server.Post("/api/answer", guarded([this](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body);
            if (!body.is_object()) throw InputError("answer body must be a JSON object");
            if (!body.contains("question_id") || !body["question_id"].is_number_unsigned())
                throw InputError("'question_id' must be a non-negative integer");
            if (!body.contains("choice") || !body["choice"].is_string()) throw InputError("'choice' must be \"A\" or \"B\"");
            if (!body.contains("annotator_id") || !body["annotator_id"].is_string())
                throw InputError("'annotator_id' must be a string");
            Choice choice = choice_from_string(body["choice"].get<std::string>());
            auto result = session.submit_answer(body["question_id"].get<QuestionId>(), choice,
                                                body["annotator_id"].get<std::string>());
            send_json(res, 200, json{{"recorded", result.recorded}, {"triplet", triplet_json(result.triplet)}}.dump());
        }));

        server.Get("/api/image/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto& id = req.path_params.at("id");
            if (!session.images().contains(id)) throw LookupError("unknown image '" + id + "'");
            auto png = encode_png(session.images().at(id));
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));

        server.Get("/api/dendrogram", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (req.get_param_value("format") == "newick") {
                res.set_content(dendrogram_to_newick(session.dendrogram()) + "\n", "text/plain");
                return;
            }
            send_json(res, 200, session.dendrogram_json());
        }));

        server.Get("/api/report", guarded([this](const httplib::Request& req, httplib::Response& res) {
            unsigned max_level = 3;
            if (req.has_param("max_level")) {
                try {
                    max_level = static_cast<unsigned>(std::stoul(req.get_param_value("max_level")));
                } catch (const std::exception&) {
                    throw InputError("'max_level' must be a non-negative integer");
                }
            }
            LevelReport report = session.report(max_level);
            if (req.get_param_value("format") == "csv")
                res.set_content(report.to_csv(), "text/csv");
            else
                send_json(res, 200, report.to_json());
        }));

        server.Post("/api/round/advance", guarded([this](const httplib::Request& req, httplib::Response& res) {
            bool force = req.get_param_value("force") == "1" || req.get_param_value("force") == "true";
            bool wait = req.get_param_value("wait") == "1" || req.get_param_value("wait") == "true";
            std::lock_guard lock(trainer_mutex);
            session.begin_advance(force);
            join_trainer();
            {
                std::lock_guard error_lock(error_mutex);
                last_error.clear();
            }
            if (wait) {
                send_json(res, 200, session_state_json(session.finish_advance()));
                return;
            }
            trainer = std::thread([this] {
                try {
                    session.finish_advance();
                } catch (const std::exception& e) {
                    std::lock_guard inner(error_mutex);
                    last_error = e.what();
                }
            });
            send_json(res, 202, session_state_json(session.state()));
        }));
    }
};

HttpService::HttpService(Session& session, std::filesystem::path static_dir) : impl_(std::make_unique<Impl>(session)) {
    impl_->routes();
    if (!static_dir.empty() && !impl_->server.set_mount_point("/", static_dir.string()))
        throw LookupError("static directory not found: " + static_dir.string());
}

HttpService::~HttpService() {
    stop();
    std::lock_guard lock(impl_->trainer_mutex);
    impl_->join_trainer();
}

int HttpService::bind(const std::string& host, int port) {
    if (port == 0) {
        int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw Error("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpService::run() { impl_->server.listen_after_bind(); }

int HttpService::start(const std::string& host, int port) {
    int p = bind(host, port);
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return p;
}

void HttpService::stop() {
    impl_->server.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
}

} // namespace afc
