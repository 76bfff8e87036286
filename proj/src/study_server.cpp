#include "radsynth/study_server.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "radsynth/errors.hpp"

namespace radsynth {

using nlohmann::json;

std::int64_t epoch_ms_now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct StudyServer::Impl {
  StudyServerConfig config;
  Clock clock;
  SessionStore store;
  httplib::Server http;
  std::vector<std::string> real_refs;
  std::vector<std::string> fake_refs;
  std::map<std::string, std::string> images;  // image id -> path

  Impl(StudyServerConfig c, Clock k) : config(std::move(c)), clock(std::move(k)), store(config.store_dir) {
    real_refs = list_png_files(config.real_dir);
    fake_refs = list_png_files(config.fake_dir);
    if (real_refs.size() < config.n_each || fake_refs.size() < config.n_each) {
      throw ArgumentError("study decks need " + std::to_string(config.n_each) +
                          " images per class; found " + std::to_string(real_refs.size()) +
                          " real, " + std::to_string(fake_refs.size()) + " fake");
    }
    for (const auto* refs : {&real_refs, &fake_refs}) {
      for (const auto& r : *refs) images[image_id_for(r, config.id_salt)] = r;
    }
    // Without SO_REUSEPORT a second server on a busy port fails to bind.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    routes();
  }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, status, {{"error", msg}});
  }

  // Runs fn on the session, mapping library errors to HTTP statuses.
  template <typename Fn>
  void on_session(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
    const std::string id = req.path_params.at("id");
    try {
      if (!store.with_session(id, [&](StudySession& s) { fn(s); })) {
        send_error(res, 404, "unknown session " + id);
      }
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const SequenceError& e) {
      send_error(res, 409, e.what());
    } catch (const StateError& e) {
      send_error(res, 409, e.what());
    } catch (const ArgumentError& e) {
      send_error(res, 400, e.what());
    }
  }

  void open_session(httplib::Response& res, const std::string& observer, std::uint64_t seed) {
    try {
      StudyDeck deck = build_deck(real_refs, fake_refs, config.n_each, seed, config.id_salt);
      const auto [id, created] = store.open(observer, std::move(deck), config.deadline_s, config.grace_s);
      send_json(res, 200, {{"session_id", id}, {"resumed", !created}});
    } catch (const ArgumentError& e) {
      send_error(res, 400, e.what());
    }
  }

  void routes() {
    http.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const json body = req.body.empty() ? json::object() : json::parse(req.body);
        open_session(res, body.value("observer", std::string()), body.value("seed", std::uint64_t{0}));
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("bad json: ") + e.what());
      }
    });

    http.Get("/session", [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t seed = 0;
      try {
        if (req.has_param("seed")) seed = std::stoull(req.get_param_value("seed"));
      } catch (const std::exception&) {
        send_error(res, 400, "seed must be an unsigned integer");
        return;
      }
      open_session(res, req.get_param_value("observer"), seed);
    });

    http.Get("/session/:id/next", [this](const httplib::Request& req, httplib::Response& res) {
      on_session(req, res, [&](StudySession& s) {
        const NextItem n = s.next_item(clock());
        if (n.done) {
          send_json(res, 200, {{"done", true}, {"total", n.total}});
          return;
        }
        send_json(res, 200, {{"done", false},
                             {"image_id", n.image_id},
                             {"image_url", "/image/" + n.image_id},
                             {"index", n.index},
                             {"total", n.total},
                             {"deadline_epoch_ms", n.deadline_ms}});
      });
    });

    http.Post("/session/:id/response", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
        if (!body.contains("image_id") || !body.contains("value")) {
          send_error(res, 400, "image_id and value are required");
          return;
        }
        body.at("value").get<double>();
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("bad json: ") + e.what());
        return;
      }
      on_session(req, res, [&](StudySession& s) {
        const double elapsed_ms = body.value("elapsed_ms", 0.0);
        const auto outcome = s.record_response(body.at("image_id").get<std::string>(),
                                               body.at("value").get<double>(), elapsed_ms / 1000.0,
                                               clock());
        send_json(res, 200,
                  {{"status", outcome == ResponseOutcome::accepted ? "accepted" : "timed_out"},
                   {"complete", s.state() == SessionState::complete}});
      });
    });

    http.Get("/session/:id/report", [this](const httplib::Request& req, httplib::Response& res) {
      on_session(req, res, [&](StudySession& s) {
        const SessionReport r = s.score();
        json j = json::parse(to_json(r));
        j["session_id"] = s.id();
        j["observer"] = s.observer();
        j["auc"] = s.roc().auc;
        send_json(res, 200, j);
      });
    });

    http.Get("/session/:id/transcript.csv", [this](const httplib::Request& req, httplib::Response& res) {
      on_session(req, res, [&](StudySession& s) {
        res.status = 200;
        res.set_content(s.transcript_csv(), "text/csv");
      });
    });

    http.Get("/image/:image_id", [this](const httplib::Request& req, httplib::Response& res) {
      const auto it = images.find(req.path_params.at("image_id"));
      if (it == images.end()) {
        send_error(res, 404, "unknown image");
        return;
      }
      std::ifstream in(it->second, std::ios::binary);
      if (!in) {
        send_error(res, 500, "image unreadable");
        return;
      }
      std::ostringstream buf;
      buf << in.rdbuf();
      res.status = 200;
      res.set_header("Cache-Control", "no-store");
      res.set_content(buf.str(), "image/png");
    });

    if (!config.static_dir.empty()) {
      if (!http.set_mount_point("/", config.static_dir)) {
        throw ArgumentError("static asset directory not found: " + config.static_dir);
      }
    }
  }
};

StudyServer::StudyServer(StudyServerConfig config, Clock clock)
    : impl_(std::make_unique<Impl>(std::move(config), clock ? std::move(clock) : Clock(epoch_ms_now))) {}

StudyServer::~StudyServer() { stop(); }

SessionStore& StudyServer::store() noexcept { return impl_->store; }

int StudyServer::bind() {
  const auto& c = impl_->config;
  if (c.port == 0) {
    port_ = impl_->http.bind_to_any_port(c.host);
    if (port_ < 0) throw IoError("cannot bind " + c.host);
  } else {
    if (!impl_->http.bind_to_port(c.host, c.port)) {
      throw IoError("cannot bind " + c.host + ":" + std::to_string(c.port) + " (port busy?)");
    }
    port_ = c.port;
  }
  return port_;
}

void StudyServer::listen() { impl_->http.listen_after_bind(); }

int StudyServer::start() {
  const int p = bind();
  thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return p;
}

void StudyServer::stop() {
  if (impl_) impl_->http.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace radsynth
