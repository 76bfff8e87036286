#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "radsynth/study.hpp"

namespace radsynth {

struct StudyServerConfig {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  std::string real_dir;
  std::string fake_dir;
  std::size_t n_each = 100;
  /// Session JSON files; empty keeps sessions in memory.
  std::string store_dir;
  /// Static UI bundle mounted at "/"; empty disables it.
  std::string static_dir;
  double deadline_s = 12.0;
  double grace_s = 1.0;
  std::uint64_t id_salt = 0;
};

/// HTTP/JSON front of the session store.
///
///   POST /session                       {observer, seed}  -> {session_id, resumed}
///   GET  /session?observer=..&seed=..   same, for clients without a body
///   GET  /session/{id}/next             -> {image_id, image_url, index, total, deadline_epoch_ms} | {done}
///   GET  /image/{image_id}              -> PNG bytes
///   POST /session/{id}/response         {image_id, value, elapsed_ms} -> {status}
///   GET  /session/{id}/report           -> report JSON (409 until complete)
///   GET  /session/{id}/transcript.csv   -> raw responses
class StudyServer {
 public:
  using Clock = std::function<std::int64_t()>;

  explicit StudyServer(StudyServerConfig config, Clock clock = {});
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  /// Binds the socket; throws IoError when the port is unavailable. Returns the bound port.
  int bind();
  /// Serves on the calling thread until stop().
  void listen();
  /// bind() + serve on a background thread.
  int start();
  void stop();

  [[nodiscard]] SessionStore& store() noexcept;
  [[nodiscard]] int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
};

std::int64_t epoch_ms_now();

}  // namespace radsynth
