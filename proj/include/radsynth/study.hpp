#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "radsynth/metrics.hpp"

namespace radsynth {

enum class Truth { real, fake };

std::string to_string(Truth t);
Truth truth_from_string(const std::string& s);

struct DeckItem {
  std::string image_id;
  std::string file_ref;
  Truth truth = Truth::real;
};

struct StudyDeck {
  std::vector<DeckItem> items;
  std::uint64_t seed = 0;
};

/// Opaque, truth-free identifier for an image reference.
std::string image_id_for(const std::string& file_ref, std::uint64_t salt = 0);

/// n_each drawn without replacement from each list, then shuffled together.
StudyDeck build_deck(const std::vector<std::string>& real_refs,
                     const std::vector<std::string>& fake_refs, std::size_t n_each,
                     std::uint64_t seed, std::uint64_t id_salt = 0);

/// The five permitted slider values.
inline constexpr double kResponseLevels[] = {0.0, 0.25, 0.5, 0.75, 1.0};
bool is_response_level(double v) noexcept;

struct Response {
  std::string image_id;
  double value = 0.5;
  double elapsed = 0.0;  // seconds, as reported by the client
  bool timed_out = false;
};

struct SessionReport {
  double tp = 0.0;
  double tn = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  long unsure = 0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  long fake_count = 0;
  long real_count = 0;
};

/// P = TP/(TP+FP), R = TP/(TP+FN), A = (TP+TN)/(TP+TN+FP+FN); an empty denominator yields 0.
SessionReport report_from_counts(double tp, double tn, double fp, double fn, long unsure = 0);

/// Fractional scoring: a response r on a fake item adds r to TP and 1-r to FN;
/// on a real item it adds r to FP and 1-r to TN. U counts exact 0.5 answers.
SessionReport score_responses(const std::vector<Truth>& truths, const std::vector<double>& values);

enum class SessionState { active, complete };

struct NextItem {
  bool done = false;
  std::size_t index = 0;
  std::size_t total = 0;
  std::string image_id;
  std::string file_ref;
  std::int64_t deadline_ms = 0;
};

enum class ResponseOutcome { accepted, timed_out };

/// One observer's pass through a deck. Times are epoch milliseconds supplied
/// by the caller; the server passes its own clock, tests pass a fake one.
class StudySession {
 public:
  StudySession(std::string id, std::string observer, StudyDeck deck, double deadline_s = 12.0,
               double grace_s = 1.0);

  /// Current item with its deadline, stamped on first delivery only. An item
  /// left unanswered past deadline + grace is recorded as a timeout first.
  NextItem next_item(std::int64_t now_ms);

  ResponseOutcome record_response(const std::string& image_id, double value, double elapsed_s,
                                  std::int64_t now_ms);

  [[nodiscard]] SessionReport score() const;
  [[nodiscard]] RocCurve roc() const;
  [[nodiscard]] std::vector<ScoredLabel> scored_labels() const;

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] const std::string& observer() const noexcept { return observer_; }
  [[nodiscard]] const StudyDeck& deck() const noexcept { return deck_; }
  [[nodiscard]] const std::vector<Response>& responses() const noexcept { return responses_; }
  [[nodiscard]] std::size_t cursor() const noexcept { return cursor_; }
  [[nodiscard]] SessionState state() const noexcept {
    return cursor_ >= deck_.items.size() ? SessionState::complete : SessionState::active;
  }
  [[nodiscard]] std::optional<std::int64_t> current_deadline() const noexcept { return deadline_ms_; }
  [[nodiscard]] double deadline_seconds() const noexcept { return deadline_s_; }
  [[nodiscard]] double grace_seconds() const noexcept { return grace_s_; }

  [[nodiscard]] std::string to_json() const;
  static StudySession from_json(const std::string& text);
  [[nodiscard]] std::string transcript_csv() const;

 private:
  void expire_current();

  std::string id_;
  std::string observer_;
  StudyDeck deck_;
  double deadline_s_;
  double grace_s_;
  std::size_t cursor_ = 0;
  std::optional<std::int64_t> deadline_ms_;
  std::vector<Response> responses_;
};

std::string to_json(const SessionReport& report);

/// Session registry with one session-{id}.json file per session, written atomically on
/// every mutation. Other files in the directory are ignored.
class SessionStore {
 public:
  /// Empty dir keeps sessions in memory only. Existing files in dir are loaded.
  explicit SessionStore(std::string dir = "");

  /// Creates a session, or returns the observer's unfinished one.
  std::pair<std::string, bool> open(const std::string& observer, StudyDeck deck,
                                    double deadline_s = 12.0, double grace_s = 1.0);

  /// Runs fn under the session's lock, persisting afterwards. Returns false if unknown.
  template <typename Fn>
  bool with_session(const std::string& id, Fn&& fn) {
    std::shared_ptr<Entry> e = find(id);
    if (!e) return false;
    std::lock_guard lock(e->mutex);
    struct Persist {
      SessionStore* store;
      Entry* entry;
      ~Persist() { store->persist(entry->session); }
    } persist{this, e.get()};
    fn(e->session);
    return true;
  }

  [[nodiscard]] std::vector<std::string> ids() const;
  [[nodiscard]] std::size_t size() const;

 private:
  struct Entry {
    std::mutex mutex;
    StudySession session;
    explicit Entry(StudySession s) : session(std::move(s)) {}
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void persist(const StudySession& s) const;

  std::string dir_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t counter_ = 0;
};

/// Writes text to path via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace radsynth
