#include "radsynth/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "radsynth/errors.hpp"
#include "radsynth/rng.hpp"

namespace radsynth {

namespace {

constexpr int kSchemaVersion = 1;

template <typename T>
void fisher_yates(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string to_string(Truth t) { return t == Truth::fake ? "fake" : "real"; }

Truth truth_from_string(const std::string& s) {
  if (s == "fake") return Truth::fake;
  if (s == "real") return Truth::real;
  throw ArgumentError("unknown truth label '" + s + "'");
}

std::string image_id_for(const std::string& file_ref, std::uint64_t salt) {
  return hex64(splitmix64(fnv1a64(file_ref) ^ splitmix64(salt)));
}

StudyDeck build_deck(const std::vector<std::string>& real_refs,
                     const std::vector<std::string>& fake_refs, std::size_t n_each,
                     std::uint64_t seed, std::uint64_t id_salt) {
  if (n_each == 0) throw ArgumentError("build_deck: n_each must be >= 1");
  if (real_refs.size() < n_each || fake_refs.size() < n_each) {
    throw ArgumentError("build_deck: need " + std::to_string(n_each) + " images of each kind, have " +
                        std::to_string(real_refs.size()) + " real and " +
                        std::to_string(fake_refs.size()) + " fake");
  }
  Rng root(seed);
  auto pick = [&](std::vector<std::string> refs, const char* label) {
    Rng r = root.derive(label);
    fisher_yates(refs, r);
    refs.resize(n_each);
    return refs;
  };
  StudyDeck deck;
  deck.seed = seed;
  for (auto& ref : pick(real_refs, "real")) deck.items.push_back({image_id_for(ref, id_salt), ref, Truth::real});
  for (auto& ref : pick(fake_refs, "fake")) deck.items.push_back({image_id_for(ref, id_salt), ref, Truth::fake});
  Rng order = root.derive("order");
  fisher_yates(deck.items, order);
  std::set<std::string> seen;
  for (const auto& it : deck.items) {
    if (!seen.insert(it.image_id).second) {
      throw ArgumentError("build_deck: duplicate image reference '" + it.file_ref + "'");
    }
  }
  return deck;
}

bool is_response_level(double v) noexcept {
  return std::find(std::begin(kResponseLevels), std::end(kResponseLevels), v) !=
         std::end(kResponseLevels);
}

SessionReport report_from_counts(double tp, double tn, double fp, double fn, long unsure) {
  SessionReport r;
  r.tp = tp;
  r.tn = tn;
  r.fp = fp;
  r.fn = fn;
  r.unsure = unsure;
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  const double all = tp + tn + fp + fn;
  r.accuracy = all > 0 ? (tp + tn) / all : 0.0;
  return r;
}

SessionReport score_responses(const std::vector<Truth>& truths, const std::vector<double>& values) {
  if (truths.size() != values.size()) throw ArgumentError("score_responses: size mismatch");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  long unsure = 0, fakes = 0, reals = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double r = values[i];
    if (!is_response_level(r)) throw ArgumentError("score_responses: value outside the five levels");
    if (truths[i] == Truth::fake) {
      tp += r;
      fn += 1.0 - r;
      ++fakes;
    } else {
      fp += r;
      tn += 1.0 - r;
      ++reals;
    }
    if (r == 0.5) ++unsure;
  }
  SessionReport rep = report_from_counts(tp, tn, fp, fn, unsure);
  rep.fake_count = fakes;
  rep.real_count = reals;
  return rep;
}

StudySession::StudySession(std::string id, std::string observer, StudyDeck deck,
                           double deadline_s, double grace_s)
    : id_(std::move(id)),
      observer_(std::move(observer)),
      deck_(std::move(deck)),
      deadline_s_(deadline_s),
      grace_s_(grace_s) {
  if (deck_.items.empty()) throw ArgumentError("StudySession: empty deck");
  if (!(deadline_s_ > 0.0) || !(grace_s_ >= 0.0)) {
    throw ArgumentError("StudySession: deadline must be > 0 and grace >= 0");
  }
}

void StudySession::expire_current() {
  responses_.push_back({deck_.items[cursor_].image_id, 0.5, deadline_s_, true});
  ++cursor_;
  deadline_ms_.reset();
}

NextItem StudySession::next_item(std::int64_t now_ms) {
  const auto grace_ms = static_cast<std::int64_t>(std::llround(grace_s_ * 1000.0));
  if (state() == SessionState::active && deadline_ms_ && now_ms > *deadline_ms_ + grace_ms) {
    expire_current();
  }
  NextItem next;
  next.total = deck_.items.size();
  if (state() == SessionState::complete) {
    next.done = true;
    next.index = next.total;
    return next;
  }
  if (!deadline_ms_) deadline_ms_ = now_ms + static_cast<std::int64_t>(std::llround(deadline_s_ * 1000.0));
  const DeckItem& item = deck_.items[cursor_];
  next.index = cursor_;
  next.image_id = item.image_id;
  next.file_ref = item.file_ref;
  next.deadline_ms = *deadline_ms_;
  return next;
}

ResponseOutcome StudySession::record_response(const std::string& image_id, double value,
                                              double elapsed_s, std::int64_t now_ms) {
  for (const auto& r : responses_) {
    if (r.image_id == image_id) throw ConflictError("response already recorded for " + image_id);
  }
  if (state() == SessionState::complete) throw SequenceError("session is complete");
  if (!is_response_level(value)) {
    throw ArgumentError("response value must be one of 0, 0.25, 0.5, 0.75, 1");
  }
  if (!(elapsed_s >= 0.0)) throw ArgumentError("elapsed must be >= 0");
  if (deck_.items[cursor_].image_id != image_id) {
    throw SequenceError("image " + image_id + " is not the current item");
  }
  if (!deadline_ms_) throw SequenceError("image " + image_id + " has not been delivered");
  const auto grace_ms = static_cast<std::int64_t>(std::llround(grace_s_ * 1000.0));
  const bool late = now_ms > *deadline_ms_ + grace_ms;
  responses_.push_back({image_id, late ? 0.5 : value, elapsed_s, late});
  ++cursor_;
  deadline_ms_.reset();
  return late ? ResponseOutcome::timed_out : ResponseOutcome::accepted;
}

SessionReport StudySession::score() const {
  if (state() != SessionState::complete) throw StateError("session " + id_ + " is not complete");
  std::vector<Truth> truths;
  std::vector<double> values;
  for (std::size_t i = 0; i < responses_.size(); ++i) {
    truths.push_back(deck_.items[i].truth);
    values.push_back(responses_[i].value);
  }
  return score_responses(truths, values);
}

std::vector<ScoredLabel> StudySession::scored_labels() const {
  std::vector<ScoredLabel> out;
  for (std::size_t i = 0; i < responses_.size(); ++i) {
    out.push_back({responses_[i].value, deck_.items[i].truth == Truth::fake});
  }
  return out;
}

RocCurve StudySession::roc() const {
  if (state() != SessionState::complete) throw StateError("session " + id_ + " is not complete");
  return roc_curve(scored_labels());
}

std::string StudySession::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : deck_.items) {
    items.push_back({{"image_id", it.image_id}, {"file_ref", it.file_ref}, {"truth", to_string(it.truth)}});
  }
  nlohmann::json responses = nlohmann::json::array();
  for (const auto& r : responses_) {
    responses.push_back({{"image_id", r.image_id}, {"value", r.value}, {"elapsed", r.elapsed},
                         {"timed_out", r.timed_out}});
  }
  nlohmann::json j = {{"schema", kSchemaVersion},
                      {"session_id", id_},
                      {"observer", observer_},
                      {"deadline_s", deadline_s_},
                      {"grace_s", grace_s_},
                      {"state", state() == SessionState::complete ? "complete" : "active"},
                      {"cursor", cursor_},
                      {"deck", {{"seed", deck_.seed}, {"items", items}}},
                      {"responses", responses}};
  j["deadline_ms"] = deadline_ms_ ? nlohmann::json(*deadline_ms_) : nlohmann::json(nullptr);
  return j.dump(2);
}

StudySession StudySession::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema").get<int>() != kSchemaVersion) {
      throw DecodeError("unsupported session schema " + j.at("schema").dump());
    }
    StudyDeck deck;
    deck.seed = j.at("deck").at("seed").get<std::uint64_t>();
    for (const auto& it : j.at("deck").at("items")) {
      deck.items.push_back({it.at("image_id").get<std::string>(), it.at("file_ref").get<std::string>(),
                            truth_from_string(it.at("truth").get<std::string>())});
    }
    StudySession s(j.at("session_id").get<std::string>(), j.at("observer").get<std::string>(),
                   std::move(deck), j.at("deadline_s").get<double>(), j.at("grace_s").get<double>());
    for (const auto& r : j.at("responses")) {
      s.responses_.push_back({r.at("image_id").get<std::string>(), r.at("value").get<double>(),
                              r.at("elapsed").get<double>(), r.at("timed_out").get<bool>()});
    }
    s.cursor_ = j.at("cursor").get<std::size_t>();
    if (s.cursor_ != s.responses_.size() || s.cursor_ > s.deck_.items.size()) {
      throw DecodeError("session cursor inconsistent with responses");
    }
    for (std::size_t i = 0; i < s.responses_.size(); ++i) {
      if (s.responses_[i].image_id != s.deck_.items[i].image_id) {
        throw DecodeError("session responses out of deck order");
      }
    }
    if (!j.at("deadline_ms").is_null()) s.deadline_ms_ = j.at("deadline_ms").get<std::int64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("session json: ") + e.what());
  } catch (const ArgumentError& e) {
    throw DecodeError(std::string("session json: ") + e.what());
  }
}

std::string StudySession::transcript_csv() const {
  std::ostringstream out;
  out << "index,image_id,truth,value,elapsed_s,timed_out\n";
  for (std::size_t i = 0; i < responses_.size(); ++i) {
    const auto& r = responses_[i];
    out << i << ',' << r.image_id << ',' << to_string(deck_.items[i].truth) << ',' << r.value << ','
        << r.elapsed << ',' << (r.timed_out ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string to_json(const SessionReport& r) {
  nlohmann::json j = {{"TP", r.tp},
                      {"TN", r.tn},
                      {"FP", r.fp},
                      {"FN", r.fn},
                      {"U", r.unsure},
                      {"precision", r.precision},
                      {"recall", r.recall},
                      {"accuracy", r.accuracy},
                      {"fake_count", r.fake_count},
                      {"real_count", r.real_count}};
  return j.dump(2);
}

void write_file_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + ": " + ec.message());
}

SessionStore::SessionStore(std::string dir) : dir_(std::move(dir)) {
  if (dir_.empty()) return;
  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("session-", 0) != 0 || entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    std::stringstream buf;
    buf << in.rdbuf();
    StudySession s = StudySession::from_json(buf.str());
    const std::string id = s.id();
    sessions_.emplace(id, std::make_shared<Entry>(std::move(s)));
  }
  counter_ = sessions_.size();
}

std::pair<std::string, bool> SessionStore::open(const std::string& observer, StudyDeck deck,
                                                double deadline_s, double grace_s) {
  if (observer.empty()) throw ArgumentError("observer label must be non-empty");
  std::shared_ptr<Entry> created;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, e] : sessions_) {
      std::lock_guard elock(e->mutex);
      if (e->session.observer() == observer && e->session.state() == SessionState::active) {
        return {id, false};
      }
    }
    std::random_device rd;
    std::string id;
    do {
      const std::uint64_t bits = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ splitmix64(++counter_);
      id = hex64(splitmix64(bits));
    } while (sessions_.count(id));
    created = std::make_shared<Entry>(StudySession(id, observer, std::move(deck), deadline_s, grace_s));
    sessions_.emplace(id, created);
  }
  std::lock_guard elock(created->mutex);
  persist(created->session);
  return {created->session.id(), true};
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void SessionStore::persist(const StudySession& s) const {
  if (dir_.empty()) return;
  write_file_atomic((std::filesystem::path(dir_) / ("session-" + s.id() + ".json")).string(), s.to_json());
}

std::vector<std::string> SessionStore::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, e] : sessions_) out.push_back(id);
  return out;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

}  // namespace radsynth
