#include <fstream>
#include <doctest.h>

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "radsynth/errors.hpp"
#include "radsynth/study.hpp"

using namespace radsynth;

namespace {

struct TableRow {
  const char* name;
  double tp, tn, fp, fn;
  long u;
  double p, r, a;
};

// Published per-observer summary (two-decimal metrics).
constexpr std::array<TableRow, 6> kRows = {{
    {"EC1", 75.25, 50.25, 49.75, 24.75, 49, 0.60, 0.75, 0.63},
    {"EC2", 71.75, 66.75, 33.25, 28.25, 6, 0.68, 0.72, 0.69},
    {"EC3", 80.25, 52.00, 48.00, 19.75, 44, 0.63, 0.80, 0.66},
    {"EP1", 71.25, 61.00, 39.00, 28.75, 40, 0.65, 0.71, 0.66},
    {"EP2", 80.75, 77.00, 23.00, 19.25, 0, 0.78, 0.81, 0.79},
    {"EP3", 75.25, 59.75, 40.25, 24.75, 19, 0.65, 0.75, 0.68},
}};
constexpr double kRounding = 0.005 + 1e-12;

std::vector<std::string> refs(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i) + ".png");
  return out;
}

// Five-level responses on n items whose values sum to `total` with exactly `halves` 0.5s.
std::optional<std::vector<double>> pattern(int n, double total, int halves) {
  const int quarters = static_cast<int>(std::lround(total * 4));
  for (int ones = 0; ones <= n - halves; ++ones)
    for (int threeq = 0; ones + threeq <= n - halves; ++threeq)
      for (int oneq = 0; ones + threeq + oneq <= n - halves; ++oneq) {
        if (4 * ones + 3 * threeq + oneq + 2 * halves != quarters) continue;
        std::vector<double> v;
        v.insert(v.end(), ones, 1.0);
        v.insert(v.end(), threeq, 0.75);
        v.insert(v.end(), oneq, 0.25);
        v.insert(v.end(), halves, 0.5);
        v.resize(n, 0.0);
        return v;
      }
  return std::nullopt;
}

StudyDeck small_deck(int n_each, std::uint64_t seed = 1) {
  return build_deck(refs("real/", n_each), refs("fake/", n_each), n_each, seed);
}

// Answers every item truthfully with the given confidence, one second apart.
void answer_all(StudySession& s, std::int64_t& now, double fake_value, double real_value) {
  while (true) {
    const NextItem it = s.next_item(now);
    if (it.done) break;
    const bool fake = s.deck().items[it.index].truth == Truth::fake;
    now += 1000;
    CHECK(s.record_response(it.image_id, fake ? fake_value : real_value, 1.0, now) ==
          ResponseOutcome::accepted);
  }
}

}  // namespace

TEST_CASE("deck construction") {
  const StudyDeck d = build_deck(refs("r", 150), refs("f", 120), 100, 7);
  CHECK(d.items.size() == 200);
  int fakes = 0;
  std::set<std::string> ids, files;
  for (const auto& it : d.items) {
    fakes += it.truth == Truth::fake;
    ids.insert(it.image_id);
    files.insert(it.file_ref);
    CHECK(it.image_id.find(".png") == std::string::npos);
  }
  CHECK(fakes == 100);
  CHECK(ids.size() == 200);
  CHECK(files.size() == 200);
  const StudyDeck again = build_deck(refs("r", 150), refs("f", 120), 100, 7);
  for (std::size_t i = 0; i < 200; ++i) CHECK(again.items[i].file_ref == d.items[i].file_ref);
  const StudyDeck other = build_deck(refs("r", 150), refs("f", 120), 100, 8);
  bool differs = false;
  for (std::size_t i = 0; i < 200; ++i) differs |= other.items[i].file_ref != d.items[i].file_ref;
  CHECK(differs);
  // Interleaved: the first half is not all one class.
  int early_fakes = 0;
  for (std::size_t i = 0; i < 100; ++i) early_fakes += d.items[i].truth == Truth::fake;
  CHECK(early_fakes > 20);
  CHECK(early_fakes < 80);
  CHECK_THROWS_AS((void)build_deck(refs("r", 99), refs("f", 120), 100, 7), ArgumentError);
  CHECK(image_id_for("a.png", 1) != image_id_for("a.png", 2));
  CHECK(image_id_for("a.png").size() == 16);
}

TEST_CASE("published summary rows") {
  for (const auto& row : kRows) {
    INFO(row.name);
    const SessionReport rep = report_from_counts(row.tp, row.tn, row.fp, row.fn, row.u);
    CHECK(std::abs(rep.precision - row.p) <= kRounding);
    CHECK(std::abs(rep.recall - row.r) <= kRounding);
    CHECK(std::abs(rep.accuracy - row.a) <= kRounding);
    CHECK(row.tp + row.fn == 100.0);
    CHECK(row.tn + row.fp == 100.0);

    // A concrete response pattern with the same totals scores to the same row.
    std::optional<std::vector<double>> fake_values, real_values;
    for (int uf = 0; uf <= row.u && !(fake_values && real_values); ++uf) {
      fake_values = pattern(100, row.tp, uf);
      real_values = pattern(100, row.fp, static_cast<int>(row.u) - uf);
    }
    REQUIRE(fake_values);
    REQUIRE(real_values);
    std::vector<Truth> truths(100, Truth::fake);
    truths.insert(truths.end(), 100, Truth::real);
    std::vector<double> values = *fake_values;
    values.insert(values.end(), real_values->begin(), real_values->end());
    const SessionReport s = score_responses(truths, values);
    CHECK(s.tp == row.tp);
    CHECK(s.tn == row.tn);
    CHECK(s.fp == row.fp);
    CHECK(s.fn == row.fn);
    CHECK(s.unsure == row.u);
    CHECK(s.precision == rep.precision);
  }
  const SessionReport ec1 = report_from_counts(75.25, 50.25, 49.75, 24.75, 49);
  CHECK(ec1.precision == 75.25 / 125.0);
  CHECK(ec1.recall == 0.7525);
  CHECK(ec1.accuracy == 125.5 / 200.0);
}

TEST_CASE("fractional scoring") {
  CHECK(score_responses({Truth::fake}, {0.75}).tp == 0.75);
  CHECK(score_responses({Truth::fake}, {0.75}).fn == 0.25);
  CHECK(score_responses({Truth::real}, {0.25}).fp == 0.25);
  CHECK(score_responses({Truth::real}, {0.25}).tn == 0.75);

  std::vector<Truth> truths;
  for (int i = 0; i < 100; ++i) {
    truths.push_back(Truth::fake);
    truths.push_back(Truth::real);
  }
  const SessionReport half = score_responses(truths, std::vector<double>(200, 0.5));
  CHECK(half.tp == 50.0);
  CHECK(half.tn == 50.0);
  CHECK(half.fp == 50.0);
  CHECK(half.fn == 50.0);
  CHECK(half.unsure == 200);
  CHECK(half.precision == 0.5);
  CHECK(half.recall == 0.5);
  CHECK(half.accuracy == 0.5);
  CHECK_THROWS_AS((void)score_responses(truths, std::vector<double>(200, 0.3)), ArgumentError);
  CHECK_THROWS_AS((void)score_responses(truths, std::vector<double>(5, 0.5)), ArgumentError);
}

TEST_CASE("conservation and relabeling symmetry") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(60));
    std::vector<Truth> truths, swapped;
    std::vector<double> values, flipped;
    long fakes = 0;
    for (int i = 0; i < n; ++i) {
      const bool fake = rng.uniform() < 0.5;
      fakes += fake;
      truths.push_back(fake ? Truth::fake : Truth::real);
      swapped.push_back(fake ? Truth::real : Truth::fake);
      const double v = kResponseLevels[rng.below(5)];
      values.push_back(v);
      flipped.push_back(1.0 - v);
    }
    const SessionReport a = score_responses(truths, values);
    const SessionReport b = score_responses(swapped, flipped);
    CHECK(a.tp + a.fn == static_cast<double>(fakes));
    CHECK(a.tn + a.fp == static_cast<double>(n - fakes));
    CHECK(a.fake_count == fakes);
    CHECK(a.tp == b.tn);
    CHECK(a.tn == b.tp);
    CHECK(a.fp == b.fn);
    CHECK(a.fn == b.fp);
    CHECK(a.unsure == b.unsure);
  }
}

TEST_CASE("session sequencing") {
  StudySession s("s1", "obs", small_deck(3), 12.0, 1.0);
  std::int64_t now = 1'000'000;
  CHECK_THROWS_AS((void)s.score(), StateError);
  const std::string first = s.deck().items[0].image_id;
  CHECK_THROWS_AS((void)s.record_response(first, 1.0, 0.5, now), SequenceError);

  const NextItem a = s.next_item(now);
  CHECK(a.index == 0);
  CHECK(a.total == 6);
  CHECK(a.deadline_ms == now + 12000);
  const NextItem b = s.next_item(now + 5000);
  CHECK(b.image_id == a.image_id);
  CHECK(b.deadline_ms == a.deadline_ms);

  CHECK_THROWS_AS((void)s.record_response(s.deck().items[1].image_id, 1.0, 1.0, now + 6000),
                  SequenceError);
  CHECK_THROWS_AS((void)s.record_response(first, 0.3, 1.0, now + 6000), ArgumentError);
  CHECK_THROWS_AS((void)s.record_response(first, 0.5, -1.0, now + 6000), ArgumentError);
  CHECK(s.record_response(first, 0.75, 6.0, now + 6000) == ResponseOutcome::accepted);
  CHECK(s.responses().back().value == 0.75);
  CHECK_THROWS_AS((void)s.record_response(first, 0.75, 6.0, now + 6000), ConflictError);

  // Client-reported elapsed never extends the server deadline.
  const NextItem c = s.next_item(now + 7000);
  CHECK(c.index == 1);
  CHECK(c.deadline_ms == now + 19000);
  CHECK(s.record_response(c.image_id, 1.0, 0.1, now + 19000 + 1000 + 20000) == ResponseOutcome::timed_out);
  CHECK(s.responses().back().value == 0.5);
  CHECK(s.responses().back().timed_out);

  // Within the grace window the response still counts.
  const NextItem d = s.next_item(now + 50000);
  CHECK(s.record_response(d.image_id, 0.0, 13.0, d.deadline_ms + 1000) == ResponseOutcome::accepted);

  // An abandoned item expires when the next one is requested.
  const NextItem e = s.next_item(now + 60000);
  const NextItem f = s.next_item(e.deadline_ms + 1001);
  CHECK(f.index == e.index + 1);
  CHECK(s.responses().back().timed_out);
  CHECK_THROWS_AS((void)s.record_response(e.image_id, 1.0, 1.0, e.deadline_ms + 2000), ConflictError);

  std::int64_t t = f.deadline_ms - 11000;
  answer_all(s, t, 1.0, 0.0);
  CHECK(s.state() == SessionState::complete);
  CHECK(s.next_item(t).done);
  CHECK_THROWS_AS((void)s.record_response("nope", 1.0, 1.0, t), SequenceError);
  CHECK(s.score().unsure == 2);
}

TEST_CASE("full deck cadence and curves") {
  StudySession s("s2", "obs", small_deck(100), 12.0, 1.0);
  std::int64_t now = 5'000;
  std::vector<std::int64_t> deadlines;
  int items = 0;
  while (true) {
    const NextItem it = s.next_item(now);
    if (it.done) break;
    ++items;
    deadlines.push_back(it.deadline_ms);
    now += 3000;
    const bool fake = s.deck().items[it.index].truth == Truth::fake;
    (void)s.record_response(it.image_id, fake ? 1.0 : 0.0, 3.0, now);
  }
  CHECK(items == 200);
  for (std::size_t i = 1; i < deadlines.size(); ++i) CHECK(deadlines[i] - deadlines[i - 1] == 3000);
  CHECK(s.roc().auc == 1.0);
  const SessionReport rep = s.score();
  CHECK(rep.accuracy == 1.0);

  StudySession unsure("s3", "obs", small_deck(10), 12.0, 1.0);
  std::int64_t t = 0;
  answer_all(unsure, t, 0.5, 0.5);
  CHECK(unsure.roc().auc == 0.5);

  // Stored report equals a rescoring of the raw transcript.
  std::vector<Truth> truths;
  std::vector<double> values;
  for (std::size_t i = 0; i < s.responses().size(); ++i) {
    truths.push_back(s.deck().items[i].truth);
    values.push_back(s.responses()[i].value);
  }
  const SessionReport again = score_responses(truths, values);
  CHECK(again.tp == rep.tp);
  CHECK(again.fp == rep.fp);
  CHECK(again.unsure == rep.unsure);
}

TEST_CASE("three-session vertical average") {
  // Hand-built observers over 2 fake + 2 real items.
  auto curve = [](std::vector<double> fake_vals, std::vector<double> real_vals) {
    std::vector<ScoredLabel> items;
    for (double v : fake_vals) items.push_back({v, true});
    for (double v : real_vals) items.push_back({v, false});
    return roc_curve(items);
  };
  const RocCurve a = curve({1.0, 1.0}, {0.0, 0.0});     // perfect
  const RocCurve b = curve({0.5, 0.5}, {0.5, 0.5});     // unsure
  const RocCurve c = curve({1.0, 0.25}, {0.75, 0.0});   // one miss each side
  const auto avg = average_roc({a, b, c}, {0.0, 0.5, 1.0});
  // TPR at FPR 0: 1, 0, 0.5; at 0.5: 1, 0, 1; at 1: 1, 1, 1.
  CHECK(avg[0].tpr == doctest::Approx(1.5 / 3));
  CHECK(avg[1].tpr == doctest::Approx(2.0 / 3));
  CHECK(avg[2].tpr == 1.0);
}

TEST_CASE("session persistence") {
  StudySession s("s4", "obs", small_deck(4), 12.0, 1.0);
  std::int64_t now = 100;
  const NextItem it = s.next_item(now);
  (void)s.record_response(it.image_id, 0.25, 2.5, now + 2500);
  (void)s.next_item(now + 3000);
  const StudySession back = StudySession::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK(back.cursor() == 1);
  CHECK(back.current_deadline() == s.current_deadline());
  CHECK_THROWS_AS((void)StudySession::from_json("{\"schema\": 99}"), DecodeError);
  CHECK_THROWS_AS((void)StudySession::from_json("not json"), DecodeError);

  const std::string csv = s.transcript_csv();
  CHECK(csv.find(it.image_id) != std::string::npos);
  CHECK(csv.find("0.25") != std::string::npos);

  const auto j = nlohmann::json::parse(to_json(score_responses({Truth::fake, Truth::real}, {1.0, 0.5})));
  CHECK(j["TP"] == 1.0);
  CHECK(j["U"] == 1);
  CHECK(j["FP"] == 0.5);
}

TEST_CASE("session store") {
  const auto dir = testing::scratch_dir("store");
  std::string id;
  {
    SessionStore store(dir.string());
    const auto [sid, created] = store.open("alice", small_deck(2));
    CHECK(created);
    id = sid;
    const auto [again, created2] = store.open("alice", small_deck(2));
    CHECK(again == id);
    CHECK(!created2);
    CHECK(store.open("bob", small_deck(2)).first != id);
    CHECK(store.with_session(id, [](StudySession& s) {
      const NextItem it = s.next_item(0);
      (void)s.record_response(it.image_id, 1.0, 1.0, 500);
    }));
    CHECK(!store.with_session("missing", [](StudySession&) {}));
  }
  std::ofstream(dir / "run.json") << "{}";
  SessionStore reloaded(dir.string());
  CHECK(reloaded.size() == 2);
  std::size_t cursor = 0;
  CHECK(reloaded.with_session(id, [&](StudySession& s) { cursor = s.cursor(); }));
  CHECK(cursor == 1);
  // No temp files left behind.
  for (const auto& e : std::filesystem::directory_iterator(dir))
    CHECK(e.path().extension() == ".json");
}
