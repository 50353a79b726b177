#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oncosynth/metrics.hpp"

namespace oncosynth::turing {

enum class Truth { Real, Synthetic };
enum class Verdict { Real, Synthetic };
enum class ReaderLevel { Junior, Mid, Senior };
enum class Grouping { Reader, Level, Type, Total };

std::string_view to_string(Truth t);
std::string_view to_string(Verdict v);
std::string_view to_string(ReaderLevel l);
std::string_view to_string(Grouping g);
Truth truth_from_string(std::string_view s);
Verdict verdict_from_string(std::string_view s);
ReaderLevel level_from_string(std::string_view s);
Grouping grouping_from_string(std::string_view s);

inline const std::array<std::string, 5> kTumorTypes = {"liver", "pancreas", "kidney", "lung", "covid19"};

struct TuringDesign {
  std::vector<std::string> types{kTumorTypes.begin(), kTumorTypes.end()};
  int real_per_type = 9;
  int synthetic_per_type = 9;

  int per_type() const { return real_per_type + synthetic_per_type; }
  int total() const { return per_type() * static_cast<int>(types.size()); }
  void validate() const;
};

/// One candidate case on disk: a case sidecar holding an image (HU) and a
/// "tumor" label marking the single tumor to judge.
struct PoolEntry {
  std::string id;
  std::string sidecar;  // relative to the pool directory
  Truth truth = Truth::Real;
  std::string type;
};

struct TuringPool {
  std::filesystem::path dir;
  std::vector<PoolEntry> entries;
};

TuringPool load_pool(const std::filesystem::path& dir);
void save_pool(const TuringPool& pool);

struct TuringCase {
  std::string id;         // blinded id shown to readers
  std::string source_id;  // pool entry id (server side only)
  std::string type;
  Truth truth = Truth::Real;
  std::string sidecar;
};

/// Draws exactly real_per_type / synthetic_per_type entries per type and
/// shuffles the result. Blinded ids are "c001".. in the shuffled order.
/// Throws InsufficientPool naming the type that is short.
std::vector<TuringCase> build_case_set(const std::vector<PoolEntry>& real, const std::vector<PoolEntry>& synthetic,
                                       const TuringDesign& design, std::uint64_t seed);

/// Server-side record of a drawn case set (includes truth; never served).
void save_case_set(const std::filesystem::path& file, const std::vector<TuringCase>& cases);
std::vector<TuringCase> load_case_set(const std::filesystem::path& file);

/// Client-facing description of a case: never contains the truth.
nlohmann::json client_view(const TuringCase& c, const std::array<int, 3>& position);

struct AuditEvent {
  std::string kind;  // create, verdict, close
  std::string case_id;
  std::optional<Verdict> verdict;
  std::optional<Verdict> prior;
  std::string time;
};

struct Session {
  std::string id;
  std::string reader;
  ReaderLevel level = ReaderLevel::Junior;
  std::vector<std::string> order;  // blinded case ids
  std::map<std::string, Verdict> verdicts;
  std::vector<AuditEvent> audit;
  bool closed = false;

  std::size_t answered() const { return verdicts.size(); }
  /// Progress summary for clients (no truth).
  nlohmann::json summary() const;
};

using Clock = std::function<std::string()>;
/// ISO-8601 UTC wall clock.
std::string utc_now();

/// Sessions over one case set, persisted as one JSON-lines event log per
/// session under `dir`. Existing logs are replayed on construction, so a
/// restarted service resumes every session. Thread-safe.
class SessionStore {
 public:
  SessionStore(std::filesystem::path dir, std::vector<TuringCase> cases, std::uint64_t seed, Clock clock = utc_now);

  std::string create(const std::string& reader, ReaderLevel level);
  /// First unanswered case in the session's order, nullopt when all are answered.
  std::optional<std::string> next(const std::string& session) const;
  /// Stores the verdict; returns false when it repeats the stored value.
  /// Overwrites are allowed and audit-logged with the prior value.
  bool record(const std::string& session, const std::string& case_id, Verdict v);
  void close(const std::string& session);

  Session snapshot(const std::string& session) const;
  std::vector<Session> sessions() const;
  const std::vector<TuringCase>& cases() const { return cases_; }
  const TuringCase& find_case(const std::string& case_id) const;

 private:
  Session& get(const std::string& id);
  const Session& get(const std::string& id) const;
  void append(const Session& s, const nlohmann::json& event);
  void replay(const std::filesystem::path& log);

  std::filesystem::path dir_;
  std::vector<TuringCase> cases_;
  std::map<std::string, std::size_t> case_index_;
  std::uint64_t seed_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
};

struct GroupReport {
  std::string key;
  ConfusionCounts counts;  // TP: synthetic called synthetic, TN: real called real
  ConfusionMetrics metrics;
  std::size_t unanswered = 0;
  std::size_t sessions = 0;
};

/// Reader-performance tables over closed sessions.
std::vector<GroupReport> report(const std::vector<Session>& sessions, const std::vector<TuringCase>& cases,
                                Grouping grouping);

nlohmann::json to_json(const std::vector<GroupReport>& r, Grouping g);
std::string to_csv(const std::vector<GroupReport>& r, Grouping g);

}  // namespace oncosynth::turing
