#include "oncosynth/turing.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "oncosynth/rng.hpp"

namespace oncosynth::turing {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Truth t) { return t == Truth::Real ? "real" : "synthetic"; }
std::string_view to_string(Verdict v) { return v == Verdict::Real ? "real" : "synthetic"; }

std::string_view to_string(ReaderLevel l) {
  switch (l) {
    case ReaderLevel::Junior: return "junior";
    case ReaderLevel::Mid: return "mid";
    case ReaderLevel::Senior: return "senior";
  }
  return "junior";
}

std::string_view to_string(Grouping g) {
  switch (g) {
    case Grouping::Reader: return "reader";
    case Grouping::Level: return "level";
    case Grouping::Type: return "type";
    case Grouping::Total: return "total";
  }
  return "total";
}

Truth truth_from_string(std::string_view s) {
  if (s == "real") return Truth::Real;
  if (s == "synthetic") return Truth::Synthetic;
  fail(ErrorCode::InvalidArgument, "truth must be 'real' or 'synthetic', got '" + std::string(s) + "'");
}

Verdict verdict_from_string(std::string_view s) {
  if (s == "real") return Verdict::Real;
  if (s == "synthetic") return Verdict::Synthetic;
  fail(ErrorCode::InvalidArgument, "verdict must be 'real' or 'synthetic', got '" + std::string(s) + "'");
}

ReaderLevel level_from_string(std::string_view s) {
  if (s == "junior") return ReaderLevel::Junior;
  if (s == "mid") return ReaderLevel::Mid;
  if (s == "senior") return ReaderLevel::Senior;
  fail(ErrorCode::InvalidArgument, "level must be junior, mid or senior, got '" + std::string(s) + "'");
}

Grouping grouping_from_string(std::string_view s) {
  if (s == "reader") return Grouping::Reader;
  if (s == "level") return Grouping::Level;
  if (s == "type") return Grouping::Type;
  if (s == "total") return Grouping::Total;
  fail(ErrorCode::InvalidArgument, "grouping must be reader, level, type or total, got '" + std::string(s) + "'");
}

void TuringDesign::validate() const {
  if (types.empty()) fail(ErrorCode::InvalidArgument, "design needs at least one tumor type");
  if (real_per_type < 0 || synthetic_per_type < 0 || per_type() == 0) {
    fail(ErrorCode::InvalidArgument, "per-type counts must be >= 0 and not both 0");
  }
  std::set<std::string> seen(types.begin(), types.end());
  if (seen.size() != types.size()) fail(ErrorCode::InvalidArgument, "duplicate tumor type in design");
}

TuringPool load_pool(const fs::path& dir) {
  const auto path = dir / "pool.json";
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "oncosynth-turing-pool") fail(ErrorCode::CorruptFile, path.string() + ": not a pool file");
  TuringPool pool{dir, {}};
  for (const auto& e : j.at("cases")) {
    pool.entries.push_back({e.at("id").get<std::string>(), e.at("sidecar").get<std::string>(),
                            truth_from_string(e.at("truth").get<std::string>()), e.at("type").get<std::string>()});
  }
  return pool;
}

void save_pool(const TuringPool& pool) {
  json cases = json::array();
  for (const auto& e : pool.entries) {
    cases.push_back({{"id", e.id}, {"sidecar", e.sidecar}, {"truth", to_string(e.truth)}, {"type", e.type}});
  }
  fs::create_directories(pool.dir);
  std::ofstream os(pool.dir / "pool.json", std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write pool in '" + pool.dir.string() + "'");
  os << json{{"format", "oncosynth-turing-pool"}, {"version", 1}, {"cases", cases}}.dump(2) << '\n';
}

std::vector<TuringCase> build_case_set(const std::vector<PoolEntry>& real, const std::vector<PoolEntry>& synthetic,
                                       const TuringDesign& design, std::uint64_t seed) {
  design.validate();
  Rng rng(seed);
  std::vector<TuringCase> out;
  auto take = [&](const std::vector<PoolEntry>& pool, const std::string& type, int n, Truth truth) {
    std::vector<const PoolEntry*> cand;
    for (const auto& e : pool)
      if (e.type == type) cand.push_back(&e);
    if (static_cast<int>(cand.size()) < n) {
      fail(ErrorCode::InsufficientPool, "type '" + type + "' has " + std::to_string(cand.size()) + " " +
                                            std::string(to_string(truth)) + " cases, design needs " +
                                            std::to_string(n));
    }
    std::sort(cand.begin(), cand.end(), [](auto* a, auto* b) { return a->id < b->id; });
    rng.shuffle(cand.begin(), cand.end());
    for (int i = 0; i < n; ++i) out.push_back({"", cand[i]->id, type, truth, cand[i]->sidecar});
  };
  for (const auto& t : design.types) {
    take(real, t, design.real_per_type, Truth::Real);
    take(synthetic, t, design.synthetic_per_type, Truth::Synthetic);
  }
  rng.shuffle(out.begin(), out.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "c%03zu", i + 1);
    out[i].id = id;
  }
  return out;
}

void save_case_set(const fs::path& file, const std::vector<TuringCase>& cases) {
  json arr = json::array();
  for (const auto& c : cases) {
    arr.push_back({{"id", c.id}, {"source_id", c.source_id}, {"type", c.type}, {"truth", to_string(c.truth)},
                   {"sidecar", c.sidecar}});
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write '" + file.string() + "'");
  os << json{{"format", "oncosynth-turing-cases"}, {"version", 1}, {"cases", arr}}.dump(2) << '\n';
}

std::vector<TuringCase> load_case_set(const fs::path& file) {
  std::ifstream is(file);
  if (!is) fail(ErrorCode::Io, "cannot open '" + file.string() + "'");
  std::vector<TuringCase> out;
  try {
    const auto j = json::parse(is);
    if (j.value("format", "") != "oncosynth-turing-cases") fail(ErrorCode::CorruptFile, file.string() + ": not a case set");
    for (const auto& c : j.at("cases")) {
      out.push_back({c.at("id").get<std::string>(), c.at("source_id").get<std::string>(), c.at("type").get<std::string>(),
                     truth_from_string(c.at("truth").get<std::string>()), c.at("sidecar").get<std::string>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, file.string() + ": " + e.what());
  }
  return out;
}

json client_view(const TuringCase& c, const std::array<int, 3>& position) {
  json slices = json::object();
  for (const char* axis : {"axial", "coronal", "sagittal"}) {
    slices[axis] = "/api/cases/" + c.id + "/slices/" + axis + ".png";
  }
  return {{"case_id", c.id},
          {"type", c.type},
          {"slices", slices},
          {"position", {{"x", position[0]}, {"y", position[1]}, {"z", position[2]}}}};
}

json Session::summary() const {
  return {{"session_id", id}, {"reader", reader},     {"level", to_string(level)},
          {"total", order.size()}, {"answered", answered()}, {"closed", closed}};
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

SessionStore::SessionStore(fs::path dir, std::vector<TuringCase> cases, std::uint64_t seed, Clock clock)
    : dir_(std::move(dir)), cases_(std::move(cases)), seed_(seed), clock_(std::move(clock)) {
  if (cases_.empty()) fail(ErrorCode::InsufficientPool, "session store needs at least one case");
  for (std::size_t i = 0; i < cases_.size(); ++i) case_index_[cases_[i].id] = i;
  fs::create_directories(dir_);
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(dir_)) {
    if (e.path().extension() == ".jsonl") logs.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& p : logs) replay(p);
}

void SessionStore::append(const Session& s, const json& event) {
  std::ofstream os(dir_ / (s.id + ".jsonl"), std::ios::app);
  if (!os) fail(ErrorCode::Io, "cannot append to session log " + s.id);
  os << event.dump() << '\n';
  os.flush();
  if (!os) fail(ErrorCode::Io, "short write to session log " + s.id);
}

void SessionStore::replay(const fs::path& log) {
  std::ifstream is(log);
  std::string line;
  std::optional<Session> s;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::exception& ex) {
      fail(ErrorCode::CorruptFile, log.string() + ":" + std::to_string(n) + ": " + ex.what());
    }
    const auto kind = e.at("event").get<std::string>();
    AuditEvent a;
    a.kind = kind;
    a.time = e.value("t", "");
    if (kind == "create") {
      s.emplace();
      s->id = e.at("session").get<std::string>();
      s->reader = e.at("reader").get<std::string>();
      s->level = level_from_string(e.at("level").get<std::string>());
      s->order = e.at("order").get<std::vector<std::string>>();
    } else if (!s) {
      fail(ErrorCode::CorruptFile, log.string() + ": event before create");
    } else if (kind == "verdict") {
      a.case_id = e.at("case").get<std::string>();
      a.verdict = verdict_from_string(e.at("verdict").get<std::string>());
      if (!e.at("prior").is_null()) a.prior = verdict_from_string(e.at("prior").get<std::string>());
      s->verdicts[a.case_id] = *a.verdict;
    } else if (kind == "close") {
      s->closed = true;
    } else {
      fail(ErrorCode::CorruptFile, log.string() + ": unknown event '" + kind + "'");
    }
    s->audit.push_back(a);
  }
  if (s) sessions_[s->id] = std::move(*s);
}

Session& SessionStore::get(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::UnknownCase, "unknown session '" + id + "'");
  return it->second;
}

const Session& SessionStore::get(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::UnknownCase, "unknown session '" + id + "'");
  return it->second;
}

const TuringCase& SessionStore::find_case(const std::string& case_id) const {
  auto it = case_index_.find(case_id);
  if (it == case_index_.end()) fail(ErrorCode::UnknownCase, "unknown case '" + case_id + "'");
  return cases_[it->second];
}

std::string SessionStore::create(const std::string& reader, ReaderLevel level) {
  if (reader.empty()) fail(ErrorCode::InvalidArgument, "reader id must not be empty");
  std::lock_guard lock(mu_);
  Session s;
  const auto k = static_cast<std::uint64_t>(sessions_.size());
  Rng rng(Rng::derive(seed_, k));
  char id[24];
  do {
    std::snprintf(id, sizeof id, "s%012llx", static_cast<unsigned long long>(rng.next_u64() & 0xFFFFFFFFFFFFULL));
  } while (sessions_.count(id));
  s.id = id;
  s.reader = reader;
  s.level = level;
  for (const auto& c : cases_) s.order.push_back(c.id);
  rng.shuffle(s.order.begin(), s.order.end());
  const auto t = clock_();
  s.audit.push_back({"create", "", std::nullopt, std::nullopt, t});
  append(s, {{"event", "create"}, {"session", s.id}, {"reader", reader}, {"level", to_string(level)},
             {"order", s.order}, {"t", t}});
  sessions_[s.id] = s;
  return s.id;
}

std::optional<std::string> SessionStore::next(const std::string& session) const {
  std::lock_guard lock(mu_);
  const auto& s = get(session);
  for (const auto& c : s.order)
    if (!s.verdicts.count(c)) return c;
  return std::nullopt;
}

bool SessionStore::record(const std::string& session, const std::string& case_id, Verdict v) {
  std::lock_guard lock(mu_);
  auto& s = get(session);
  if (s.closed) fail(ErrorCode::SessionClosed, "session '" + session + "' is closed");
  if (std::find(s.order.begin(), s.order.end(), case_id) == s.order.end()) {
    fail(ErrorCode::UnknownCase, "case '" + case_id + "' is not in session '" + session + "'");
  }
  std::optional<Verdict> prior;
  if (auto it = s.verdicts.find(case_id); it != s.verdicts.end()) {
    if (it->second == v) return false;
    prior = it->second;
  }
  const auto t = clock_();
  append(s, {{"event", "verdict"}, {"case", case_id}, {"verdict", to_string(v)},
             {"prior", prior ? json(to_string(*prior)) : json(nullptr)}, {"t", t}});
  s.verdicts[case_id] = v;
  s.audit.push_back({"verdict", case_id, v, prior, t});
  return true;
}

void SessionStore::close(const std::string& session) {
  std::lock_guard lock(mu_);
  auto& s = get(session);
  if (s.closed) return;
  const auto t = clock_();
  append(s, {{"event", "close"}, {"t", t}});
  s.closed = true;
  s.audit.push_back({"close", "", std::nullopt, std::nullopt, t});
  // Snapshot for quick inspection; the event log stays authoritative.
  json verdicts = json::object();
  for (const auto& [cid, v] : s.verdicts) verdicts[cid] = to_string(v);
  auto snap = s.summary();
  snap["verdicts"] = verdicts;
  std::ofstream os(dir_ / (s.id + ".snapshot.json"), std::ios::trunc);
  os << snap.dump(2) << '\n';
}

Session SessionStore::snapshot(const std::string& session) const {
  std::lock_guard lock(mu_);
  return get(session);
}

std::vector<Session> SessionStore::sessions() const {
  std::lock_guard lock(mu_);
  std::vector<Session> out;
  for (const auto& [_, s] : sessions_) out.push_back(s);
  return out;
}

std::vector<GroupReport> report(const std::vector<Session>& sessions, const std::vector<TuringCase>& cases,
                                Grouping grouping) {
  std::map<std::string, const TuringCase*> by_id;
  for (const auto& c : cases) by_id[c.id] = &c;
  std::map<std::string, GroupReport> groups;
  std::map<std::string, std::set<std::string>> group_sessions;
  for (const auto& s : sessions) {
    if (!s.closed) continue;
    for (const auto& cid : s.order) {
      auto it = by_id.find(cid);
      if (it == by_id.end()) fail(ErrorCode::UnknownCase, "session " + s.id + " references unknown case " + cid);
      const auto& c = *it->second;
      std::string key;
      switch (grouping) {
        case Grouping::Reader: key = s.reader; break;
        case Grouping::Level: key = std::string(to_string(s.level)); break;
        case Grouping::Type: key = c.type; break;
        case Grouping::Total: key = "total"; break;
      }
      auto& g = groups[key];
      g.key = key;
      group_sessions[key].insert(s.id);
      auto v = s.verdicts.find(cid);
      if (v == s.verdicts.end()) {
        ++g.unanswered;
        continue;
      }
      const bool said_synth = v->second == Verdict::Synthetic;
      if (c.truth == Truth::Synthetic) {
        (said_synth ? g.counts.tp : g.counts.fn) += 1;
      } else {
        (said_synth ? g.counts.fp : g.counts.tn) += 1;
      }
    }
  }
  std::vector<GroupReport> out;
  for (auto& [key, g] : groups) {
    g.metrics = confusion_metrics(g.counts);
    g.sessions = group_sessions[key].size();
    out.push_back(g);
  }
  return out;
}

json to_json(const std::vector<GroupReport>& r, Grouping g) {
  json groups = json::array();
  for (const auto& x : r) {
    groups.push_back({{"key", x.key},
                      {"sessions", x.sessions},
                      {"unanswered", x.unanswered},
                      {"counts", to_json(x.counts)},
                      {"metrics", to_json(x.metrics)}});
  }
  return {{"grouping", to_string(g)}, {"groups", groups}};
}

std::string to_csv(const std::vector<GroupReport>& r, Grouping g) {
  std::ostringstream os;
  os.precision(17);
  auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
  os << to_string(g) << ",sessions,tp,tn,fp,fn,unanswered,sensitivity,specificity,accuracy\n";
  for (const auto& x : r) {
    os << x.key << ',' << x.sessions << ',' << x.counts.tp << ',' << x.counts.tn << ',' << x.counts.fp << ','
       << x.counts.fn << ',' << x.unanswered << ',' << opt(x.metrics.sensitivity) << ','
       << opt(x.metrics.specificity) << ',' << opt(x.metrics.accuracy) << '\n';
  }
  return os.str();
}

}  // namespace oncosynth::turing
