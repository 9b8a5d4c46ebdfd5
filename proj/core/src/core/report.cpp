#include "subaudit/core/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"

namespace subaudit {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::kHonestConsistent: return "honest-consistent";
    case Decision::kSubstitutionDetected: return "substitution-detected";
    case Decision::kInconclusive: return "inconclusive";
    case Decision::kInapplicable: return "inapplicable";
  }
  return "inconclusive";
}

Decision decision_from_string(std::string_view name) {
  for (Decision d : {Decision::kHonestConsistent, Decision::kSubstitutionDetected,
                     Decision::kInconclusive, Decision::kInapplicable}) {
    if (to_string(d) == name) return d;
  }
  throw Error(ErrorCode::kParse, "unknown decision '" + std::string(name) + "'");
}

DetectorVerdict inapplicable_verdict(std::string detector, std::string note) {
  DetectorVerdict v;
  v.detector = std::move(detector);
  v.decision = Decision::kInapplicable;
  v.note = std::move(note);
  return v;
}

bool AuditReport::any_substitution_detected() const {
  return std::any_of(verdicts.begin(), verdicts.end(), [](const DetectorVerdict& v) {
    return v.decision == Decision::kSubstitutionDetected;
  });
}

const DetectorVerdict* AuditReport::find(std::string_view detector) const {
  auto it = std::find_if(verdicts.begin(), verdicts.end(),
                         [&](const DetectorVerdict& v) { return v.detector == detector; });
  return it == verdicts.end() ? nullptr : &*it;
}

namespace {

ojson verdict_to_json(const DetectorVerdict& v) {
  ojson j;
  j["detector"] = v.detector;
  j["statistic"] = v.statistic;
  j["threshold"] = v.threshold;
  j["p_value"] = v.p_value ? ojson(*v.p_value) : ojson(nullptr);
  j["decision"] = to_string(v.decision);
  j["note"] = v.note;
  ojson details = ojson::object();
  for (const auto& [k, val] : v.details) details[k] = val;
  j["details"] = std::move(details);
  return j;
}

DetectorVerdict verdict_from_json(const ojson& j) {
  DetectorVerdict v;
  v.detector = j.at("detector").get<std::string>();
  v.statistic = j.at("statistic").get<double>();
  v.threshold = j.at("threshold").get<double>();
  if (!j.at("p_value").is_null()) v.p_value = j.at("p_value").get<double>();
  v.decision = decision_from_string(j.at("decision").get<std::string>());
  v.note = j.value("note", std::string{});
  if (j.contains("details")) {
    for (const auto& [k, val] : j.at("details").items()) v.details[k] = val.get<double>();
  }
  return v;
}

}  // namespace

std::string report_to_json(const AuditReport& report) {
  ojson j;
  j["schema"] = AuditReport::kSchema;
  j["endpoint"] = report.endpoint;
  j["claimed_model"] = report.claimed_model;
  j["seed"] = report.seed;
  j["queries_used"] = report.queries_used;
  j["substitution_detected"] = report.any_substitution_detected();
  ojson verdicts = ojson::array();
  for (const auto& v : report.verdicts) verdicts.push_back(verdict_to_json(v));
  j["verdicts"] = std::move(verdicts);
  ojson clock;
  clock["started_at"] = report.started_at ? ojson(*report.started_at) : ojson(nullptr);
  clock["elapsed_seconds"] = report.elapsed_seconds ? ojson(*report.elapsed_seconds) : ojson(nullptr);
  j["wall_clock"] = std::move(clock);
  return j.dump(2) + "\n";
}

AuditReport report_from_json(std::string_view text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  if (!j.is_object() || j.value("schema", std::string{}) != AuditReport::kSchema) {
    throw Error(ErrorCode::kSchema, "expected schema audit-report/1");
  }
  try {
    AuditReport r;
    r.endpoint = j.at("endpoint").get<std::string>();
    r.claimed_model = j.at("claimed_model").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.queries_used = j.at("queries_used").get<std::uint64_t>();
    for (const auto& v : j.at("verdicts")) r.verdicts.push_back(verdict_from_json(v));
    if (j.contains("wall_clock")) {
      const auto& clock = j["wall_clock"];
      if (clock.contains("started_at") && !clock["started_at"].is_null()) {
        r.started_at = clock["started_at"].get<std::string>();
      }
      if (clock.contains("elapsed_seconds") && !clock["elapsed_seconds"].is_null()) {
        r.elapsed_seconds = clock["elapsed_seconds"].get<double>();
      }
    }
    return r;
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::kSchema, e.what());
  }
}

void write_report(const AuditReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << report_to_json(report);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

AuditReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return report_from_json(buf.str());
}

}  // namespace subaudit
