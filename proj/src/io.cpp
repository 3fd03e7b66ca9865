#include "skewtvb/io.hpp"

#include "skewtvb/linalg.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace skewtvb {

using nlohmann::json;

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

// JSON has no non-finite numbers; they are written as "inf", "-inf", "nan".
json number_json(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double json_number(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw InvalidParameter("expected a number, got \"" + s + "\"");
  }
  return j.get<double>();
}

std::vector<double> as_std_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json vector_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number_json(v(i)));
  return a;
}

Vector json_vector(const json& a) {
  Vector v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = json_number(a[i]);
  return v;
}

json header_json(const FileHeader& h) {
  json j;
  j["type"] = "header";
  j["kind"] = h.kind;
  j["config_hash"] = h.config_hash;
  j["seed"] = h.seed;
  j["runs"] = h.runs;
  if (!h.estimator.empty()) j["estimator"] = h.estimator;
  return j;
}

FileHeader parse_header(std::istream& is, const char* expected_kind) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidParameter("track file: missing header line");
  const json j = json::parse(line);
  if (j.value("type", "") != "header" || j.value("kind", "") != expected_kind) {
    throw InvalidParameter(std::string("track file: expected a ") + expected_kind + " header");
  }
  FileHeader h;
  h.kind = j.at("kind").get<std::string>();
  h.config_hash = j.at("config_hash").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.runs = j.at("runs").get<std::size_t>();
  h.estimator = j.value("estimator", "");
  return h;
}

json diagnostics_json(const StepDiagnostics& d) {
  json j = json::object();
  if (d.vb_iterations) j["vb_iterations"] = *d.vb_iterations;
  if (d.lambda) j["lambda"] = vector_json(*d.lambda);
  if (d.rejected_components) j["rejected_components"] = *d.rejected_components;
  if (d.underflow_hits) j["underflow_hits"] = *d.underflow_hits;
  if (d.ess) j["ess"] = number_json(*d.ess);
  return j;
}

StepDiagnostics json_diagnostics(const json& j) {
  StepDiagnostics d;
  if (j.contains("vb_iterations")) d.vb_iterations = j["vb_iterations"].get<int>();
  if (j.contains("lambda")) d.lambda = json_vector(j["lambda"]);
  if (j.contains("rejected_components")) d.rejected_components = j["rejected_components"].get<int>();
  if (j.contains("underflow_hits")) d.underflow_hits = j["underflow_hits"].get<int>();
  if (j.contains("ess")) d.ess = json_number(j["ess"]);
  return d;
}

}  // namespace

void write_simulation(std::ostream& os, const FileHeader& header,
                      const std::vector<SimulatedRun>& runs) {
  FileHeader h = header;
  h.kind = "simulation";
  h.runs = runs.size();
  os << header_json(h).dump() << '\n';
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (std::size_t k = 0; k < runs[r].x.size(); ++k) {
      json j;
      j["run"] = r;
      j["k"] = k;
      j["x"] = vector_json(runs[r].x[k]);
      j["y"] = vector_json(runs[r].y[k]);
      os << j.dump() << '\n';
    }
  }
}

SimulationFile read_simulation(std::istream& is) {
  SimulationFile f;
  f.header = parse_header(is, "simulation");
  f.runs.resize(f.header.runs);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto r = j.at("run").get<std::size_t>();
    if (r >= f.runs.size()) throw InvalidParameter("simulation file: run index out of range");
    f.runs[r].x.push_back(json_vector(j.at("x")));
    f.runs[r].y.push_back(json_vector(j.at("y")));
  }
  return f;
}

void write_tracks(std::ostream& os, const FileHeader& header,
                  const std::vector<EstimateTrack>& tracks) {
  FileHeader h = header;
  h.kind = "estimate";
  h.runs = tracks.size();
  os << header_json(h).dump() << '\n';
  for (std::size_t r = 0; r < tracks.size(); ++r) {
    const EstimateTrack& t = tracks[r];
    for (std::size_t k = 0; k < t.size(); ++k) {
      json j;
      j["run"] = r;
      j["k"] = k;
      j["mean"] = vector_json(t.mean[k]);
      const std::vector<double> packed = pack_upper(t.cov[k]);
      j["cov_upper_triangle"] = vector_json(Eigen::Map<const Vector>(packed.data(), static_cast<Index>(packed.size())));
      j["diagnostics"] =
          k < t.diagnostics.size() ? diagnostics_json(t.diagnostics[k]) : json::object();
      os << j.dump() << '\n';
    }
  }
}

TrackFile read_tracks(std::istream& is) {
  TrackFile f;
  f.header = parse_header(is, "estimate");
  f.tracks.resize(f.header.runs);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto r = j.at("run").get<std::size_t>();
    if (r >= f.tracks.size()) throw InvalidParameter("track file: run index out of range");
    EstimateTrack& t = f.tracks[r];
    t.mean.push_back(json_vector(j.at("mean")));
    t.cov.push_back(unpack_upper(as_std_vector(json_vector(j.at("cov_upper_triangle")))));
    t.diagnostics.push_back(json_diagnostics(j.at("diagnostics")));
  }
  return f;
}

}  // namespace skewtvb
