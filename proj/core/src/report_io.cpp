#include <selfloop/report_io.hpp>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>

namespace selfloop::io {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

void CsvWriter::comment(const std::string& text) {
  out_ += "# " + text + "\r\n";
}

void CsvWriter::header(const std::vector<std::string>& names) {
  row(names);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ += ',';
    out_ += csv_escape(fields[i]);
  }
  out_ += "\r\n";
}

namespace {

json matrix_to_json(const Mat& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json sufficiency_to_json(const sensitivity::SufficiencyResult& s) {
  return json{{"predicted_sign", static_cast<int>(s.predicted_sign)},
              {"threshold", s.threshold},
              {"decisive", s.decisive}};
}

}  // namespace

std::string report_to_json(const sensitivity::SensitivityReport& r,
                           const std::string& config_hash, RunSeed seed) {
  json doc;
  doc["schema"] = "sensitivity-report-v1";
  doc["config_hash"] = config_hash;
  doc["seed"] = seed;
  doc["lambda_cur"] = r.lambda_cur;
  doc["S_p"] = matrix_to_json(r.S_p);
  doc["S_q"] = matrix_to_json(r.S_q);
  doc["C_p"] = matrix_to_json(r.C_p);
  doc["C_q"] = matrix_to_json(r.C_q);
  doc["curation_dir"] = vector_to_json(r.curation_dir);
  doc["grad_Jp"] = vector_to_json(r.grad_Jp);
  doc["grad_Jq"] = vector_to_json(r.grad_Jq);
  doc["dJp_dlambda"] = r.dJp_dlambda;
  doc["dJq_dlambda"] = r.dJq_dlambda;
  doc["rho_p"] = r.rho_p;
  doc["rho_q"] = r.rho_q;
  doc["m_p"] = r.m_p;
  doc["m_q"] = r.m_q;
  doc["norm_S_p"] = r.norm_S_p;
  doc["norm_S_q"] = r.norm_S_q;
  doc["tau_p"] = r.tau_p;
  doc["tau_q"] = r.tau_q;
  doc["margins_from_constants"] = r.margins_from_constants;
  doc["sufficiency_p"] = sufficiency_to_json(r.sufficiency_p);
  doc["sufficiency_q"] = sufficiency_to_json(r.sufficiency_q);
  doc["cross_sign_note"] = r.cross_sign_note;
  if (r.blockwise) {
    doc["blockwise"] = json{{"self_pre", r.blockwise->self_pre},
                            {"self_post", r.blockwise->self_post},
                            {"cross_pre", r.blockwise->cross_pre},
                            {"cross_post", r.blockwise->cross_post}};
  }
  return doc.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write output file: " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw ValidationError("failed writing output file: " + path);
}

}  // namespace selfloop::io
