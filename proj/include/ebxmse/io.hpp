#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ebxmse/mc.hpp"
#include "ebxmse/sysgen.hpp"

namespace ebxmse {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

json read_json_file(const std::filesystem::path &p);
void write_text_file(const std::filesystem::path &p, const std::string &text);
/// Pretty-printed, trailing newline.
void write_json_file(const std::filesystem::path &p, const json &j);

json vec_to_json(const Vec &v);
Vec vec_from_json(const json &j, const std::string &what);
json mat_to_json(const Mat &m);
Mat mat_from_json(const json &j, const std::string &what);

/// JSON 2-D array, or CSV / whitespace-separated rows.
Mat load_matrix(const std::filesystem::path &p);
/// JSON array, JSON object with a "u" field, or single-column CSV.
Vec load_vector(const std::filesystem::path &p);

/// {"theta0": [...], "sigma2": x, "n": k}; "n" is checked when present.
json system_to_json(const SystemSpec &s);
SystemSpec system_from_json(const json &j);

json breakdown_to_json(const XmseBreakdown &b);
json upsilon_to_json(const Upsilon &u);
json mc_report_to_json(const McReport &r);
/// One row per (run, estimator): run,estimator,se,fit.
std::string mc_runs_csv(const McReport &r);

json corpus_entry_to_json(const CorpusEntry &e);
CorpusEntry corpus_entry_from_json(const json &j);

/// Shortest round-trip representation.
std::string fmt_double(double x);

}  // namespace ebxmse
