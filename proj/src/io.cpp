#include "ebxmse/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ebxmse {

namespace fs = std::filesystem;

std::string fmt_double(double x) {
    if (std::isnan(x)) { return "nan"; }
    if (std::isinf(x)) { return x > 0 ? "inf" : "-inf"; }
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

json read_json_file(const fs::path &p) {
    std::ifstream in(p);
    if (!in) { throw ConfigError("cannot open " + p.string()); }
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw ConfigError("invalid JSON in " + p.string() + ": " + e.what());
    }
}

void write_text_file(const fs::path &p, const std::string &text) {
    if (p.has_parent_path()) { fs::create_directories(p.parent_path()); }
    std::ofstream out(p, std::ios::binary);
    if (!out) { throw ConfigError("cannot write " + p.string()); }
    out << text;
    if (!out) { throw ConfigError("write failed for " + p.string()); }
}

void write_json_file(const fs::path &p, const json &j) { write_text_file(p, j.dump(2) + "\n"); }

json vec_to_json(const Vec &v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) { a.push_back(v[i]); }
    return a;
}

Vec vec_from_json(const json &j, const std::string &what) {
    if (j.is_number()) { return Vec::Constant(1, j.get<double>()); }
    require(j.is_array(), what + " must be a JSON array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        require(j[i].is_number(), what + " must contain only numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

json mat_to_json(const Mat &m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) { a.push_back(vec_to_json(m.row(r).transpose())); }
    return a;
}

Mat mat_from_json(const json &j, const std::string &what) {
    require(j.is_array() && !j.empty(), what + " must be a non-empty array of rows");
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    require(cols > 0, what + " must be an array of rows");
    Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        require(j[r].is_array() && j[r].size() == cols, what + ": ragged rows");
        m.row(static_cast<Eigen::Index>(r)) = vec_from_json(j[r], what).transpose();
    }
    return m;
}

namespace {

std::vector<std::vector<double>> read_rows(const fs::path &p) {
    std::ifstream in(p);
    if (!in) { throw ConfigError("cannot open " + p.string()); }
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        for (char &c : line) {
            if (c == ',' || c == ';' || c == '\t' || c == '\r') { c = ' '; }
        }
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) {
            double v = 0.0;
            const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
                if (rows.empty() && row.empty()) { row.clear(); break; }  // header line
                throw ConfigError("non-numeric entry '" + tok + "' in " + p.string());
            }
            row.push_back(v);
        }
        if (!row.empty()) { rows.push_back(std::move(row)); }
    }
    return rows;
}

bool looks_like_json(const fs::path &p) {
    std::ifstream in(p);
    char c = 0;
    while (in.get(c)) {
        if (!std::isspace(static_cast<unsigned char>(c))) { return c == '[' || c == '{'; }
    }
    return false;
}

}  // namespace

Mat load_matrix(const fs::path &p) {
    if (looks_like_json(p)) {
        const json j = read_json_file(p);
        return mat_from_json(j.is_object() && j.contains("K") ? j["K"] : j, p.string());
    }
    const auto rows = read_rows(p);
    require(!rows.empty(), p.string() + " holds no matrix");
    Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r].size() == rows[0].size(), p.string() + ": ragged rows");
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return m;
}

Vec load_vector(const fs::path &p) {
    if (looks_like_json(p)) {
        const json j = read_json_file(p);
        if (j.is_object()) {
            require(j.contains("u"), p.string() + ": expected a \"u\" field");
            return vec_from_json(j["u"], "u");
        }
        return vec_from_json(j, p.string());
    }
    const auto rows = read_rows(p);
    Vec v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r].size() == 1, p.string() + ": expected a single column");
        v[static_cast<Eigen::Index>(r)] = rows[r][0];
    }
    return v;
}

json system_to_json(const SystemSpec &s) {
    return json{{"theta0", vec_to_json(s.theta0)}, {"sigma2", s.sigma2}, {"n", s.n()}};
}

SystemSpec system_from_json(const json &j) {
    require(j.is_object(), "system must be a JSON object");
    require(j.contains("theta0"), "system: missing theta0");
    SystemSpec s;
    s.theta0 = vec_from_json(j["theta0"], "theta0");
    if (j.contains("sigma2")) {
        require(j["sigma2"].is_number(), "system: sigma2 must be a number");
        s.sigma2 = j["sigma2"].get<double>();
    }
    if (j.contains("n")) {
        require(j["n"].is_number_integer() && j["n"].get<Eigen::Index>() == s.n(), "system: n does not match theta0");
    }
    s.validate();
    return s;
}

json breakdown_to_json(const XmseBreakdown &b) {
    auto opt_num = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
    auto opt_mat = [](const std::optional<Mat> &m) { return m ? mat_to_json(*m) : json(nullptr); };
    json j;
    j["mode"] = mode_name(b.mode);
    if (b.mode == Mode::Apx) { j["apx_level"] = apx_level_name(b.level); }
    j["certified"] = b.certified;
    j["on_boundary"] = b.on_boundary;
    j["xbias"] = vec_to_json(b.xbias);
    j["xbias_sq"] = b.xbias.squaredNorm();
    j["xvar_trace"] = b.xvar_trace;
    j["xvarhpe_trace"] = opt_num(b.xvarhpe_trace);
    j["xmse_total"] = opt_num(b.xmse_total);
    j["eta_star"] = vec_to_json(b.eta_star);
    j["A"] = opt_mat(b.A);
    j["B"] = opt_mat(b.B);
    j["D_prime"] = opt_mat(b.D_prime);
    j["b_star"] = vec_to_json(b.b.b_star);
    j["b_prime_theta"] = mat_to_json(b.b.b_prime_theta);
    j["b_prime_eta"] = mat_to_json(b.b.b_prime_eta);
    return j;
}

json upsilon_to_json(const Upsilon &u) {
    return json{{"eta_ref", vec_to_json(u.eta_ref)},
                {"bias", vec_to_json(u.bias)},
                {"bias_sq", u.bias_sq},
                {"var_trace", u.var_trace},
                {"varhpe_trace", u.varhpe_trace},
                {"hot_trace", u.hot_trace},
                {"hot_definitional", u.hot_definitional},
                {"closure_residual", u.closure_residual}};
}

json mc_report_to_json(const McReport &r) {
    json j;
    j["runs"] = r.runs;
    j["included_runs"] = r.included_runs.size();
    j["excluded_runs"] = r.excluded_runs;
    j["exclusion_reasons"] = r.exclusion_reasons;
    j["N"] = r.N;
    j["sample_snr"] = r.snr;
    json ests = json::array();
    const double N2 = static_cast<double>(r.N) * static_cast<double>(r.N);
    for (const auto &e : r.estimators) {
        json x;
        x["estimator"] = e.name;
        x["sample_mse"] = e.sample_mse;
        x["mean_fit"] = e.fit.empty() ? json(nullptr) : json(e.mean_fit);
        if (e.method) {
            x["sample_delta_mse"] = e.sample_delta_mse ? json(*e.sample_delta_mse) : json(nullptr);
            x["boundary_hits"] = e.boundary_hits;
            x["upsilon"] = e.upsilon ? upsilon_to_json(*e.upsilon) : json(nullptr);
            auto over = [&](const std::optional<XmseBreakdown> &b) {
                return b && b->xmse_total ? json(*b->xmse_total / N2) : json(nullptr);
            };
            x["xmse_over_N2"] = over(e.xmse_exact);
            x["acc_xmse"] = e.acc_exact ? json(*e.acc_exact) : json(nullptr);
            x["apx_xmse_over_N2"] = over(e.xmse_apx);
            x["acc_apx_xmse"] = e.acc_apx ? json(*e.acc_apx) : json(nullptr);
            x["xmse_exact"] = e.xmse_exact ? breakdown_to_json(*e.xmse_exact) : json(nullptr);
            x["xmse_apx"] = e.xmse_apx ? breakdown_to_json(*e.xmse_apx) : json(nullptr);
        }
        ests.push_back(std::move(x));
    }
    j["estimators"] = std::move(ests);
    return j;
}

std::string mc_runs_csv(const McReport &r) {
    std::ostringstream os;
    os << "run,estimator,se,fit\n";
    for (std::size_t i = 0; i < r.included_runs.size(); ++i) {
        for (const auto &e : r.estimators) {
            os << r.included_runs[i] << ',' << e.name << ',' << fmt_double(e.se[i]) << ','
               << (i < e.fit.size() ? fmt_double(e.fit[i]) : std::string("nan")) << '\n';
        }
    }
    return os.str();
}

json corpus_entry_to_json(const CorpusEntry &e) {
    json j = system_to_json(e.spec);
    j["u"] = vec_to_json(e.u);
    j["index"] = e.index;
    j["candidate"] = e.candidate;
    j["scale_m"] = e.m;
    j["sample_snr"] = e.snr;
    j["tail_energy"] = e.tail_energy;
    j["attempts"] = e.attempts;
    j["filter_xmse"] = e.filter_xmse ? json(*e.filter_xmse) : json(nullptr);
    return j;
}

CorpusEntry corpus_entry_from_json(const json &j) {
    CorpusEntry e;
    e.spec = system_from_json(j);
    require(j.contains("u"), "corpus entry: missing input u");
    e.u = vec_from_json(j["u"], "u");
    e.index = j.value("index", 0);
    e.candidate = j.value("candidate", 0);
    e.m = j.value("scale_m", 0.0);
    e.snr = j.value("sample_snr", 0.0);
    e.tail_energy = j.value("tail_energy", 0.0);
    e.attempts = j.value("attempts", 0);
    if (j.contains("filter_xmse") && j["filter_xmse"].is_number()) { e.filter_xmse = j["filter_xmse"].get<double>(); }
    return e;
}

}  // namespace ebxmse
