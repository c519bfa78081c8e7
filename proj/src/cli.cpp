#include "ebxmse/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ebxmse/io.hpp"

namespace ebxmse {

namespace fs = std::filesystem;

namespace {

// ------------------------------------------------------------ resolution

std::vector<std::string> split_list(const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) { out.push_back(item); }
    }
    return out;
}

// A registered command-line option whose value lands in the resolved config under `key`.
struct Opt {
    std::string key;
    CLI::Option *opt = nullptr;
    std::string text;
    enum class Kind { Str, Int, Real, UInt } kind = Kind::Str;
};

json parse_value(const Opt &o) {
    try {
        switch (o.kind) {
        case Opt::Kind::Str: return o.text;
        case Opt::Kind::Int: return std::stoll(o.text);
        case Opt::Kind::UInt: return std::stoull(o.text);
        case Opt::Kind::Real: return std::stod(o.text);
        }
    } catch (const std::exception &) {
        throw ConfigError("invalid value '" + o.text + "' for --" + o.key);
    }
    return nullptr;
}

class Options {
public:
    void add(CLI::App *app, const std::string &flag, const std::string &key, Opt::Kind kind, const std::string &help) {
        auto o = std::make_unique<Opt>();
        o->key = key;
        o->kind = kind;
        o->opt = app->add_option(flag, o->text, help);
        opts_.push_back(std::move(o));
    }

    void apply(json &resolved) const {
        for (const auto &o : opts_) {
            if (o->opt->count() > 0) { resolved[o->key] = parse_value(*o); }
        }
    }

private:
    std::vector<std::unique_ptr<Opt>> opts_;
};

json defaults_for(const std::string &cmd) {
    json d;
    d["seed"] = 1;
    d["out"] = "out";
    d["mode"] = "exact";
    d["apx_level"] = "full";
    d["method"] = "eb,surey,gcv";
    d["alpha"] = 1.0;
    d["kernel"] = "ss-fixed-gamma:0.95";
    d["grid"] = 25;
    d["tol"] = 1e-8;
    if (cmd == "mc") {
        d["runs"] = 100;
        d["samples"] = 50;
        d["decompose"] = true;
    } else if (cmd == "sysgen") {
        d["count"] = 0;
        d["order"] = 20;
        d["samples"] = 50;
        d["snr"] = 10.0;
        d["sigma2"] = 1.0;
        d["filter"] = "none";
        d["threshold"] = 0.1;
        d["filter_mode"] = "apx";
        d["alignment"] = "random-system";
        d["aligned_gamma"] = 0.95;
        d["system_order"] = 30;
        d["max_attempts"] = 10000;
        d["mode"] = "apx";
    } else if (cmd == "example1") {
        d["method"] = "surey";
        d["kernel"] = "ss-fixed-gamma:0.5";
        d["system"] = json{{"theta0", {2.53, 1.0}}, {"sigma2", 1.0}};
        d["Sigma"] = json::array({json::array({10.0, 0.0}), json::array({0.0, 500.0})});
    }
    return d;
}

void merge(json &into, const json &from) {
    for (auto it = from.begin(); it != from.end(); ++it) { into[it.key()] = it.value(); }
}

// -------------------------------------------------------------- accessors

struct Ctx {
    std::string cmd;
    json cfg;
    fs::path config_dir;   // relative paths inside a config file resolve from here
    std::ostream *out = nullptr;

    bool has(const std::string &k) const { return cfg.contains(k) && !cfg[k].is_null(); }

    std::string str(const std::string &k) const {
        require(has(k), "missing setting '" + k + "'");
        require(cfg[k].is_string(), "setting '" + k + "' must be a string");
        return cfg[k].get<std::string>();
    }
    double real(const std::string &k) const {
        require(has(k) && cfg[k].is_number(), "setting '" + k + "' must be a number");
        return cfg[k].get<double>();
    }
    long long integer(const std::string &k) const {
        require(has(k) && cfg[k].is_number_integer(), "setting '" + k + "' must be an integer");
        return cfg[k].get<long long>();
    }
    bool boolean(const std::string &k) const {
        require(has(k) && cfg[k].is_boolean(), "setting '" + k + "' must be true or false");
        return cfg[k].get<bool>();
    }
    std::uint64_t seed() const {
        require(has("seed") && cfg["seed"].is_number_integer(), "seed must be an integer");
        return cfg["seed"].get<std::uint64_t>();
    }
    fs::path path(const std::string &k) const {
        fs::path p = str(k);
        if (p.is_relative() && !config_dir.empty() && !fs::exists(p)) { p = config_dir / p; }
        return p;
    }
    fs::path out_dir() const { return str("out"); }

    std::vector<std::string> list(const std::string &k) const {
        require(has(k), "missing setting '" + k + "'");
        if (cfg[k].is_array()) {
            std::vector<std::string> v;
            for (const auto &x : cfg[k]) {
                require(x.is_string(), "setting '" + k + "' must list strings");
                v.push_back(x.get<std::string>());
            }
            return v;
        }
        return split_list(str(k));
    }

    OptimizerSettings optimizer() const {
        OptimizerSettings o;
        o.grid = static_cast<int>(integer("grid"));
        o.tol = real("tol");
        require(o.grid >= 2, "grid must be >= 2");
        require(o.tol > 0.0, "tol must be positive");
        return o;
    }

    json provenance() const {
        return json{{"tool", "ebxmse"}, {"subcommand", cmd}, {"seed", cfg.value("seed", json(nullptr))},
                    {"config", cfg}};
    }

    json envelope() const { return json{{"schema_version", kSchemaVersion}, {"provenance", provenance()}}; }

    std::string csv_header() const { return "# provenance: " + provenance().dump() + "\n"; }
};

KernelPtr kernel_for(const Ctx &c, Eigen::Index n) {
    return make_kernel(c.str("kernel"), n, [&](const std::string &f) {
        fs::path p = f;
        if (p.is_relative() && !c.config_dir.empty() && !fs::exists(p)) { p = c.config_dir / p; }
        return load_matrix(p);
    });
}

std::vector<Method> methods_for(const Ctx &c) {
    std::vector<Method> m;
    for (const auto &s : c.list("method")) { m.push_back(parse_method(s)); }
    require(!m.empty(), "no method selected");
    return m;
}

std::vector<Mode> modes_for(const Ctx &c) {
    std::vector<Mode> m;
    for (const auto &s : c.list("mode")) {
        if (s == "both") {
            m = {Mode::Exact, Mode::Apx};
            break;
        }
        m.push_back(parse_mode(s));
    }
    require(!m.empty(), "no mode selected");
    return m;
}

// System file or inline object. Carries optional "u" and "Sigma".
struct LoadedSystem {
    std::string id;
    SystemSpec spec;
    std::optional<Vec> u;
    std::optional<Mat> Sigma;
};

LoadedSystem load_system(const Ctx &c) {
    require(c.has("system"), "no system given (--system FILE)");
    LoadedSystem s;
    json j;
    if (c.cfg["system"].is_object()) {
        j = c.cfg["system"];
        s.id = "system";
    } else {
        const fs::path p = c.path("system");
        j = read_json_file(p);
        s.id = p.stem().string();
    }
    s.spec = system_from_json(j);
    if (j.contains("u")) { s.u = vec_from_json(j["u"], "u"); }
    if (j.contains("Sigma")) { s.Sigma = mat_from_json(j["Sigma"], "Sigma"); }
    if (c.has("input")) { s.u = load_vector(c.path("input")); }
    if (c.has("Sigma")) {
        s.Sigma = c.cfg["Sigma"].is_array() ? mat_from_json(c.cfg["Sigma"], "Sigma") : load_matrix(c.path("Sigma"));
    }
    return s;
}

Mat sigma_or_identity(const LoadedSystem &s) {
    return s.Sigma ? *s.Sigma : Mat::Identity(s.spec.n(), s.spec.n());
}

AsymptoticContext context_for(const Ctx &c, const LoadedSystem &s, Mode mode) {
    if (mode == Mode::Exact) { return exact_context(sigma_or_identity(s), s.spec); }
    require(s.u.has_value(), "apx mode needs the input sequence (system \"u\" field or --input)");
    const Mat phi = build_regressor(*s.u, s.spec.n());
    return apx_context(phi.transpose() * phi, s.u->size(), s.spec, parse_apx_level(c.str("apx_level")));
}

std::string summary_line(const std::string &tag, const XmseBreakdown &b) {
    std::ostringstream os;
    os << tag << " xbias_sq=" << fmt_double(b.xbias.squaredNorm()) << " xvar=" << fmt_double(b.xvar_trace)
       << " xvarhpe=" << (b.xvarhpe_trace ? fmt_double(*b.xvarhpe_trace) : "null")
       << " xmse=" << (b.xmse_total ? fmt_double(*b.xmse_total) : "null")
       << " certified=" << (b.certified ? "true" : "false");
    return os.str();
}

// -------------------------------------------------------------- commands

int cmd_xmse(const Ctx &c) {
    const LoadedSystem s = load_system(c);
    const double alpha = c.real("alpha");
    const KernelPtr kernel = kernel_for(c, s.spec.n());
    const OptimizerSettings opt = c.optimizer();
    bool all_certified = true;
    for (Mode mode : modes_for(c)) {
        const AsymptoticContext ctx = context_for(c, s, mode);
        for (Method m : methods_for(c)) {
            XmseBreakdown b;
            if (c.has("eta")) {
                // fixed hyper-parameter: D' = 0
                const Vec eta = vec_from_json(c.cfg["eta"].is_string() ? json::parse("[" + c.str("eta") + "]")
                                                                        : c.cfg["eta"],
                                              "eta");
                const KernelPtr k = ctx.effective_kernel(kernel);
                require(eta.size() == k->dim_eta(), "eta has the wrong dimension for the kernel");
                b = assemble_xmse(gaussian_b_quantities(*k, ctx, eta), ctx, eta, Mat::Zero(eta.size(), s.spec.n()));
                b.method = method_name(m);
            } else {
                b = xmse_regularized(kernel, ctx, m, alpha, opt);
            }
            all_certified = all_certified && b.certified;
            json j = c.envelope();
            j["system"] = s.id;
            j["method"] = method_name(m);
            j["alpha"] = alpha;
            j["kernel"] = kernel->name();
            j["breakdown"] = breakdown_to_json(b);
            const std::string tag = s.id + "_" + method_name(m) + "_" + mode_name(mode);
            write_json_file(c.out_dir() / ("xmse_" + tag + ".json"), j);
            *c.out << summary_line(tag, b) << "\n";
        }
    }
    if (!all_certified) { throw NumericError("uncertified XMSE breakdown (boundary or non-SPD A); files written"); }
    return kExitOk;
}

int cmd_fixed_eta(const Ctx &c) {
    const LoadedSystem s = load_system(c);
    require(c.has("eta"), "fixed-eta needs --eta");
    const Vec eta = vec_from_json(
        c.cfg["eta"].is_string() ? json::parse("[" + c.str("eta") + "]") : c.cfg["eta"], "eta");
    const KernelPtr kernel = kernel_for(c, s.spec.n());
    for (Mode mode : modes_for(c)) {
        const AsymptoticContext ctx = context_for(c, s, mode);
        const double v = fixed_eta_xmse(kernel, eta, ctx);
        json j = c.envelope();
        j["system"] = s.id;
        j["kernel"] = kernel->name();
        j["mode"] = mode_name(mode);
        j["eta"] = vec_to_json(eta);
        j["fixed_eta_xmse"] = v;
        const std::string tag = s.id + "_" + mode_name(mode);
        write_json_file(c.out_dir() / ("fixed_eta_" + tag + ".json"), j);
        *c.out << tag << " fixed_eta_xmse=" << fmt_double(v) << "\n";
    }
    return kExitOk;
}

std::vector<LoadedSystem> systems_for_mc(const Ctx &c) {
    std::vector<LoadedSystem> out;
    if (c.has("corpus")) {
        const fs::path dir = c.path("corpus");
        const json manifest = read_json_file(dir / "manifest.json");
        require(manifest.contains("entries") && manifest["entries"].is_array(), "corpus manifest has no entries");
        for (const auto &e : manifest["entries"]) {
            const std::string file = e.at("file").get<std::string>();
            const json j = read_json_file(dir / file);
            LoadedSystem s;
            s.id = fs::path(file).stem().string();
            s.spec = system_from_json(j);
            if (j.contains("u")) { s.u = vec_from_json(j["u"], "u"); }
            if (j.contains("Sigma")) { s.Sigma = mat_from_json(j["Sigma"], "Sigma"); }
            out.push_back(std::move(s));
        }
        return out;
    }
    out.push_back(load_system(c));
    return out;
}

int cmd_mc(const Ctx &c) {
    const std::vector<LoadedSystem> systems = systems_for_mc(c);
    const std::uint64_t seed = c.seed();
    const OptimizerSettings opt = c.optimizer();
    for (std::size_t idx = 0; idx < systems.size(); ++idx) {
        const LoadedSystem &s = systems[idx];
        McConfig cfg;
        cfg.spec = s.spec;
        cfg.runs = static_cast<int>(c.integer("runs"));
        cfg.base_seed = splitmix64(seed + idx);
        if (s.u) {
            cfg.u = *s.u;
        } else {
            Rng rng(seed, 0xFFFFFFFF00000000ULL + idx);
            cfg.u = rng.normal_vec(c.integer("samples"));
        }
        cfg.decompose = c.boolean("decompose");
        cfg.Sigma = s.Sigma;
        cfg.apx_level = parse_apx_level(c.str("apx_level"));
        const KernelPtr kernel = kernel_for(c, s.spec.n());
        for (Method m : methods_for(c)) {
            HyperEstimatorSpec h;
            h.method = m;
            h.alpha = c.real("alpha");
            h.kernel = kernel;
            h.optimizer = opt;
            cfg.estimators.push_back(h);
        }
        const McReport rep = run_mc(cfg);
        json j = c.envelope();
        j["system"] = s.id;
        j["mc_base_seed"] = cfg.base_seed;
        j["kernel"] = kernel->name();
        j["alpha"] = c.real("alpha");
        j["report"] = mc_report_to_json(rep);
        write_json_file(c.out_dir() / ("mc_" + s.id + ".json"), j);
        write_text_file(c.out_dir() / ("runs_" + s.id + ".csv"), c.csv_header() + mc_runs_csv(rep));
        std::ostringstream line;
        line << s.id;
        for (const auto &e : rep.estimators) { line << " " << e.name << "_mse=" << fmt_double(e.sample_mse); }
        *c.out << line.str() << "\n";
    }
    return kExitOk;
}

int cmd_sysgen(const Ctx &c) {
    CorpusSpec cs;
    cs.count = static_cast<int>(c.integer("count"));
    cs.n = c.integer("order");
    cs.N = c.integer("samples");
    cs.target_snr = c.real("snr");
    cs.sigma2 = c.real("sigma2");
    cs.seed = c.seed();
    cs.system.order = static_cast<int>(c.integer("system_order"));
    const std::string align = c.str("alignment");
    if (align == "random-system") {
        cs.alignment = Alignment::RandomSystem;
    } else if (align == "kernel-aligned") {
        cs.alignment = Alignment::KernelAligned;
        cs.aligned_K = ss_matrix(cs.n, 1.0, c.real("aligned_gamma"));
    } else {
        throw ConfigError("unknown alignment '" + align + "' (expected random-system or kernel-aligned)");
    }
    const std::string filter = c.str("filter");
    if (filter == "positive-xmse") {
        cs.filter = true;
        cs.threshold = c.real("threshold");
        cs.filter_mode = parse_mode(c.str("filter_mode"));
        cs.filter_level = parse_apx_level(c.str("apx_level"));
        cs.filter_kernel = kernel_for(c, cs.n);
        cs.filter_alpha = c.real("alpha");
        cs.optimizer = c.optimizer();
    } else {
        require(filter == "none", "unknown filter '" + filter + "' (expected none or positive-xmse)");
    }
    cs.max_attempts = static_cast<int>(c.integer("max_attempts"));
    const Corpus corpus = generate_corpus(cs);

    const fs::path dir = c.out_dir();
    fs::create_directories(dir);
    json manifest = c.envelope();
    manifest["candidates"] = corpus.candidates;
    manifest["rejected"] = corpus.rejected;
    manifest["acceptance_rate"] =
        corpus.candidates > 0 ? json(static_cast<double>(corpus.entries.size()) / corpus.candidates) : json(nullptr);
    json entries = json::array();
    for (const auto &e : corpus.entries) {
        char name[32];
        std::snprintf(name, sizeof name, "system_%04d.json", e.index);
        json sj = corpus_entry_to_json(e);
        sj["schema_version"] = kSchemaVersion;
        sj["provenance"] = c.provenance();
        write_json_file(dir / name, sj);
        entries.push_back(json{{"file", name},
                               {"index", e.index},
                               {"candidate", e.candidate},
                               {"stream_seed", cs.seed},
                               {"attempts", e.attempts},
                               {"filter_xmse", e.filter_xmse ? json(*e.filter_xmse) : json(nullptr)},
                               {"tail_energy", e.tail_energy},
                               {"scale_m", e.m}});
    }
    manifest["entries"] = std::move(entries);
    write_json_file(dir / "manifest.json", manifest);
    *c.out << "accepted=" << corpus.entries.size() << " candidates=" << corpus.candidates
           << " rejected=" << corpus.rejected << "\n";
    return kExitOk;
}

std::string num_or_empty(const json &j) { return j.is_number() ? fmt_double(j.get<double>()) : std::string(); }

int cmd_report(const Ctx &c) {
    require(c.has("in"), "report needs --in DIR with mc_*.json files");
    const fs::path in = c.path("in");
    require(fs::is_directory(in), "report: " + in.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto &de : fs::directory_iterator(in)) {
        const std::string name = de.path().filename().string();
        if (name.rfind("mc_", 0) == 0 && de.path().extension() == ".json") { files.push_back(de.path()); }
    }
    std::sort(files.begin(), files.end());

    std::ostringstream t_xmse, t_perf, t_comp, fig;
    t_xmse << c.csv_header()
           << "system,estimator,sample_delta_mse,xmse_over_N2,acc_xmse,apx_xmse_over_N2,acc_apx_xmse\n";
    t_perf << c.csv_header() << "estimator,systems,average_fit,sample_mse\n";
    t_comp << c.csv_header()
           << "system,estimator,sample_delta_mse,bias_sq,var_trace,varhpe_trace,hot_trace,"
              "apx_xbias_sq_over_N2,apx_xvar_over_N2,apx_xvarhpe_over_N2\n";
    fig << c.csv_header() << "system,estimator,source,component,value\n";

    std::map<std::string, std::pair<double, double>> perf_sum;
    std::map<std::string, int> perf_count;
    std::vector<std::string> perf_order;
    for (const auto &f : files) {
        const json j = read_json_file(f);
        require(j.contains("report"), "report: " + f.string() + " is not an mc output");
        const std::string sys = j.value("system", f.stem().string());
        const json &rep = j["report"];
        const double N2 = std::pow(rep.at("N").get<double>(), 2);
        for (const auto &e : rep.at("estimators")) {
            const std::string name = e.at("estimator").get<std::string>();
            if (!perf_count.count(name)) { perf_order.push_back(name); }
            perf_count[name] += 1;
            perf_sum[name].first += e["mean_fit"].is_number() ? e["mean_fit"].get<double>() : 0.0;
            perf_sum[name].second += e.at("sample_mse").get<double>();
            if (name == "ml") { continue; }
            t_xmse << sys << ',' << name << ',' << num_or_empty(e["sample_delta_mse"]) << ','
                   << num_or_empty(e["xmse_over_N2"]) << ',' << num_or_empty(e["acc_xmse"]) << ','
                   << num_or_empty(e["apx_xmse_over_N2"]) << ',' << num_or_empty(e["acc_apx_xmse"]) << '\n';
            const json &u = e["upsilon"];
            const json &apx = e["xmse_apx"];
            auto over = [&](const json &v) { return v.is_number() ? fmt_double(v.get<double>() / N2) : std::string(); };
            const std::string a_b = apx.is_object() ? over(apx["xbias_sq"]) : "";
            const std::string a_v = apx.is_object() ? over(apx["xvar_trace"]) : "";
            const std::string a_h = apx.is_object() ? over(apx["xvarhpe_trace"]) : "";
            t_comp << sys << ',' << name << ',' << num_or_empty(e["sample_delta_mse"]);
            for (const char *k : {"bias_sq", "var_trace", "varhpe_trace", "hot_trace"}) {
                t_comp << ',' << (u.is_object() ? num_or_empty(u[k]) : std::string());
            }
            t_comp << ',' << a_b << ',' << a_v << ',' << a_h << '\n';
            if (u.is_object()) {
                for (const char *k : {"bias_sq", "var_trace", "varhpe_trace", "hot_trace"}) {
                    fig << sys << ',' << name << ",sample," << k << ',' << num_or_empty(u[k]) << '\n';
                }
            }
            if (apx.is_object()) {
                fig << sys << ',' << name << ",apx,bias_sq," << a_b << '\n';
                fig << sys << ',' << name << ",apx,var_trace," << a_v << '\n';
                fig << sys << ',' << name << ",apx,varhpe_trace," << a_h << '\n';
                fig << sys << ',' << name << ",apx,hot_trace,0\n";
            }
        }
    }
    for (const auto &name : perf_order) {
        const double k = perf_count[name];
        t_perf << name << ',' << perf_count[name] << ',' << fmt_double(perf_sum[name].first / k) << ','
               << fmt_double(perf_sum[name].second / k) << '\n';
    }
    const fs::path out = c.out_dir();
    write_text_file(out / "table_xmse.csv", t_xmse.str());
    write_text_file(out / "table_performance.csv", t_perf.str());
    write_text_file(out / "table_components.csv", t_comp.str());
    write_text_file(out / "figure_components.csv", fig.str());
    json meta = c.envelope();
    meta["inputs"] = json::array();
    for (const auto &f : files) { meta["inputs"].push_back(f.filename().string()); }
    meta["component_mapping"] = json::array({
        json{{"sample_delta_mse", "sample ||Upsilon_Bias||_2^2"}, {"apx_xmse", "apx. ||XBias||_2^2 / N^2"}},
        json{{"sample_delta_mse", "sample Tr[Upsilon_Var]"}, {"apx_xmse", "apx. Tr[XVar] / N^2"}},
        json{{"sample_delta_mse", "sample Tr[Upsilon_VarHPE]"}, {"apx_xmse", "apx. Tr[XVarHPE] / N^2"}},
        json{{"sample_delta_mse", "sample Tr[Upsilon_HOT]"}, {"apx_xmse", "0"}},
    });
    write_json_file(out / "report_meta.json", meta);
    *c.out << "systems=" << files.size() << "\n";
    return kExitOk;
}

int cmd_example1(const Ctx &c) {
    const LoadedSystem s = load_system(c);
    const KernelPtr kernel = kernel_for(c, s.spec.n());
    const double alpha = c.real("alpha");
    const Method m = parse_method(c.list("method").at(0));
    const AsymptoticContext ctx = exact_context(sigma_or_identity(s), s.spec);
    const XmseBreakdown b = xmse_regularized(kernel, ctx, m, alpha, c.optimizer());
    const double s4 = s.spec.sigma2 * s.spec.sigma2;
    json j = c.envelope();
    j["method"] = method_name(m);
    j["kernel"] = kernel->name();
    j["breakdown"] = breakdown_to_json(b);
    j["xvarhpe_over_alpha_sigma4"] = b.xvarhpe_trace ? json(*b.xvarhpe_trace / (alpha * s4)) : json(nullptr);
    if (const auto *sk = dynamic_cast<const ScaledKernel *>(kernel.get()); sk && m != Method::EB) {
        j["closed_form_over_alpha_sigma4"] =
            xvarhpe_closed_scaled(sk->K(), sigma_or_identity(s), s.spec.theta0, alpha, s.spec.sigma2) / (alpha * s4);
    }
    write_json_file(c.out_dir() / "example1.json", j);
    *c.out << "xvarhpe_over_alpha_sigma4=" << (b.xvarhpe_trace ? fmt_double(*b.xvarhpe_trace / (alpha * s4)) : "null")
           << "\n";
    if (!b.certified) { throw NumericError("example1: breakdown is not certified"); }
    return kExitOk;
}

int cmd_selftest(const Ctx &c) {
    struct Check {
        std::string name;
        double err;
        double tol;
    };
    std::vector<Check> checks;
    Rng rng(c.seed(), 7);
    const Eigen::Index n = 4;
    SystemSpec spec;
    spec.theta0 = rng.normal_vec(n);
    spec.sigma2 = 0.5;
    const Mat X = rng.normal_vec(n * n).reshaped(n, n);
    const Mat Sigma = X * X.transpose() + Mat::Identity(n, n);
    const auto ctx = exact_context(Sigma, spec);
    const Mat Y = rng.normal_vec(n * n).reshaped(n, n);
    const KernelPtr k = std::make_shared<ScaledKernel>(Y * Y.transpose() + 0.5 * Mat::Identity(n, n), "selftest");

    const XmseBreakdown sy = xmse_regularized(k, ctx, Method::SUREy, 1.0);
    const XmseBreakdown gcv = xmse_regularized(k, ctx, Method::GCV, 1.0);
    checks.push_back({"surey_gcv_parity", breakdown_to_json(sy) == breakdown_to_json(gcv) ? 0.0 : 1.0, 0.0});

    const GaussianPrior prior(k);
    const XmseBreakdown g = generic_xmse(prior, ctx, sy.eta_star, sy.D_prime);
    checks.push_back({"gaussian_dual_path", std::abs(*g.xmse_total - *sy.xmse_total) /
                                                std::max(1.0, std::abs(*sy.xmse_total)), 1e-10});

    const double closed = xvarhpe_closed_scaled(std::static_pointer_cast<const ScaledKernel>(k)->K(), Sigma,
                                                spec.theta0, 1.0, spec.sigma2);
    checks.push_back({"scaled_closed_form", std::abs(closed - *sy.xvarhpe_trace) / std::max(1.0, std::abs(closed)),
                      1e-6});

    const XmseBreakdown fixed = assemble_xmse(gaussian_b_quantities(*k, ctx, sy.eta_star), ctx, sy.eta_star,
                                              Mat::Zero(1, n));
    const double limit = fixed_eta_xmse(k, sy.eta_star, ctx);
    checks.push_back({"fixed_eta_reduction", std::abs(*fixed.xmse_total - limit) / std::max(1.0, std::abs(limit)),
                      1e-10});

    const Vec u = rng.normal_vec(40);
    const ExperimentData data = simulate(spec, u, rng);
    const SufficientStats st = sufficient_stats(data);
    const Vec direct = regularized_estimate(st, *k, sy.eta_star, spec.sigma2);
    const Vec mss = regularized_estimate_mss(st.gram, ml_estimate(data), *k, sy.eta_star, spec.sigma2);
    checks.push_back({"regularized_two_routes", (direct - mss).norm() / std::max(1.0, direct.norm()), 1e-8});

    bool ok = true;
    json j = c.envelope();
    j["checks"] = json::array();
    for (const auto &ch : checks) {
        const bool pass = ch.err <= ch.tol;
        ok = ok && pass;
        *c.out << (pass ? "PASS " : "FAIL ") << ch.name << " err=" << fmt_double(ch.err) << " tol="
               << fmt_double(ch.tol) << "\n";
        j["checks"].push_back(json{{"name", ch.name}, {"error", ch.err}, {"tolerance", ch.tol}, {"pass", pass}});
    }
    write_json_file(c.out_dir() / "selftest.json", j);
    if (!ok) { throw NumericError("selftest failed"); }
    return kExitOk;
}

void report_error(std::ostream &err, const std::string &type, const std::string &msg) {
    err << json{{"error", {{"type", type}, {"message", msg}}}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Regularized FIR identification: excess-MSE analysis and Monte Carlo validation", "ebxmse"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_file;
    app.add_option("--config", config_file, "JSON file with settings; flags override it");

    Options global;
    using K = Opt::Kind;
    global.add(&app, "--seed", "seed", K::UInt, "base seed");
    global.add(&app, "--out", "out", K::Str, "output directory");
    global.add(&app, "--mode", "mode", K::Str, "exact, apx or both");
    global.add(&app, "--apx-level", "apx_level", K::Str, "sigma-only or full");
    global.add(&app, "--method", "method", K::Str, "comma list of eb, surey, gcv");
    global.add(&app, "--alpha", "alpha", K::Real, "scaling of the tuning criterion");
    global.add(&app, "--kernel", "kernel", K::Str, "ss, ss-fixed-gamma:<g>, scaled:<file>, diag");
    global.add(&app, "--grid", "grid", K::Int, "grid points per coordinate");
    global.add(&app, "--tol", "tol", K::Real, "simplex tolerance in search coordinates");

    std::map<std::string, Options> local;
    auto sub = [&](const std::string &name, const std::string &help) {
        CLI::App *s = app.add_subcommand(name, help);
        return s;
    };
    CLI::App *x = sub("xmse", "XMSE breakdown per method and mode");
    local["xmse"].add(x, "--system", "system", K::Str, "system JSON");
    local["xmse"].add(x, "--sigma", "Sigma", K::Str, "Sigma matrix file (default identity)");
    local["xmse"].add(x, "--input", "input", K::Str, "input sequence for apx mode");
    local["xmse"].add(x, "--eta", "eta", K::Str, "fixed hyper-parameter, comma list (D' = 0)");

    CLI::App *fe = sub("fixed-eta", "fixed hyper-parameter limit");
    local["fixed-eta"].add(fe, "--system", "system", K::Str, "system JSON");
    local["fixed-eta"].add(fe, "--sigma", "Sigma", K::Str, "Sigma matrix file");
    local["fixed-eta"].add(fe, "--input", "input", K::Str, "input sequence for apx mode");
    local["fixed-eta"].add(fe, "--eta", "eta", K::Str, "hyper-parameter, comma list");

    CLI::App *mc = sub("mc", "Monte Carlo study");
    local["mc"].add(mc, "--system", "system", K::Str, "system JSON");
    local["mc"].add(mc, "--corpus", "corpus", K::Str, "corpus directory (from sysgen)");
    local["mc"].add(mc, "--input", "input", K::Str, "input sequence");
    local["mc"].add(mc, "--runs", "runs", K::Int, "Monte Carlo runs per system");
    local["mc"].add(mc, "--samples", "samples", K::Int, "N when the input is drawn here");
    local["mc"].add(mc, "--sigma", "Sigma", K::Str, "Sigma for exact XMSE");

    CLI::App *sg = sub("sysgen", "generate a corpus of test systems");
    local["sysgen"].add(sg, "--count", "count", K::Int, "systems to accept");
    local["sysgen"].add(sg, "--order", "order", K::Int, "FIR order n");
    local["sysgen"].add(sg, "--samples", "samples", K::Int, "N");
    local["sysgen"].add(sg, "--snr", "snr", K::Real, "target sample SNR");
    local["sysgen"].add(sg, "--sigma2", "sigma2", K::Real, "noise variance");
    local["sysgen"].add(sg, "--filter", "filter", K::Str, "none or positive-xmse");
    local["sysgen"].add(sg, "--threshold", "threshold", K::Real, "filter threshold on XMSE");
    local["sysgen"].add(sg, "--filter-mode", "filter_mode", K::Str, "exact or apx");
    local["sysgen"].add(sg, "--alignment", "alignment", K::Str, "random-system or kernel-aligned");
    local["sysgen"].add(sg, "--aligned-gamma", "aligned_gamma", K::Real, "gamma of K = SS(1, gamma)");
    local["sysgen"].add(sg, "--system-order", "system_order", K::Int, "order of the random stable system");
    local["sysgen"].add(sg, "--max-attempts", "max_attempts", K::Int, "candidate guard per system");

    CLI::App *rp = sub("report", "tables and figure data from mc outputs");
    local["report"].add(rp, "--in", "in", K::Str, "directory with mc_*.json");

    CLI::App *ex = sub("example1", "negative excess variance example");
    local["example1"].add(ex, "--system", "system", K::Str, "system JSON");
    local["example1"].add(ex, "--sigma", "Sigma", K::Str, "Sigma matrix file");

    sub("selftest", "internal consistency checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError &e) {
        report_error(err, "config", e.what());
        return kExitConfig;
    }

    try {
        Ctx c;
        c.cmd = app.get_subcommands().front()->get_name();
        c.out = &out;
        c.cfg = defaults_for(c.cmd);
        if (!config_file.empty()) {
            const json file = read_json_file(config_file);
            require(file.is_object(), "config file must hold a JSON object");
            merge(c.cfg, file);
            c.config_dir = fs::path(config_file).parent_path();
        }
        global.apply(c.cfg);
        if (local.count(c.cmd)) { local[c.cmd].apply(c.cfg); }

        if (c.cmd == "xmse") { return cmd_xmse(c); }
        if (c.cmd == "fixed-eta") { return cmd_fixed_eta(c); }
        if (c.cmd == "mc") { return cmd_mc(c); }
        if (c.cmd == "sysgen") { return cmd_sysgen(c); }
        if (c.cmd == "report") { return cmd_report(c); }
        if (c.cmd == "example1") { return cmd_example1(c); }
        if (c.cmd == "selftest") { return cmd_selftest(c); }
        throw ConfigError("unknown subcommand");
    } catch (const ConfigError &e) {
        report_error(err, "config", e.what());
        return kExitConfig;
    } catch (const NumericError &e) {
        report_error(err, "numeric", e.what());
        return kExitNumeric;
    } catch (const json::exception &e) {
        report_error(err, "config", e.what());
        return kExitConfig;
    } catch (const fs::filesystem_error &e) {
        report_error(err, "config", e.what());
        return kExitConfig;
    }
}

}  // namespace ebxmse
