#include "seqtrans/cli.hpp"

#include "seqtrans/dag.hpp"
#include "seqtrans/dataset.hpp"
#include "seqtrans/error.hpp"
#include "seqtrans/fairness.hpp"
#include "seqtrans/gaussian.hpp"
#include "seqtrans/gridtransport.hpp"
#include "seqtrans/rng.hpp"
#include "seqtrans/seqtransport.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace seqtrans::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr std::size_t kGridEngineMinRows = 200;

struct Options {
    std::string dag;
    std::string data;
    std::string sensitive = "s";
    std::string source_level = "0";
    std::string target_level = "1";
    std::size_t grid_size = 201;
    double bandwidth_scale = 1.0;
    std::string engine = "auto";
    std::uint64_t seed = 0;
    std::string out;
    bool jitter = false;
    bool interp_grid = false;
    bool decompose = false;
    bool per_individual = false;
    std::string outcome;
    std::string model;
    std::string individual;
    std::string spec;
    std::size_t n = 1000;
    std::string oracle_kind;
    std::string point;
    std::size_t angles = 64;
    bool svg = false;
    std::string manifest;
};

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(std::string("cannot read ") + what + " '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json parse_json_file(const std::string& path, const char* what) {
    const auto text = read_file(path, what);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string(what) + " '" + path + "' is not valid JSON: " + e.what());
    }
}

// Collects outputs in memory; everything is written when the run finishes.
class Run {
public:
    Run(std::string command, json config, std::vector<std::string> argv, std::string out)
        : command_(std::move(command)), config_(std::move(config)), argv_(std::move(argv)), out_(std::move(out)) {}

    void add_file(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
    void warn(const std::string& w) {
        if (std::find(warnings_.begin(), warnings_.end(), w) == warnings_.end()) warnings_.push_back(w);
    }
    void warn_all(const std::vector<std::string>& ws) {
        for (const auto& w : ws) warn(w);
    }
    json& info() { return info_; }

    void finish(std::optional<json> error) {
        fs::create_directories(out_);
        json outputs = json::array();
        if (!error) {
            for (const auto& [name, content] : files_) {
                std::ofstream f(fs::path(out_) / name, std::ios::binary | std::ios::trunc);
                f.write(content.data(), static_cast<std::streamsize>(content.size()));
                if (!f) throw ValidationError("cannot write output '" + (fs::path(out_) / name).string() + "'");
                json o;
                o["file"] = name;
                o["bytes"] = content.size();
                o["fnv1a"] = hex(fnv1a(content));
                outputs.push_back(std::move(o));
            }
        }
        json m;
        m["command"] = command_;
        m["argv"] = argv_;
        m["config"] = config_;
        json hashed = config_;
        hashed.erase("out");
        m["config_hash"] = hex(fnv1a(hashed.dump()));
        for (auto it = info_.begin(); it != info_.end(); ++it) m[it.key()] = it.value();
        m["warnings"] = warnings_;
        m["outputs"] = outputs;
        m["status"] = error ? "error" : "ok";
        if (error) m["error"] = *error;
        std::ofstream f(fs::path(out_) / "manifest.json", std::ios::binary | std::ios::trunc);
        f << m.dump(2) << '\n';
    }

private:
    std::string command_;
    json config_;
    std::vector<std::string> argv_;
    std::string out_;
    std::vector<std::pair<std::string, std::string>> files_;
    std::vector<std::string> warnings_;
    json info_ = json::object();
};

std::string csv_line(const std::vector<std::string>& fields) {
    std::ostringstream out;
    write_csv_row(out, fields);
    return out.str();
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        out.emplace_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

double parse_number(const std::string& s, const std::string& context) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) {
        throw ValidationError(context + ": cannot parse '" + s + "' as a finite number");
    }
    return v;
}

// ---------------------------------------------------------------------------
// Shared pipeline

struct Inputs {
    CausalDag dag;
    Dataset data;
    IngestReport report;
};

Inputs load_inputs(const Options& o, const std::string& outcome) {
    Inputs in;
    in.dag = load_dag(o.dag);
    const std::string sens_node = in.dag.node_names[in.dag.sensitive];
    if (sens_node != o.sensitive) {
        throw ValidationError("--sensitive '" + o.sensitive + "' does not match the DAG's @sensitive node '" +
                              sens_node + "'");
    }
    IngestOptions io;
    io.sensitive = o.sensitive;
    io.source_level = o.source_level;
    io.target_level = o.target_level;
    for (std::size_t v : in.dag.variables()) io.columns.push_back(in.dag.node_names[v]);
    if (!outcome.empty()) io.columns.push_back(outcome);
    in.data = ingest_csv(o.data, io, &in.report);
    return in;
}

TransportOptions transport_options(const Options& o) {
    TransportOptions t;
    t.bandwidth_scale = o.bandwidth_scale;
    t.jitter = o.jitter;
    t.seed = o.seed;
    return t;
}

enum class Engine { individual, grid };

Engine choose_engine(const Options& o, const TransportContext& ctx, Run& run) {
    std::size_t max_parents = 0;
    for (const auto& p : ctx.parent_coords) max_parents = std::max(max_parents, p.size());
    Engine e = Engine::individual;
    if (o.engine == "grid") {
        e = Engine::grid;
    } else if (o.engine == "auto" && ctx.groups[kSourceSide].rows() >= kGridEngineMinRows) {
        if (max_parents <= kMaxGridParents) {
            e = Engine::grid;
        } else {
            run.warn("grid engine skipped: a variable has more than " + std::to_string(kMaxGridParents) +
                     " conditioning parents");
        }
    }
    run.info()["engine"] = e == Engine::grid ? "grid" : "individual";
    if (e == Engine::grid) {
        run.info()["grid_size"] = o.grid_size;
        run.info()["lookup"] = o.interp_grid ? "interpolate" : "nearest";
    }
    return e;
}

json bandwidth_record(const TransportContext& ctx) {
    json arr = json::array();
    for (std::size_t c = 0; c < ctx.dim(); ++c) {
        json v;
        v["variable"] = ctx.variable_names[c];
        std::vector<std::string> pn;
        for (std::size_t p : ctx.parent_coords[c]) pn.push_back(ctx.variable_names[p]);
        v["parents"] = pn;
        v["h_source"] = ctx.kde_bandwidth[c][0];
        v["h_target"] = ctx.kde_bandwidth[c][1];
        v["b_source"] = ctx.parent_bandwidth[c][0];
        v["b_target"] = ctx.parent_bandwidth[c][1];
        arr.push_back(std::move(v));
    }
    return arr;
}

GridTensors obtain_tensors(const TransportContext& ctx, std::size_t k, Run& run) {
    const char* dir = std::getenv("SEQTRANS_CACHE_DIR");
    const std::uint64_t oh = options_hash(ctx.options);
    if (dir == nullptr || *dir == '\0') {
        run.info()["tensor_cache"] = "disabled";
        return build_grid_tensors(ctx, k);
    }
    const fs::path path = fs::path(dir) / ("stgt_" + hex(ctx.dataset_hash) + "_" + hex(ctx.dag.hash()) + "_" +
                                           hex(oh) + "_k" + std::to_string(k) + ".bin");
    if (auto cached = load_tensors(path.string(), ctx.dataset_hash, ctx.dag.hash(), oh); cached && cached->k == k) {
        run.info()["tensor_cache"] = "hit";
        return std::move(*cached);
    }
    auto t = build_grid_tensors(ctx, k);
    std::error_code ec;
    fs::create_directories(dir, ec);
    try {
        save_tensors(t, path.string());
        run.info()["tensor_cache"] = "stored";
    } catch (const ValidationError& e) {
        run.warn(std::string("tensor cache not written: ") + e.what());
        run.info()["tensor_cache"] = "unwritable";
    }
    return t;
}

// Source rows of the dataset in coordinate layout, input order.
Matrix source_rows(const Dataset& data, const TransportContext& ctx) {
    std::vector<std::size_t> cols;
    for (const auto& name : ctx.variable_names) cols.push_back(data.column_index(name));
    return data.select(ctx.options.source_group, cols);
}

struct Transporter {
    const TransportContext& ctx;
    Engine engine;
    std::optional<GridTensors> tensors;
    LookupMode mode = LookupMode::nearest;

    std::vector<double> operator()(std::span<const double> a, Run& run) const {
        if (engine == Engine::grid) return lookup_counterfactual(*tensors, a, mode);
        auto res = transport_individual(ctx, a);
        run.warn_all(res.warnings);
        return res.transported;
    }
};

Transporter make_transporter(const Options& o, const TransportContext& ctx, Run& run) {
    Transporter t{ctx, choose_engine(o, ctx, run), std::nullopt, o.interp_grid ? LookupMode::interpolate
                                                                               : LookupMode::nearest};
    if (t.engine == Engine::grid) t.tensors = obtain_tensors(ctx, o.grid_size, run);
    return t;
}

Matrix transport_rows(const Transporter& t, const Matrix& rows, Run& run) {
    Matrix out(rows.rows(), rows.cols());
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const auto b = t(rows.row(r), run);
        std::copy(b.begin(), b.end(), out.row(r).begin());
    }
    return out;
}

std::vector<double> parse_individual(const std::string& text, const TransportContext& ctx) {
    std::vector<std::optional<double>> vals(ctx.dim());
    for (const auto& item : split(text, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ValidationError("--individual expects name=value pairs, got '" + item + "'");
        const std::string name = item.substr(0, eq);
        const std::size_t c = ctx.coordinate(name);
        if (vals[c]) throw ValidationError("--individual sets '" + name + "' twice");
        vals[c] = parse_number(item.substr(eq + 1), "--individual " + name);
    }
    std::vector<double> out;
    for (std::size_t c = 0; c < ctx.dim(); ++c) {
        if (!vals[c]) throw ValidationError("--individual is missing a value for '" + ctx.variable_names[c] + "'");
        out.push_back(*vals[c]);
    }
    return out;
}

void record_ingest(Run& run, const Inputs& in) {
    run.info()["rows_read"] = in.report.rows_read;
    run.info()["rows_dropped"] = in.report.rows_dropped;
    run.info()["n0"] = in.data.count(0);
    run.info()["n1"] = in.data.count(1);
    if (in.report.rows_dropped > 0) {
        run.warn("dropped " + std::to_string(in.report.rows_dropped) + " rows whose sensitive label matched neither level");
    }
}

// ---------------------------------------------------------------------------
// fit

void cmd_fit(const Options& o, Run& run, std::ostream& out) {
    const auto in = load_inputs(o, "");
    record_ingest(run, in);
    const auto ctx = fit_context(in.data, in.dag, transport_options(o));
    run.warn_all(ctx.warnings);
    run.info()["bandwidths"] = bandwidth_record(ctx);
    const Engine engine = choose_engine(o, ctx, run);

    json fit;
    fit["variables"] = ctx.variable_names;
    std::vector<std::string> order;
    for (std::size_t c : ctx.order_coords) order.push_back(ctx.variable_names[c]);
    fit["order"] = order;
    fit["n0"] = ctx.groups[0].rows();
    fit["n1"] = ctx.groups[1].rows();
    fit["bandwidths"] = bandwidth_record(ctx);
    if (engine == Engine::grid) {
        const auto t = obtain_tensors(ctx, o.grid_size, run);
        const auto tmp = fs::temp_directory_path() / ("seqtrans_fit_" + hex(fnv1a(o.out)) + ".bin");
        save_tensors(t, tmp.string());
        run.add_file("tensors.bin", read_file(tmp.string(), "tensor file"));
        fs::remove(tmp);
        fit["tensors"] = "tensors.bin";
        fit["grid_size"] = t.k;
    }
    run.add_file("fit.json", fit.dump(2) + "\n");
    out << "fitted " << ctx.dim() << " variables (" << ctx.groups[0].rows() << " source rows, "
        << ctx.groups[1].rows() << " target rows), engine " << run.info()["engine"].get<std::string>() << "\n";
}

// ---------------------------------------------------------------------------
// transport

void cmd_transport(const Options& o, Run& run, std::ostream& out) {
    const auto in = load_inputs(o, "");
    record_ingest(run, in);
    const auto ctx = fit_context(in.data, in.dag, transport_options(o));
    run.warn_all(ctx.warnings);
    run.info()["bandwidths"] = bandwidth_record(ctx);
    const auto t = make_transporter(o, ctx, run);

    const Matrix rows = source_rows(in.data, ctx);
    const Matrix star = transport_rows(t, rows, run);
    std::string csv;
    std::vector<std::string> header = ctx.variable_names;
    for (const auto& n : ctx.variable_names) header.push_back(n + "_star");
    csv += csv_line(header);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        std::vector<std::string> f;
        for (double v : rows.row(r)) f.push_back(format_number(v));
        for (double v : star.row(r)) f.push_back(format_number(v));
        csv += csv_line(f);
    }
    run.add_file("counterfactuals.csv", std::move(csv));
    out << "transported " << rows.rows() << " source rows with the " << run.info()["engine"].get<std::string>()
        << " engine\n";
}

// ---------------------------------------------------------------------------
// audit

LogisticModel load_model(const std::string& path, const TransportContext& ctx) {
    const auto j = parse_json_file(path, "model file");
    try {
        LogisticModel m;
        m.feature_names = j.at("features").get<std::vector<std::string>>();
        m.coefficients = j.at("coefficients").get<std::vector<double>>();
        m.intercept = j.value("intercept", 0.0);
        if (j.contains("sensitive_coefficient")) {
            m.includes_sensitive = true;
            m.sensitive_coefficient = j.at("sensitive_coefficient").get<double>();
        }
        if (m.feature_names.size() != m.coefficients.size()) {
            throw ValidationError("model file: features and coefficients differ in length");
        }
        for (const auto& f : m.feature_names) (void)ctx.coordinate(f);
        for (double c : m.coefficients)
            if (!std::isfinite(c)) throw ValidationError("model file: non-finite coefficient");
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("model file '") + path + "': " + e.what());
    }
}

json model_record(const LogisticModel& m) {
    json j;
    j["features"] = m.feature_names;
    j["coefficients"] = m.coefficients;
    j["intercept"] = m.intercept;
    if (m.includes_sensitive) j["sensitive_coefficient"] = m.sensitive_coefficient;
    j["converged"] = m.converged;
    j["iterations"] = m.iterations;
    return j;
}

// Rows in model feature layout.
Matrix project(const Matrix& rows, const std::vector<std::size_t>& cols) {
    Matrix out(rows.rows(), cols.size());
    for (std::size_t r = 0; r < rows.rows(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = rows(r, cols[c]);
    return out;
}

void cmd_audit(const Options& o, Run& run, std::ostream& out) {
    const auto dag = load_dag(o.dag);
    std::string outcome = o.outcome;
    if (outcome.empty() && dag.outcome) outcome = dag.node_names[*dag.outcome];
    // A fixed model does not need the outcome column.
    if (!o.model.empty() && o.outcome.empty()) outcome.clear();
    if (o.model.empty() && outcome.empty()) {
        throw ValidationError("audit needs an outcome: declare @outcome in the DAG or pass --outcome");
    }
    auto in = load_inputs(o, outcome);
    record_ingest(run, in);
    const auto ctx = fit_context(in.data, in.dag, transport_options(o));
    run.warn_all(ctx.warnings);
    run.info()["bandwidths"] = bandwidth_record(ctx);

    std::vector<LogisticModel> models;
    if (!o.model.empty()) {
        models.push_back(load_model(o.model, ctx));
    } else {
        auto y = in.data.column(outcome);
        const bool binary = std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0 || v == 1.0; });
        if (!binary) {
            std::vector<double> sorted = y;
            std::sort(sorted.begin(), sorted.end());
            const std::size_t n = sorted.size();
            const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
            for (double& v : y) v = v > median ? 1.0 : 0.0;
            run.warn("binarized outcome '" + outcome + "' as indicator(value > median " + format_number(median) + ")");
        }
        Matrix x(in.data.rows(), ctx.dim());
        for (std::size_t c = 0; c < ctx.dim(); ++c) {
            const auto col = in.data.column(ctx.variable_names[c]);
            for (std::size_t r = 0; r < in.data.rows(); ++r) x(r, c) = col[r];
        }
        for (bool aware : {true, false}) {
            auto m = fit_logistic(x, y, in.data.sensitive(), ctx.variable_names, aware);
            for (const auto& w : m.warnings) run.warn(m.tag() + " model: " + w);
            models.push_back(std::move(m));
        }
    }
    json model_info = json::object();
    for (const auto& m : models) model_info[m.tag()] = model_record(m);
    run.info()["models"] = model_info;

    const auto t = make_transporter(o, ctx, run);
    const Matrix rows = source_rows(in.data, ctx);
    const Matrix star = transport_rows(t, rows, run);

    json audit = json::object();
    std::string dec = csv_line({"row", "model", "step", "label", "before", "after", "delta"});
    for (const auto& m : models) {
        std::vector<std::size_t> cols;
        for (const auto& f : m.feature_names) cols.push_back(ctx.coordinate(f));
        std::vector<std::size_t> order;
        for (std::size_t c : ctx.order_coords) {
            const auto it = std::find(cols.begin(), cols.end(), c);
            if (it != cols.end()) order.push_back(static_cast<std::size_t>(it - cols.begin()));
        }
        const Matrix xm = project(rows, cols);
        const Matrix sm = project(star, cols);
        const auto rep = cdp(m, xm, sm, in.data.count(ctx.options.target_group), o.per_individual);
        audit[m.tag()] = json::parse(to_json(rep));
        out << m.tag() << " CDP = " << format_number(rep.cdp) << " (n0 = " << rep.n0 << ")\n";

        if (o.decompose || !o.individual.empty()) {
            auto emit = [&](const std::string& label, std::span<const double> a, std::span<const double> b) {
                std::vector<double> xa;
                std::vector<double> xb;
                for (std::size_t c : cols) {
                    xa.push_back(a[c]);
                    xb.push_back(b[c]);
                }
                const auto path = decompose_individual(m, xa, xb, order);
                for (std::size_t s = 0; s < path.steps.size(); ++s) {
                    const auto& st = path.steps[s];
                    dec += csv_line({label, m.tag(), std::to_string(s), st.label, format_number(st.before),
                                     format_number(st.after), format_number(st.delta)});
                }
                return path;
            };
            if (!o.individual.empty()) {
                const auto a = parse_individual(o.individual, ctx);
                const auto b = t(a, run);
                const auto path = emit("individual", a, b);
                for (const auto& st : path.steps) {
                    out << "  " << st.label << ": " << format_number(st.before) << " -> " << format_number(st.after)
                        << " (" << format_number(st.delta) << ")\n";
                }
            } else {
                for (std::size_t r = 0; r < rows.rows(); ++r) emit(std::to_string(r), rows.row(r), star.row(r));
            }
        }
    }
    run.add_file("audit.json", audit.dump(2) + "\n");
    if (o.decompose || !o.individual.empty()) run.add_file("decomposition.csv", std::move(dec));
}

// ---------------------------------------------------------------------------
// synth

struct SynthSpec {
    std::vector<std::string> variables;
    std::string sensitive = "s";
    std::array<gaussian::GaussianSpec, 2> groups;
    json outcome;
};

SynthSpec load_synth_spec(const std::string& path) {
    const auto j = parse_json_file(path, "spec file");
    SynthSpec s;
    try {
        s.variables = j.at("variables").get<std::vector<std::string>>();
        s.sensitive = j.value("sensitive", std::string("s"));
        const auto& g = j.at("groups");
        if (!g.is_array() || g.size() != 2) throw ValidationError("spec file: 'groups' must hold exactly two groups");
        for (std::size_t k = 0; k < 2; ++k) {
            const auto mean = g[k].at("mean").get<std::vector<double>>();
            const auto cov = g[k].at("covariance").get<std::vector<std::vector<double>>>();
            Matrix m(cov.size(), cov.empty() ? 0 : cov[0].size());
            for (std::size_t r = 0; r < cov.size(); ++r) {
                if (cov[r].size() != m.cols()) throw ValidationError("spec file: covariance rows differ in length");
                for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = cov[r][c];
            }
            try {
                s.groups[k] = gaussian::make_spec(mean, m);
            } catch (const Error& e) {
                throw ValidationError("spec file, group " + std::to_string(k) + ": " + e.what());
            }
            if (mean.size() != s.variables.size()) {
                throw ValidationError("spec file: group " + std::to_string(k) + " has " + std::to_string(mean.size()) +
                                      " means for " + std::to_string(s.variables.size()) + " variables");
            }
        }
        if (j.contains("outcome")) s.outcome = j.at("outcome");
    } catch (const json::exception& e) {
        throw ValidationError("spec file '" + path + "': " + e.what());
    }
    return s;
}

void cmd_synth(const Options& o, Run& run, std::ostream& out) {
    const auto spec = load_synth_spec(o.spec);
    std::string outcome_name;
    std::vector<double> beta;
    double intercept = 0.0;
    double beta_s = 0.0;
    if (!spec.outcome.is_null()) {
        try {
            outcome_name = spec.outcome.at("name").get<std::string>();
            beta = spec.outcome.at("coefficients").get<std::vector<double>>();
            intercept = spec.outcome.value("intercept", 0.0);
            beta_s = spec.outcome.value("sensitive_coefficient", 0.0);
        } catch (const json::exception& e) {
            throw ValidationError(std::string("spec file outcome: ") + e.what());
        }
        if (beta.size() != spec.variables.size()) throw ValidationError("spec file outcome: coefficient count mismatch");
    }

    std::vector<std::string> header{spec.sensitive};
    header.insert(header.end(), spec.variables.begin(), spec.variables.end());
    if (!outcome_name.empty()) header.push_back(outcome_name);
    std::string csv = csv_line(header);
    CounterRng yrng(o.seed, 2);
    for (int g = 0; g < 2; ++g) {
        const Matrix x = gaussian::sample_gaussian(spec.groups[static_cast<std::size_t>(g)], o.n, o.seed,
                                                   static_cast<std::uint64_t>(g));
        for (std::size_t r = 0; r < x.rows(); ++r) {
            std::vector<std::string> f{std::to_string(g)};
            for (double v : x.row(r)) f.push_back(format_number(v));
            if (!outcome_name.empty()) {
                double eta = intercept + beta_s * g;
                for (std::size_t c = 0; c < beta.size(); ++c) eta += beta[c] * x(r, c);
                f.push_back(yrng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? "1" : "0");
            }
            csv += csv_line(f);
        }
    }
    run.add_file("data.csv", std::move(csv));
    run.info()["n_per_group"] = o.n;
    out << "sampled " << o.n << " rows per group\n";
}

// ---------------------------------------------------------------------------
// oracle

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

gaussian::Point2 parse_point(const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() != 2) throw ValidationError("--point expects 'x,y', got '" + text + "'");
    return {parse_number(parts[0], "--point"), parse_number(parts[1], "--point")};
}

std::vector<gaussian::Point2> parse_points(const std::string& text) {
    if (text.empty()) throw ValidationError("this oracle needs --point x,y (several separated by ';')");
    std::vector<gaussian::Point2> pts;
    for (const auto& p : split(text, ';')) pts.push_back(parse_point(p));
    return pts;
}

void require_2d(const SynthSpec& s) {
    if (s.variables.size() != 2) throw ValidationError("this oracle needs a two-variable spec");
}

void cmd_oracle(const Options& o, Run& run, std::ostream& out) {
    using namespace gaussian;
    const auto spec = load_synth_spec(o.spec);
    const std::string& kind = o.oracle_kind;
    if (kind == "ot-map") {
        const auto a = gaussian_ot_map(spec.groups[0], spec.groups[1]);
        const auto k = knothe_map(spec.groups[0], spec.groups[1]);
        json j;
        j["variables"] = spec.variables;
        j["linear"] = matrix_json(a.linear);
        j["offset"] = a.offset;
        j["knothe_linear"] = matrix_json(k.linear);
        j["knothe_offset"] = k.offset;
        run.add_file("oracle.json", j.dump(2) + "\n");
        out << j.dump(2) << "\n";
    } else if (kind == "cholesky") {
        json j;
        j["variables"] = spec.variables;
        j["group0"] = matrix_json(cholesky_lower(spec.groups[0].covariance));
        j["group1"] = matrix_json(cholesky_lower(spec.groups[1].covariance));
        run.add_file("oracle.json", j.dump(2) + "\n");
        out << j.dump(2) << "\n";
    } else if (kind == "conditional-2d") {
        require_2d(spec);
        const auto p0 = params_from_spec(spec.groups[0]);
        const auto p1 = params_from_spec(spec.groups[1]);
        std::string csv = csv_line({"x", "y", "x_star", "y_star"});
        for (const auto& p : parse_points(o.point)) {
            const auto t = conditional_gaussian_transport_2d(p0, p1, p);
            csv += csv_line({format_number(p[0]), format_number(p[1]), format_number(t[0]), format_number(t[1])});
        }
        run.add_file("oracle.csv", csv);
        out << csv;
    } else if (kind == "rotate-sweep") {
        require_2d(spec);
        if (o.angles == 0) throw ValidationError("--angles must be positive");
        const auto p0 = params_from_spec(spec.groups[0]);
        const auto p1 = params_from_spec(spec.groups[1]);
        const auto pts = parse_points(o.point);
        std::string csv = csv_line({"theta", "x_star", "y_star"});
        for (std::size_t i = 0; i < o.angles; ++i) {
            const double theta = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(o.angles);
            const auto t = rotated_transport_2d(p0, p1, theta, pts.front());
            csv += csv_line({format_number(theta), format_number(t[0]), format_number(t[1])});
        }
        run.add_file("oracle.csv", std::move(csv));
        out << "wrote " << o.angles << " directions\n";
    } else if (kind == "markov-check") {
        if (o.dag.empty()) throw ValidationError("markov-check needs --dag");
        const auto dag = load_dag(o.dag);
        json j;
        for (std::size_t g = 0; g < 2; ++g) {
            const auto check = markov_precision_check(spec.groups[g], dag, 1e-8);
            json r;
            r["markov"] = check.markov;
            json v = json::array();
            for (auto [a, b] : check.violations) v.push_back(std::vector<std::size_t>{a, b});
            r["violations"] = v;
            r["precision"] = matrix_json(check.precision);
            j["group" + std::to_string(g)] = r;
        }
        const bool ok = j["group0"]["markov"].get<bool>() && j["group1"]["markov"].get<bool>();
        j["markov"] = ok;
        run.add_file("oracle.json", j.dump(2) + "\n");
        out << (ok ? "true" : "false") << "\n";
    } else {
        throw ValidationError("unknown oracle '" + kind + "'");
    }
    run.info()["oracle"] = kind;
}

// ---------------------------------------------------------------------------
// plotdata

std::string svg_step(const std::string& title, const DensityFit& f0, const DensityFit& f1, double a, double b) {
    constexpr double W = 480;
    constexpr double H = 240;
    const double lo = std::min(f0.grid().front(), f1.grid().front());
    const double hi = std::max(f0.grid().back(), f1.grid().back());
    double top = 0.0;
    for (double v : f0.density) top = std::max(top, v);
    for (double v : f1.density) top = std::max(top, v);
    if (!(top > 0.0)) top = 1.0;
    auto px = [&](double x) { return format_number(std::round(10 * (20 + (W - 40) * (x - lo) / (hi - lo))) / 10); };
    auto py = [&](double y) { return format_number(std::round(10 * (H - 20 - (H - 40) * y / top)) / 10); };
    auto line = [&](const DensityFit& f, const char* color) {
        std::string s = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" points=\"";
        for (std::size_t i = 0; i < f.grid().size(); ++i) s += px(f.grid()[i]) + "," + py(f.density[i]) + " ";
        return s + "\"/>\n";
    };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"240\">\n";
    s += "<text x=\"20\" y=\"14\" font-size=\"12\">" + title + "</text>\n";
    s += line(f0, "red") + line(f1, "blue");
    s += "<line x1=\"" + px(a) + "\" y1=\"20\" x2=\"" + px(a) + "\" y2=\"220\" stroke=\"red\" stroke-dasharray=\"4\"/>\n";
    s += "<line x1=\"" + px(b) + "\" y1=\"20\" x2=\"" + px(b) + "\" y2=\"220\" stroke=\"blue\" stroke-dasharray=\"4\"/>\n";
    return s + "</svg>\n";
}

std::string table_csv(const std::vector<double>& table, std::size_t k) {
    const std::size_t cols = table.size() / k;
    std::string s;
    for (std::size_t r = 0; r < k; ++r) {
        std::vector<std::string> f;
        for (std::size_t c = 0; c < cols; ++c) f.push_back(format_number(table[r + k * c]));
        s += csv_line(f);
    }
    return s;
}

void cmd_plotdata(const Options& o, Run& run, std::ostream& out) {
    const auto in = load_inputs(o, "");
    record_ingest(run, in);
    const auto ctx = fit_context(in.data, in.dag, transport_options(o));
    run.warn_all(ctx.warnings);
    run.info()["bandwidths"] = bandwidth_record(ctx);

    std::vector<double> a;
    if (o.individual.empty()) {
        const Matrix rows = source_rows(in.data, ctx);
        for (std::size_t c = 0; c < ctx.dim(); ++c) {
            std::vector<double> col(rows.rows());
            for (std::size_t r = 0; r < rows.rows(); ++r) col[r] = rows(r, c);
            std::sort(col.begin(), col.end());
            const std::size_t n = col.size();
            a.push_back(n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]));
        }
        run.info()["individual"] = "source-group medians";
    } else {
        a = parse_individual(o.individual, ctx);
        run.info()["individual"] = o.individual;
    }

    const auto res = transport_individual(ctx, a);
    run.warn_all(res.warnings);
    std::string steps = csv_line({"step", "variable", "value", "probability", "mapped", "source_parents",
                                  "target_parents"});
    for (std::size_t i = 0; i < res.steps.size(); ++i) {
        const auto& st = res.steps[i];
        const auto& name = ctx.variable_names[st.coord];
        std::string sp;
        std::string tp;
        for (std::size_t q = 0; q < st.source_parents.size(); ++q) {
            const auto& pn = ctx.variable_names[ctx.parent_coords[st.coord][q]];
            sp += (q ? ";" : "") + pn + "=" + format_number(st.source_parents[q]);
            tp += (q ? ";" : "") + pn + "=" + format_number(st.target_parents[q]);
        }
        steps += csv_line({std::to_string(i + 1), name, format_number(st.value), format_number(st.probability),
                           format_number(st.mapped), sp, tp});

        const auto f0 = fit_conditional(ctx, kSourceSide, st.coord, st.source_parents).fit;
        const auto f1 = fit_conditional(ctx, kTargetSide, st.coord, st.target_parents).fit;
        std::string dens = csv_line({"side", "x", "density", "cdf"});
        for (int side : {0, 1}) {
            const auto& f = side == 0 ? f0 : f1;
            for (std::size_t g = 0; g < f.grid().size(); ++g) {
                dens += csv_line({side == 0 ? "source" : "target", format_number(f.grid()[g]),
                                  format_number(f.density[g]), format_number(f.cdf.values[g])});
            }
        }
        const std::string stem = "step" + std::to_string(i + 1) + "_" + name;
        run.add_file(stem + ".csv", std::move(dens));
        if (o.svg) run.add_file(stem + ".svg", svg_step(name, f0, f1, st.value, st.mapped));
    }
    run.add_file("steps.csv", std::move(steps));

    if (choose_engine(o, ctx, run) == Engine::grid) {
        const auto t = obtain_tensors(ctx, o.grid_size, run);
        for (std::size_t c = 0; c < ctx.dim(); ++c) {
            const auto& v = t.variables[c];
            const auto& name = ctx.variable_names[c];
            run.add_file("F_" + name + "_source.csv", table_csv(v.cdf[0], t.k));
            run.add_file("F_" + name + "_target.csv", table_csv(v.cdf[1], t.k));
            run.add_file("Q_" + name + "_source.csv", table_csv(v.quantile[0], t.k));
            run.add_file("Q_" + name + "_target.csv", table_csv(v.quantile[1], t.k));
            std::string g = csv_line({"u", "value_source", "value_target"});
            for (std::size_t r = 0; r < t.k; ++r) {
                g += csv_line({format_number(t.levels[r]), format_number(v.value_grid[0][r]),
                               format_number(v.value_grid[1][r])});
            }
            run.add_file("grid_" + name + ".csv", std::move(g));
        }
    }
    out << "wrote " << res.steps.size() << " step bundles\n";
}

// ---------------------------------------------------------------------------
// command line

json config_json(const Options& o, const std::string& cmd) {
    json c;
    auto data_cfg = [&] {
        c["dag"] = o.dag;
        c["data"] = o.data;
        c["sensitive"] = o.sensitive;
        c["source_level"] = o.source_level;
        c["target_level"] = o.target_level;
        c["grid_size"] = o.grid_size;
        c["bandwidth_scale"] = o.bandwidth_scale;
        c["engine"] = o.engine;
        c["seed"] = o.seed;
        c["jitter"] = o.jitter;
        c["interp_grid"] = o.interp_grid;
    };
    if (cmd == "fit" || cmd == "transport" || cmd == "audit" || cmd == "plotdata") data_cfg();
    if (cmd == "audit") {
        c["outcome"] = o.outcome;
        c["model"] = o.model;
        c["decompose"] = o.decompose;
        c["per_individual"] = o.per_individual;
        c["individual"] = o.individual;
    }
    if (cmd == "plotdata") {
        c["individual"] = o.individual;
        c["svg"] = o.svg;
    }
    if (cmd == "synth") {
        c["spec"] = o.spec;
        c["n"] = o.n;
        c["seed"] = o.seed;
    }
    if (cmd == "oracle") {
        c["kind"] = o.oracle_kind;
        c["spec"] = o.spec;
        c["dag"] = o.dag;
        c["point"] = o.point;
        c["angles"] = o.angles;
    }
    c["out"] = o.out;
    return c;
}

void add_data_options(CLI::App* app, Options& o) {
    app->add_option("--dag", o.dag, "DAG file (edge list with @sensitive / @outcome roles)")->required();
    app->add_option("--data", o.data, "CSV file with a header row")->required();
    app->add_option("--sensitive", o.sensitive, "sensitive column name")->capture_default_str();
    app->add_option("--source-level", o.source_level, "sensitive label of the source group")->capture_default_str();
    app->add_option("--target-level", o.target_level, "sensitive label of the target group")->capture_default_str();
    app->add_option("--grid-size", o.grid_size, "grid engine size k")
        ->capture_default_str()
        ->check(CLI::Range(std::size_t{3}, std::size_t{100000}));
    app->add_option("--bandwidth-scale", o.bandwidth_scale, "multiplier on Silverman bandwidths")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--engine", o.engine, "individual, grid, or auto (grid for >= 200 source rows)")
        ->capture_default_str()
        ->check(CLI::IsMember({"auto", "individual", "grid"}));
    app->add_option("--seed", o.seed, "seed for jitter")->capture_default_str();
    app->add_flag("--jitter", o.jitter, "break ties with uniform jitter of half the smallest gap");
    app->add_flag("--interp-grid", o.interp_grid, "multilinear interpolation in grid lookups");
    app->add_option("--out", o.out, "output directory")->required();
}

int exit_code_for(const Error& e) { return e.kind() == ErrorKind::numeric ? kExitNumeric : kExitValidation; }

json error_record(const std::string& kind, const std::string& message, int code) {
    json e;
    e["kind"] = kind;
    e["message"] = message;
    e["exit_code"] = code;
    return e;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Counterfactuals by sequential conditional transport along a causal DAG", "seqtrans"};
    app.require_subcommand(1);

    auto* fit = app.add_subcommand("fit", "fit bandwidths (and grid tensors) for a dataset and DAG");
    add_data_options(fit, o);

    auto* transport = app.add_subcommand("transport", "write counterfactuals for the source group");
    add_data_options(transport, o);

    auto* audit = app.add_subcommand("audit", "counterfactual demographic parity of aware/unaware logistic models");
    add_data_options(audit, o);
    audit->add_option("--outcome", o.outcome, "outcome column (default: the DAG's @outcome)");
    audit->add_option("--model", o.model, "JSON file with a fixed logistic model instead of fitting");
    audit->add_flag("--decompose", o.decompose, "write per-individual score decompositions");
    audit->add_flag("--per-individual", o.per_individual, "include per-individual scores in audit.json");
    audit->add_option("--individual", o.individual, "decompose one individual, e.g. x1=-2,x2=-1");

    auto* synth = app.add_subcommand("synth", "sample a two-group Gaussian dataset");
    synth->add_option("--spec", o.spec, "JSON spec with per-group mean and covariance")->required();
    synth->add_option("--n", o.n, "rows per group")->capture_default_str()->check(CLI::Range(std::size_t{1}, std::size_t{100000000}));
    synth->add_option("--seed", o.seed, "random seed")->capture_default_str();
    synth->add_option("--out", o.out, "output directory")->required();

    auto* oracle = app.add_subcommand("oracle", "closed-form Gaussian transports");
    oracle->add_option("kind", o.oracle_kind, "ot-map, cholesky, conditional-2d, rotate-sweep or markov-check")
        ->required()
        ->check(CLI::IsMember({"ot-map", "cholesky", "conditional-2d", "rotate-sweep", "markov-check"}));
    oracle->add_option("--spec", o.spec, "JSON spec with per-group mean and covariance")->required();
    oracle->add_option("--dag", o.dag, "DAG file (markov-check)");
    oracle->add_option("--point", o.point, "x,y (several separated by ';')");
    oracle->add_option("--angles", o.angles, "number of directions for rotate-sweep")->capture_default_str();
    oracle->add_option("--out", o.out, "output directory")->required();

    auto* plot = app.add_subcommand("plotdata", "densities, CDFs and grid tensors behind each transport step");
    add_data_options(plot, o);
    plot->add_option("--individual", o.individual, "individual to trace (default: source-group medians)");
    plot->add_flag("--svg", o.svg, "also write a minimal SVG per step");

    auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    replay->add_option("manifest", o.manifest, "manifest.json of an earlier run")->required();
    replay->add_option("--out", o.out, "output directory (default: the recorded one)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    if (replay->parsed()) {
        try {
            const auto m = parse_json_file(o.manifest, "manifest");
            auto argv = m.at("argv").get<std::vector<std::string>>();
            if (!o.out.empty()) {
                const auto it = std::find(argv.begin(), argv.end(), "--out");
                if (it == argv.end() || it + 1 == argv.end()) throw ValidationError("manifest argv has no --out");
                *(it + 1) = o.out;
            }
            return run(argv, out, err);
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return exit_code_for(e);
        } catch (const json::exception& e) {
            err << "error: malformed manifest: " << e.what() << "\n";
            return kExitValidation;
        }
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string cmd = sub->get_name();
    Run r(cmd, config_json(o, cmd), args, o.out);
    auto fail = [&](const std::string& kind, const std::string& msg, int code) {
        err << "error: " << msg << "\n";
        try {
            r.finish(error_record(kind, msg, code));
        } catch (const std::exception& e) {
            err << "error: could not write manifest: " << e.what() << "\n";
        }
        return code;
    };
    try {
        if (cmd == "fit") cmd_fit(o, r, out);
        else if (cmd == "transport") cmd_transport(o, r, out);
        else if (cmd == "audit") cmd_audit(o, r, out);
        else if (cmd == "synth") cmd_synth(o, r, out);
        else if (cmd == "oracle") cmd_oracle(o, r, out);
        else if (cmd == "plotdata") cmd_plotdata(o, r, out);
        r.finish(std::nullopt);
    } catch (const Error& e) {
        return fail(e.kind() == ErrorKind::numeric ? "numeric" : "validation", e.what(), exit_code_for(e));
    } catch (const fs::filesystem_error& e) {
        return fail("validation", e.what(), kExitValidation);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), kExitInternal);
    }
    return kExitOk;
}

}  // namespace seqtrans::cli
