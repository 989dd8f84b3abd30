#include "kreproj/io.hpp"
#include "kreproj/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace kreproj {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string join(const std::vector<std::string>& parts, char sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::ofstream open_out(const fs::path& path)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    return out;
}

void finish(std::ofstream& out, const fs::path& path)
{
    out.flush();
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

void write_meta(std::ostream& out, const std::string& key, const std::string& value)
{
    if (!value.empty()) out << "# " << key << '=' << value << '\n';
}

std::string row_text(const Eigen::Ref<const Vector>& v)
{
    std::string line;
    for (Index i = 0; i < v.size(); ++i) {
        if (i) line += ',';
        line += format_shortest(v[i]);
    }
    return line;
}

std::map<std::string, std::string> read_key_values(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("'" + path.string() + "': expected key=value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

const std::string& required(const std::map<std::string, std::string>& kv, const std::string& key,
                            const fs::path& path)
{
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error("'" + path.string() + "': missing '" + key + "'");
    return it->second;
}

std::string meta_or(const CsvTable& t, const std::string& key)
{
    const auto it = t.meta.find(key);
    return it == t.meta.end() ? std::string() : it->second;
}

}  // namespace

double parse_double(const std::string& text)
{
    const std::string s = trim(text);
    double value = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto result = std::from_chars(first, last, value);
    if (result.ec != std::errc() || result.ptr != last)
        throw Error("not a number: '" + text + "'");
    return value;
}

std::size_t CsvTable::column(const std::string& name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("CSV has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, std::size_t col) const
{
    return parse_double(rows.at(row).at(col));
}

CsvTable read_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    CsvTable table;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string body = trim(line.substr(1));
            const auto eq = body.find('=');
            if (eq != std::string::npos) table.meta[body.substr(0, eq)] = body.substr(eq + 1);
            continue;
        }
        std::vector<std::string> fields = split(line, ',');
        if (!have_header) {
            for (std::string& f : fields) f = trim(f);
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size())
            throw Error("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                        std::to_string(table.header.size()) + " fields");
        table.rows.push_back(std::move(fields));
    }
    if (!have_header) throw Error("'" + path.string() + "': no header line");
    return table;
}

void write_matrix_csv(const fs::path& path, const Matrix& M)
{
    std::ofstream out = open_out(path);
    for (Index i = 0; i < M.rows(); ++i) out << row_text(M.row(i).transpose()) << '\n';
    finish(out, path);
}

Matrix read_matrix_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        for (const std::string& f : split(line, ',')) row.push_back(parse_double(f));
        if (!rows.empty() && row.size() != rows.front().size())
            throw Error("'" + path.string() + "': ragged matrix");
        rows.push_back(std::move(row));
    }
    const Index cols = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
    Matrix M(static_cast<Index>(rows.size()), cols);
    for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < cols; ++j)
            M(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return M;
}

void write_snapshots(const fs::path& path, const SnapshotSet& s)
{
    std::ofstream out = open_out(path);
    write_meta(out, "system", s.system_name);
    write_meta(out, "dt", format_shortest(s.dt));
    write_meta(out, "seed", std::to_string(s.seed));
    write_meta(out, "dropped", std::to_string(s.dropped));
    std::vector<std::string> header;
    for (Index i = 0; i < s.state_dim(); ++i) header.push_back("x" + std::to_string(i + 1));
    for (Index i = 0; i < s.state_dim(); ++i) header.push_back("y" + std::to_string(i + 1));
    out << join(header, ',') << '\n';
    for (Index j = 0; j < s.count(); ++j)
        out << row_text(s.X.col(j)) << ',' << row_text(s.Y.col(j)) << '\n';
    finish(out, path);
}

SnapshotSet read_snapshots(const fs::path& path)
{
    const CsvTable t = read_csv(path);
    if (t.header.size() % 2 != 0 || t.header.empty())
        throw Error("'" + path.string() + "': snapshot CSV needs x1..xd, y1..yd");
    const Index d = static_cast<Index>(t.header.size() / 2);
    SnapshotSet s;
    s.X.resize(d, static_cast<Index>(t.rows.size()));
    s.Y.resize(d, static_cast<Index>(t.rows.size()));
    std::vector<std::size_t> xc, yc;
    for (Index i = 0; i < d; ++i) {
        xc.push_back(t.column("x" + std::to_string(i + 1)));
        yc.push_back(t.column("y" + std::to_string(i + 1)));
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (Index i = 0; i < d; ++i) {
            s.X(i, static_cast<Index>(r)) = t.number(r, xc[static_cast<std::size_t>(i)]);
            s.Y(i, static_cast<Index>(r)) = t.number(r, yc[static_cast<std::size_t>(i)]);
        }
    s.system_name = meta_or(t, "system");
    if (const std::string dt = meta_or(t, "dt"); !dt.empty()) s.dt = parse_double(dt);
    if (const std::string seed = meta_or(t, "seed"); !seed.empty()) s.seed = std::stoull(seed);
    if (const std::string dropped = meta_or(t, "dropped"); !dropped.empty())
        s.dropped = std::stoll(dropped);
    return s;
}

void write_model(const fs::path& path, const KoopmanApproximation& model,
                 const std::string& system_name)
{
    write_matrix_csv(path, model.K);
    fs::path meta_path = path;
    meta_path += ".meta";
    std::ofstream out = open_out(meta_path);
    const Dictionary& dict = model.dictionary;
    if (!system_name.empty()) out << "system=" << system_name << '\n';
    out << "dt=" << format_shortest(model.dt) << '\n';
    out << "m=" << model.m << '\n';
    out << "N=" << dict.size() << '\n';
    out << "state_names=" << join(dict.state_names(), ',') << '\n';
    out << "labels=" << join(dict.labels(), ',') << '\n';
    std::vector<std::string> rows;
    for (Index i = 0; i < dict.size(); ++i) {
        std::vector<std::string> e;
        for (Index j = 0; j < dict.state_dim(); ++j)
            e.push_back(std::to_string(dict.exponents()(i, j)));
        rows.push_back(join(e, ' '));
    }
    out << "exponents=" << join(rows, ';') << '\n';
    out << "condition_number=" << format_shortest(model.condition_number) << '\n';
    out << "residual_rms=" << format_shortest(model.residual_rms) << '\n';
    out << "used_pseudoinverse=" << (model.used_pseudoinverse ? 1 : 0) << '\n';
    finish(out, meta_path);
}

KoopmanApproximation read_model(const fs::path& path)
{
    fs::path meta_path = path;
    meta_path += ".meta";
    const auto kv = read_key_values(meta_path);
    const std::vector<std::string> names = split(required(kv, "state_names", meta_path), ',');
    const std::vector<std::string> rows = split(required(kv, "exponents", meta_path), ';');
    Eigen::MatrixXi exponents(static_cast<Index>(rows.size()), static_cast<Index>(names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::vector<std::string> e = split(trim(rows[i]), ' ');
        if (e.size() != names.size()) throw Error("'" + meta_path.string() + "': bad exponent row");
        for (std::size_t j = 0; j < e.size(); ++j)
            exponents(static_cast<Index>(i), static_cast<Index>(j)) = std::stoi(e[j]);
    }
    KoopmanApproximation model{read_matrix_csv(path), Dictionary(exponents, names)};
    if (model.K.rows() != model.dictionary.size() || model.K.cols() != model.dictionary.size())
        throw Error("'" + path.string() + "': K does not match the dictionary size");
    model.dt = parse_double(required(kv, "dt", meta_path));
    model.m = std::stoll(required(kv, "m", meta_path));
    if (kv.count("condition_number")) model.condition_number = parse_double(kv.at("condition_number"));
    if (kv.count("residual_rms")) model.residual_rms = parse_double(kv.at("residual_rms"));
    if (kv.count("used_pseudoinverse")) model.used_pseudoinverse = kv.at("used_pseudoinverse") == "1";
    return model;
}

void write_metric(const fs::path& path, const Metric& metric)
{
    write_matrix_csv(path, metric.W);
}

Metric read_metric(const fs::path& path)
{
    Metric metric{read_matrix_csv(path)};
    if (metric.W.rows() != metric.W.cols())
        throw Error("'" + path.string() + "': metric must be square");
    metric.normalized = std::abs(pseudo_determinant(metric.W) - 1.0) <= 1e-6;
    metric.validate();
    return metric;
}

void write_rollout(const fs::path& path, const Rollout& r, const std::string& descriptor)
{
    std::ofstream out = open_out(path);
    write_meta(out, "surrogate", descriptor);
    if (r.diverged_at) write_meta(out, "diverged_at", std::to_string(*r.diverged_at));
    const Index d = r.states.empty() ? 0 : r.states.front().size();
    std::vector<std::string> header{"t"};
    for (Index i = 0; i < d; ++i) header.push_back("x" + std::to_string(i + 1));
    out << join(header, ',') << '\n';
    for (std::size_t k = 0; k < r.states.size(); ++k)
        out << format_shortest(r.times[k]) << ',' << row_text(r.states[k]) << '\n';
    finish(out, path);
}

Rollout read_rollout(const fs::path& path)
{
    const CsvTable t = read_csv(path);
    if (t.header.empty() || t.header.front() != "t")
        throw Error("'" + path.string() + "': rollout CSV must start with column t");
    Rollout r;
    const Index d = static_cast<Index>(t.header.size()) - 1;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        r.times.push_back(t.number(k, 0));
        Vector x(d);
        for (Index i = 0; i < d; ++i) x[i] = t.number(k, static_cast<std::size_t>(i + 1));
        r.states.push_back(std::move(x));
    }
    if (const std::string div = meta_or(t, "diverged_at"); !div.empty())
        r.diverged_at = std::stoll(div);
    return r;
}

void write_grid(const fs::path& path, const ErrorGrid& grid,
                const std::vector<std::string>& state_names)
{
    if (state_names.size() != grid.axes.size())
        throw InvalidArgument("write_grid: one state name per axis required");
    std::ofstream out = open_out(path);
    write_meta(out, "metric", grid.metric_name);
    write_meta(out, "surrogate", grid.surrogate_descriptor);
    std::vector<std::string> header = state_names;
    header.emplace_back("error");
    header.emplace_back("converged");
    out << join(header, ',') << '\n';
    for (Index flat = 0; flat < grid.node_count(); ++flat)
        out << row_text(grid.node(flat)) << ',' << format_shortest(grid.values[flat]) << ','
            << (grid.converged[static_cast<std::size_t>(flat)] ? 1 : 0) << '\n';
    finish(out, path);
}

ErrorGrid read_grid(const fs::path& path)
{
    const CsvTable t = read_csv(path);
    const std::size_t err = t.column("error");
    const std::size_t conv = t.column("converged");
    if (err == 0) throw Error("'" + path.string() + "': grid CSV needs state columns");
    ErrorGrid grid;
    grid.metric_name = meta_or(t, "metric");
    grid.surrogate_descriptor = meta_or(t, "surrogate");
    for (std::size_t c = 0; c < err; ++c) {
        std::set<double> values;
        for (std::size_t r = 0; r < t.rows.size(); ++r) values.insert(t.number(r, c));
        Vector axis(static_cast<Index>(values.size()));
        Index i = 0;
        for (double v : values) axis[i++] = v;
        grid.axes.push_back(std::move(axis));
    }
    Index count = 1;
    for (const Vector& a : grid.axes) count *= a.size();
    if (count != static_cast<Index>(t.rows.size()))
        throw Error("'" + path.string() + "': rows do not form a full tensor grid");
    grid.values.resize(count);
    grid.converged.resize(static_cast<std::size_t>(count));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        grid.values[static_cast<Index>(r)] = t.number(r, err);
        grid.converged[r] = t.rows[r][conv] == "1";
    }
    return grid;
}

void write_series(const fs::path& path, const ErrorSeries& s, const std::string& descriptor)
{
    std::ofstream out = open_out(path);
    write_meta(out, "surrogate", descriptor);
    out << "t,error,flagged\n";
    for (std::size_t k = 0; k < s.times.size(); ++k)
        out << format_shortest(s.times[k]) << ',' << format_shortest(s.errors[k]) << ','
            << (s.flagged[k] ? 1 : 0) << '\n';
    finish(out, path);
}

ErrorSeries read_series(const fs::path& path)
{
    const CsvTable t = read_csv(path);
    const std::size_t tc = t.column("t"), ec = t.column("error"), fc = t.column("flagged");
    ErrorSeries s;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        s.times.push_back(t.number(r, tc));
        s.errors.push_back(t.number(r, ec));
        s.flagged.push_back(t.rows[r][fc] == "1");
    }
    return s;
}

void write_sweep(const fs::path& path, const SweepResult& sweep, const std::string& descriptor)
{
    std::ofstream out = open_out(path);
    write_meta(out, "dictionary", descriptor);
    out << "dt,projector,median,q25,q75\n";
    for (std::size_t i = 0; i < sweep.dts.size(); ++i)
        for (const SweepSeries& s : sweep.series) {
            const bool missing = s.missing[i];
            const auto value = [&](const std::vector<double>& v) {
                return missing ? std::string("nan") : format_shortest(v[i]);
            };
            out << format_shortest(sweep.dts[i]) << ',' << s.projector << ',' << value(s.median)
                << ',' << value(s.q25) << ',' << value(s.q75) << '\n';
        }
    finish(out, path);
}

SweepResult read_sweep(const fs::path& path)
{
    const CsvTable t = read_csv(path);
    const std::size_t dc = t.column("dt"), pc = t.column("projector"), mc = t.column("median"),
                      q1 = t.column("q25"), q3 = t.column("q75");
    SweepResult sweep;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double dt = t.number(r, dc);
        if (std::find(sweep.dts.begin(), sweep.dts.end(), dt) == sweep.dts.end())
            sweep.dts.push_back(dt);
        const std::string& name = t.rows[r][pc];
        auto it = std::find_if(sweep.series.begin(), sweep.series.end(),
                               [&](const SweepSeries& s) { return s.projector == name; });
        if (it == sweep.series.end()) {
            sweep.series.push_back({name, {}, {}, {}, {}});
            it = sweep.series.end() - 1;
        }
        const double median = t.number(r, mc);
        it->median.push_back(median);
        it->q25.push_back(t.number(r, q1));
        it->q75.push_back(t.number(r, q3));
        it->missing.push_back(std::isnan(median));
    }
    for (const SweepSeries& s : sweep.series)
        if (s.median.size() != sweep.dts.size())
            throw Error("'" + path.string() + "': projector '" + s.projector +
                        "' is missing dt rows");
    return sweep;
}

void write_mean_error(const fs::path& path, const std::vector<MeanErrorSeries>& series)
{
    if (series.empty()) throw InvalidArgument("write_mean_error: no series");
    std::ofstream out = open_out(path);
    for (const MeanErrorSeries& s : series)
        write_meta(out, "diverged." + s.name, std::to_string(s.diverged));
    std::vector<std::string> header{"t"};
    for (const MeanErrorSeries& s : series) header.push_back(s.name);
    out << join(header, ',') << '\n';
    for (std::size_t k = 0; k < series.front().times.size(); ++k) {
        out << format_shortest(series.front().times[k]);
        for (const MeanErrorSeries& s : series) out << ',' << format_shortest(s.mean_error[k]);
        out << '\n';
    }
    finish(out, path);
}

std::vector<MeanErrorSeries> read_mean_error(const fs::path& path)
{
    const CsvTable t = read_csv(path);
    if (t.header.empty() || t.header.front() != "t")
        throw Error("'" + path.string() + "': mean-error CSV must start with column t");
    std::vector<MeanErrorSeries> out;
    for (std::size_t c = 1; c < t.header.size(); ++c) {
        MeanErrorSeries s;
        s.name = t.header[c];
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            s.times.push_back(t.number(r, 0));
            s.mean_error.push_back(t.number(r, c));
        }
        if (const std::string div = meta_or(t, "diverged." + s.name); !div.empty())
            s.diverged = std::stoll(div);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace kreproj
