#include "kreproj/config.hpp"
#include "kreproj/format.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace kreproj {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string key_name(const std::string& section, const std::string& key)
{
    return "[" + section + "] " + key;
}

double to_double(const std::string& section, const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument(key_name(section, key) + ": expected a number, got '" + value + "'");
    }
}

long long to_integer(const std::string& section, const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument(key_name(section, key) + ": expected an integer, got '" + value + "'");
    }
}

bool to_bool(const std::string& section, const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw InvalidArgument(key_name(section, key) + ": expected true or false, got '" + value + "'");
}

std::vector<double> to_doubles(const std::string& section, const std::string& key,
                               const std::string& value)
{
    std::vector<double> out;
    for (const std::string& item : split_list(value)) out.push_back(to_double(section, key, item));
    return out;
}

std::string join_numbers(const std::vector<double>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += format_shortest(values[i]);
    }
    return out;
}

std::string join_strings(const std::vector<std::string>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += values[i];
    }
    return out;
}

void apply(ExperimentConfig& c, const std::string& section, const std::string& key,
           const std::string& value)
{
    const auto num = [&] { return to_double(section, key, value); };
    const auto integer = [&] { return to_integer(section, key, value); };
    const auto flag = [&] { return to_bool(section, key, value); };

    if (section == "system") {
        if (key == "name")
            c.system = value;
        else
            c.parameters[key] = num();
        return;
    }
    if (section == "dictionary") {
        if (key == "type") c.dictionary.type = value;
        else if (key == "degree") c.dictionary.degree = static_cast<int>(integer());
        else if (key == "exclude") c.dictionary.exclude = split_list(value);
        else throw InvalidArgument("unknown key " + key_name(section, key));
        return;
    }
    if (section == "edmd") {
        if (key == "dt") c.dt = num();
        else if (key == "m") c.m = integer();
        else if (key == "seed") {
            const long long s = integer();
            if (s < 0) throw InvalidArgument(key_name(section, key) + ": must be >= 0");
            c.seed = static_cast<std::uint64_t>(s);
        }
        else if (key == "ridge") c.ridge = num();
        else if (key == "scale_observables") c.scale_observables = flag();
        else if (key == "sigma_data") c.sigma_data = value;
        else throw InvalidArgument("unknown key " + key_name(section, key));
        return;
    }
    if (section == "projection") {
        if (key == "projectors") c.projectors = split_list(value);
        else if (key == "metric_file") c.metric_file = value;
        else if (key == "max_iters") c.solver.max_iters = static_cast<int>(integer());
        else if (key == "grad_tol") c.solver.grad_tol = num();
        else if (key == "multistart_grid") c.solver.multistart_grid = static_cast<int>(integer());
        else if (key == "damping_init") c.solver.damping_init = num();
        else if (key == "tie_tol") c.solver.tie_tol = num();
        else if (key == "max_condition") c.geometric.max_condition = num();
        else if (key == "tau") c.geometric.tau = num();
        else if (key == "domain_margin") c.domain_margin = num();
        else throw InvalidArgument("unknown key " + key_name(section, key));
        return;
    }
    if (section == "evaluation") {
        if (key == "grid") {
            c.evaluation.grid.clear();
            for (const std::string& item : split_list(value))
                c.evaluation.grid.push_back(to_integer(section, key, item));
        }
        else if (key == "sweep_dts") c.evaluation.sweep_dts = to_doubles(section, key, value);
        else if (key == "n_eval") c.evaluation.n_eval = integer();
        else if (key == "x0") c.evaluation.x0 = to_doubles(section, key, value);
        else if (key == "rollout_steps") c.evaluation.rollout_steps = integer();
        else if (key == "x0_grid") c.evaluation.x0_grid = integer();
        else if (key == "mean_steps") c.evaluation.mean_steps = integer();
        else if (key == "series_steps") c.evaluation.series_steps = integer();
        else if (key == "test_points") c.evaluation.test_points = integer();
        else throw InvalidArgument("unknown key " + key_name(section, key));
        return;
    }
    if (section == "output") {
        if (key == "dir") c.output_dir = value;
        else if (key == "threads") c.threads = static_cast<int>(integer());
        else if (key == "strict") c.strict = flag();
        else throw InvalidArgument("unknown key " + key_name(section, key));
        return;
    }
    throw InvalidArgument("unknown config section [" + section + "]");
}

}  // namespace

void ExperimentConfig::validate() const
{
    (void)kreproj::make_system(*this);
    if (dictionary.type != "monomial")
        throw InvalidArgument("[dictionary] type: only 'monomial' is supported, got '" +
                              dictionary.type + "'");
    if (dictionary.degree < 1) throw InvalidArgument("[dictionary] degree must be >= 1");
    if (!(dt > 0)) throw InvalidArgument("[edmd] dt must be positive");
    if (m < 1) throw InvalidArgument("[edmd] m must be >= 1");
    if (!(ridge >= 0)) throw InvalidArgument("[edmd] ridge must be >= 0");
    if (sigma_data != "training" && sigma_data != "heldout")
        throw InvalidArgument("[edmd] sigma_data must be 'training' or 'heldout'");
    if (projectors.empty()) throw InvalidArgument("[projection] projectors must not be empty");
    static const std::set<std::string> known{"none", "coordinate", "geometric", "closest_point"};
    for (const std::string& p : projectors) {
        if (!known.count(p))
            throw InvalidArgument("[projection] unknown projector '" + p +
                                  "' (expected none, coordinate, geometric, closest_point)");
        if (p == "closest_point" && metric_file.empty())
            throw InvalidArgument("[projection] closest_point needs metric_file");
    }
    solver.validate();
    if (!(geometric.max_condition > 1)) throw InvalidArgument("[projection] max_condition must be > 1");
    if (!(geometric.tau > 0)) throw InvalidArgument("[projection] tau must be positive");
    if (!(domain_margin >= 0)) throw InvalidArgument("[projection] domain_margin must be >= 0");
    if (evaluation.grid.empty()) throw InvalidArgument("[evaluation] grid must not be empty");
    for (Index n : evaluation.grid)
        if (n < 1) throw InvalidArgument("[evaluation] grid entries must be >= 1");
    for (double h : evaluation.sweep_dts)
        if (!(h > 0)) throw InvalidArgument("[evaluation] sweep_dts must be positive");
    if (evaluation.n_eval < 1) throw InvalidArgument("[evaluation] n_eval must be >= 1");
    if (evaluation.rollout_steps < 1) throw InvalidArgument("[evaluation] rollout_steps must be >= 1");
    if (evaluation.x0_grid < 1) throw InvalidArgument("[evaluation] x0_grid must be >= 1");
    if (evaluation.mean_steps < 1) throw InvalidArgument("[evaluation] mean_steps must be >= 1");
    if (evaluation.series_steps < 1) throw InvalidArgument("[evaluation] series_steps must be >= 1");
    if (evaluation.test_points < 1) throw InvalidArgument("[evaluation] test_points must be >= 1");
    if (threads < 1) throw InvalidArgument("[output] threads must be >= 1");
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base)
{
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw InvalidArgument("config: key '" + section + "' outside a section");
        for (const auto& [key, node] : body) apply(base, section, key, trim(node.data()));
    }
    return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_config(text.str(), std::move(base));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

std::string to_ini(const ExperimentConfig& c)
{
    std::ostringstream out;
    out << "[system]\nname = " << c.system << '\n';
    for (const auto& [k, v] : c.parameters) out << k << " = " << format_shortest(v) << '\n';
    out << "\n[dictionary]\ntype = " << c.dictionary.type << "\ndegree = " << c.dictionary.degree
        << "\nexclude = " << join_strings(c.dictionary.exclude) << '\n';
    out << "\n[edmd]\ndt = " << format_shortest(c.dt) << "\nm = " << c.m << "\nseed = " << c.seed
        << "\nridge = " << format_shortest(c.ridge)
        << "\nscale_observables = " << (c.scale_observables ? "true" : "false")
        << "\nsigma_data = " << c.sigma_data << '\n';
    out << "\n[projection]\nprojectors = " << join_strings(c.projectors)
        << "\nmetric_file = " << c.metric_file << "\nmax_iters = " << c.solver.max_iters
        << "\ngrad_tol = " << format_shortest(c.solver.grad_tol)
        << "\nmultistart_grid = " << c.solver.multistart_grid
        << "\ndamping_init = " << format_shortest(c.solver.damping_init)
        << "\ntie_tol = " << format_shortest(c.solver.tie_tol)
        << "\nmax_condition = " << format_shortest(c.geometric.max_condition)
        << "\ntau = " << format_shortest(c.geometric.tau)
        << "\ndomain_margin = " << format_shortest(c.domain_margin) << '\n';
    std::vector<double> grid(c.evaluation.grid.begin(), c.evaluation.grid.end());
    out << "\n[evaluation]\ngrid = " << join_numbers(grid)
        << "\nsweep_dts = " << join_numbers(c.evaluation.sweep_dts)
        << "\nn_eval = " << c.evaluation.n_eval << "\nx0 = " << join_numbers(c.evaluation.x0)
        << "\nrollout_steps = " << c.evaluation.rollout_steps
        << "\nx0_grid = " << c.evaluation.x0_grid << "\nmean_steps = " << c.evaluation.mean_steps
        << "\nseries_steps = " << c.evaluation.series_steps
        << "\ntest_points = " << c.evaluation.test_points << '\n';
    out << "\n[output]\ndir = " << c.output_dir << "\nthreads = " << c.threads
        << "\nstrict = " << (c.strict ? "true" : "false") << '\n';
    return out.str();
}

std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t hash = 14695981039346656037ull;
    for (unsigned char ch : text) {
        hash ^= ch;
        hash *= 1099511628211ull;
    }
    return hash;
}

DynamicalSystem make_system(const ExperimentConfig& config)
{
    return make_system(config.system, config.parameters);
}

Dictionary make_dictionary(const ExperimentConfig& config, Index state_dim,
                           const std::vector<std::string>& state_names)
{
    if (config.dictionary.type != "monomial")
        throw InvalidArgument("unsupported dictionary type '" + config.dictionary.type + "'");
    return monomial_dictionary(config.dictionary.degree, state_dim, config.dictionary.exclude,
                               state_names);
}

FitOptions fit_options(const ExperimentConfig& config)
{
    FitOptions fo;
    fo.ridge = config.ridge;
    fo.scale_observables = config.scale_observables;
    return fo;
}

SurrogateOptions surrogate_options(const ExperimentConfig& config)
{
    SurrogateOptions so;
    so.solver = config.solver;
    so.geometric = config.geometric;
    so.domain_margin = config.domain_margin;
    so.strict = config.strict;
    return so;
}

SnapshotOptions snapshot_options(const ExperimentConfig& config)
{
    SnapshotOptions so;
    so.flow.domain_margin = config.domain_margin;
    so.strict = config.strict;
    so.threads = config.threads;
    return so;
}

}  // namespace kreproj
