#pragma once

#include "kreproj/evaluation.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kreproj {

/// Parsed CSV file. Lines "# key=value" before the header land in `meta`.
struct CsvTable {
    std::map<std::string, std::string> meta;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws Error if absent.
    std::size_t column(const std::string& name) const;
    double number(std::size_t row, std::size_t col) const;
};

/// Reads a CSV with a header line. Throws Error on I/O or shape problems.
CsvTable read_csv(const std::filesystem::path& path);

/// Parses a double written by format_shortest (also accepts inf, -inf, nan).
double parse_double(const std::string& text);

// Plain numeric matrices, no header.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& M);
Matrix read_matrix_csv(const std::filesystem::path& path);

/// Columns x1..xd, y1..yd; meta system, dt, seed, dropped.
void write_snapshots(const std::filesystem::path& path, const SnapshotSet& snapshots);
SnapshotSet read_snapshots(const std::filesystem::path& path);

/// K as a headerless CSV at `path`; dictionary and fit statistics in `path` + ".meta".
void write_model(const std::filesystem::path& path, const KoopmanApproximation& model,
                 const std::string& system_name = {});
KoopmanApproximation read_model(const std::filesystem::path& path);

void write_metric(const std::filesystem::path& path, const Metric& metric);
/// Sets `normalized` when the pseudodeterminant is one to 1e-6.
Metric read_metric(const std::filesystem::path& path);

/// Columns t, x1..xd.
void write_rollout(const std::filesystem::path& path, const Rollout& rollout,
                   const std::string& descriptor = {});
Rollout read_rollout(const std::filesystem::path& path);

/// Long form: one column per state name, then error and converged (0/1).
void write_grid(const std::filesystem::path& path, const ErrorGrid& grid,
                const std::vector<std::string>& state_names);
ErrorGrid read_grid(const std::filesystem::path& path);

/// Columns t, error, flagged (0/1).
void write_series(const std::filesystem::path& path, const ErrorSeries& series,
                  const std::string& descriptor = {});
ErrorSeries read_series(const std::filesystem::path& path);

/// Long form: dt, projector, median, q25, q75. Missing entries are nan.
void write_sweep(const std::filesystem::path& path, const SweepResult& sweep,
                 const std::string& descriptor = {});
SweepResult read_sweep(const std::filesystem::path& path);

/// Columns t, then one mean-error column per series; diverged counts in meta.
void write_mean_error(const std::filesystem::path& path, const std::vector<MeanErrorSeries>& series);
std::vector<MeanErrorSeries> read_mean_error(const std::filesystem::path& path);

}  // namespace kreproj
