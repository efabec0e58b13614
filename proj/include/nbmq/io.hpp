#pragma once

#include "nbmq/dataset.hpp"
#include "nbmq/spatial.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbmq {

/// Malformed input; the message names the file, line and field.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(const std::string& file, std::size_t line, const std::string& field, const std::string& what);

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string file_;
    std::size_t line_;
    std::string field_;
};

/// Header row plus data rows; line numbers are 1-based file lines.
struct CsvTable {
    std::string file;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;

    /// Column index of `name`, or a ValidationError on the header line.
    std::size_t column(const std::string& name) const;
};

/// Comma-separated values with optional double-quoted fields; blank lines are skipped.
CsvTable parse_csv(const std::string& text, const std::string& file);
CsvTable read_csv(const std::string& path);

std::string read_text(const std::string& path);

/// Area CSV: area_id, y, t and covariate columns; an intercept column is prepended to the design.
/// `covariates` selects columns by name; empty means every other column.
AreaDataset parse_dataset(const CsvTable& table, const std::vector<std::string>& covariates = {});
AreaDataset load_dataset(const std::string& path, const std::vector<std::string>& covariates = {});

/// Lines "area_id: id1 id2 ..."; asymmetric links are symmetrized and reported in `warnings`.
SpatialStructure parse_adjacency(const std::string& text, const std::string& file, const std::vector<std::string>& ids,
                                 std::vector<std::string>* warnings = nullptr);
SpatialStructure load_adjacency(const std::string& path, const std::vector<std::string>& ids,
                                std::vector<std::string>* warnings = nullptr);

/// CSV area_id, x_coord, y_coord with one row per area.
std::vector<Point> parse_centroids(const CsvTable& table, const std::vector<std::string>& ids);
std::vector<Point> load_centroids(const std::string& path, const std::vector<std::string>& ids);

/// CSV area_id, estimate with one row per area (externally produced estimates).
Eigen::VectorXd load_external_estimates(const std::string& path, const std::vector<std::string>& ids);

struct ConfigValue {
    std::string value;
    std::size_t line = 0;
};

/// "key = value" lines; '#' starts a comment; duplicate keys are rejected.
std::map<std::string, ConfigValue> parse_key_values(const std::string& text, const std::string& file);
std::map<std::string, ConfigValue> load_key_values(const std::string& path);

/// Shortest round-trip-safe text at 12 significant digits; "inf", "-inf" and "nan" for non-finite values.
std::string format_number(double value);
/// Parses a real, "inf" or "nan"; throws ValidationError naming the location on failure.
double parse_number(const std::string& text, const std::string& file, std::size_t line, const std::string& field);

/// CSV writer that quotes fields containing separators.
std::string to_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

/// Writes through a temporary file and renames it, so a failure never leaves partial output.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace nbmq
