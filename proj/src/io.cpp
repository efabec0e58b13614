#include "nbmq/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

namespace nbmq {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_fields(const std::string& line, const std::string& file, std::size_t lineno) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false, was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && trim(cur).empty()) {
            quoted = was_quoted = true;
            cur.clear();
        } else if (c == ',') {
            out.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur += c;
        }
    }
    if (quoted) throw ValidationError(file, lineno, "", "unterminated quoted field");
    out.push_back(was_quoted ? cur : trim(cur));
    return out;
}

std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> map;
    for (std::size_t i = 0; i < ids.size(); ++i) map.emplace(ids[i], i);
    return map;
}

}  // namespace

ValidationError::ValidationError(const std::string& file, std::size_t line, const std::string& field,
                                 const std::string& what)
    : std::invalid_argument(file + ":" + std::to_string(line) + (field.empty() ? "" : ": field '" + field + "'") +
                            ": " + what),
      file_(file),
      line_(line),
      field_(field) {}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError(file, 1, name, "required column is missing");
    return static_cast<std::size_t>(it - header.begin());
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path, 0, "", "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CsvTable parse_csv(const std::string& text, const std::string& file) {
    CsvTable t;
    t.file = file;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line, file, lineno);
        if (!have_header) {
            std::set<std::string> seen;
            for (const auto& h : fields) {
                if (h.empty()) throw ValidationError(file, lineno, "", "empty column name in header");
                if (!seen.insert(h).second) throw ValidationError(file, lineno, h, "duplicate column name");
            }
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw ValidationError(file, lineno, "", "expected " + std::to_string(t.header.size()) + " fields, found " +
                                                        std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.lines.push_back(lineno);
    }
    if (!have_header) throw ValidationError(file, 1, "", "file has no header row");
    return t;
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_text(path), path); }

double parse_number(const std::string& text, const std::string& file, std::size_t line, const std::string& field) {
    const std::string s = trim(text);
    if (s.empty()) throw ValidationError(file, line, field, "missing value");
    const std::string l = lower(s);
    if (l == "inf" || l == "+inf" || l == "infinity") return std::numeric_limits<double>::infinity();
    if (l == "-inf" || l == "-infinity") return -std::numeric_limits<double>::infinity();
    if (l == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const char* begin = s.data() + (s.front() == '+' ? 1 : 0);
    const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError(file, line, field, "'" + s + "' is not a number");
    return v;
}

AreaDataset parse_dataset(const CsvTable& table, const std::vector<std::string>& covariates) {
    const std::size_t c_id = table.column("area_id"), c_y = table.column("y"), c_t = table.column("t");
    std::vector<std::size_t> cov_cols;
    std::vector<std::string> cov_names;
    if (covariates.empty()) {
        for (std::size_t j = 0; j < table.header.size(); ++j)
            if (j != c_id && j != c_y && j != c_t) {
                cov_cols.push_back(j);
                cov_names.push_back(table.header[j]);
            }
    } else {
        for (const auto& name : covariates) {
            cov_cols.push_back(table.column(name));
            cov_names.push_back(name);
        }
    }
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    if (n == 0) throw ValidationError(table.file, 1, "", "dataset has no rows");
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(cov_cols.size() + 1));
    Eigen::VectorXd y(n), t(n);
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const std::size_t line = table.lines[static_cast<std::size_t>(i)];
        const std::string& id = row[c_id];
        if (id.empty()) throw ValidationError(table.file, line, "area_id", "missing area id");
        if (!seen.insert(id).second) throw ValidationError(table.file, line, "area_id", "duplicate area id '" + id + "'");
        ids.push_back(id);
        const double yi = parse_number(row[c_y], table.file, line, "y");
        if (!(yi >= 0.0) || !std::isfinite(yi) || yi != std::floor(yi))
            throw ValidationError(table.file, line, "y", "count must be a nonnegative integer");
        const double ti = parse_number(row[c_t], table.file, line, "t");
        if (!(ti > 0.0) || !std::isfinite(ti)) throw ValidationError(table.file, line, "t", "offset must be positive");
        y[i] = yi;
        t[i] = ti;
        X(i, 0) = 1.0;
        for (std::size_t k = 0; k < cov_cols.size(); ++k) {
            const double v = parse_number(row[cov_cols[k]], table.file, line, cov_names[k]);
            if (!std::isfinite(v)) throw ValidationError(table.file, line, cov_names[k], "covariate must be finite");
            X(i, static_cast<Eigen::Index>(k + 1)) = v;
        }
    }
    try {
        return AreaDataset{std::move(ids), std::move(cov_names), RegressionDesign(std::move(X), std::move(t), std::move(y))};
    } catch (const std::invalid_argument& e) {
        throw ValidationError(table.file, 1, "", e.what());
    }
}

AreaDataset load_dataset(const std::string& path, const std::vector<std::string>& covariates) {
    return parse_dataset(read_csv(path), covariates);
}

SpatialStructure parse_adjacency(const std::string& text, const std::string& file, const std::vector<std::string>& ids,
                                 std::vector<std::string>* warnings) {
    const auto index = index_ids(ids);
    std::vector<std::set<std::size_t>> links(ids.size());
    std::vector<bool> listed(ids.size(), false);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto lookup = [&](const std::string& id, const std::string& field) {
        const auto it = index.find(id);
        if (it == index.end()) throw ValidationError(file, lineno, field, "unknown area id '" + id + "'");
        return it->second;
    };
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        const auto colon = s.find(':');
        if (colon == std::string::npos) throw ValidationError(file, lineno, "", "expected 'area_id: neighbours'");
        const std::string id = trim(s.substr(0, colon));
        const std::size_t a = lookup(id, "area_id");
        if (listed[a]) throw ValidationError(file, lineno, "area_id", "area '" + id + "' listed twice");
        listed[a] = true;
        std::istringstream rest(s.substr(colon + 1));
        std::string nb;
        while (rest >> nb) {
            const std::size_t b = lookup(nb, "neighbour");
            if (b == a) throw ValidationError(file, lineno, "neighbour", "area '" + id + "' lists itself");
            links[a].insert(b);
        }
    }
    for (std::size_t a = 0; a < links.size(); ++a)
        for (auto b : links[a])
            if (!links[b].count(a)) {
                links[b].insert(a);
                if (warnings)
                    warnings->push_back(file + ": link " + ids[a] + " -> " + ids[b] +
                                        " has no reverse entry; added " + ids[b] + " -> " + ids[a]);
            }
    std::vector<std::vector<std::size_t>> nb(ids.size());
    for (std::size_t a = 0; a < links.size(); ++a) nb[a].assign(links[a].begin(), links[a].end());
    return SpatialStructure::from_adjacency(std::move(nb));
}

SpatialStructure load_adjacency(const std::string& path, const std::vector<std::string>& ids,
                                std::vector<std::string>* warnings) {
    return parse_adjacency(read_text(path), path, ids, warnings);
}

std::vector<Point> parse_centroids(const CsvTable& table, const std::vector<std::string>& ids) {
    const std::size_t c_id = table.column("area_id"), c_x = table.column("x_coord"), c_y = table.column("y_coord");
    const auto index = index_ids(ids);
    std::vector<Point> pts(ids.size());
    std::vector<bool> seen(ids.size(), false);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        const auto it = index.find(row[c_id]);
        if (it == index.end()) throw ValidationError(table.file, line, "area_id", "unknown area id '" + row[c_id] + "'");
        if (seen[it->second]) throw ValidationError(table.file, line, "area_id", "duplicate area id '" + row[c_id] + "'");
        seen[it->second] = true;
        const double x = parse_number(row[c_x], table.file, line, "x_coord");
        const double y = parse_number(row[c_y], table.file, line, "y_coord");
        if (!std::isfinite(x)) throw ValidationError(table.file, line, "x_coord", "coordinate must be finite");
        if (!std::isfinite(y)) throw ValidationError(table.file, line, "y_coord", "coordinate must be finite");
        pts[it->second] = {x, y};
    }
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (!seen[i]) throw ValidationError(table.file, 0, "area_id", "no centroid for area '" + ids[i] + "'");
    return pts;
}

std::vector<Point> load_centroids(const std::string& path, const std::vector<std::string>& ids) {
    return parse_centroids(read_csv(path), ids);
}

Eigen::VectorXd load_external_estimates(const std::string& path, const std::vector<std::string>& ids) {
    const CsvTable table = read_csv(path);
    const std::size_t c_id = table.column("area_id"), c_e = table.column("estimate");
    const auto index = index_ids(ids);
    Eigen::VectorXd est = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(ids.size()), std::nan(""));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto it = index.find(row[c_id]);
        if (it == index.end())
            throw ValidationError(table.file, table.lines[r], "area_id", "unknown area id '" + row[c_id] + "'");
        const auto k = static_cast<Eigen::Index>(it->second);
        if (!std::isnan(est[k]))
            throw ValidationError(table.file, table.lines[r], "area_id", "duplicate area id '" + row[c_id] + "'");
        est[k] = parse_number(row[c_e], table.file, table.lines[r], "estimate");
    }
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (std::isnan(est[static_cast<Eigen::Index>(i)]))
            throw ValidationError(table.file, 0, "area_id", "no estimate for area '" + ids[i] + "'");
    return est;
}

std::map<std::string, ConfigValue> parse_key_values(const std::string& text, const std::string& file) {
    std::map<std::string, ConfigValue> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string s = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ValidationError(file, lineno, "", "expected 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        if (key.empty()) throw ValidationError(file, lineno, "", "empty key");
        if (!out.emplace(key, ConfigValue{trim(s.substr(eq + 1)), lineno}).second)
            throw ValidationError(file, lineno, key, "key given twice");
    }
    return out;
}

std::map<std::string, ConfigValue> load_key_values(const std::string& path) {
    return parse_key_values(read_text(path), path);
}

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (value == 0.0) return "0";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

std::string to_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    auto field = [](const std::string& f) {
        if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
        std::string q = "\"";
        for (char c : f) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    };
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out += ',';
            out += field(r[j]);
        }
        out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << content;
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("cannot write " + path);
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace nbmq
