#include "gpmatch/io.hpp"

#include "gpmatch/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>

namespace gpmatch::io {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::string cell_ref(Index row, const std::string& column) {
    return "row " + std::to_string(row) + ", column '" + column + "'";
}

double parse_number(const std::string& raw, Index row, const std::string& column) {
    const std::string s = trim(raw);
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw DataError(cell_ref(row, column) + ": cannot parse '" + raw + "' as a number");
    }
    return v;
}

long long parse_label(const std::string& raw, Index row, const std::string& column) {
    const std::string s = trim(raw);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw DataError(cell_ref(row, column) + ": block label '" + raw + "' is not an integer");
    }
    return v;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw DataError("column '" + name + "' not found in header");
    }
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::istream& in) {
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        text.erase(0, 3);
    }

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    Index line = 1;
    Index quote_line = 0;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // blank lines are skipped
        if (!(record.size() == 1 && record[0].empty())) {
            records.push_back(std::move(record));
        }
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') {
                    ++line;
                }
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !trim(field).empty()) {
                    throw DataError("line " + std::to_string(line) + ": quote inside an unquoted field");
                }
                field.clear();
                quoted = true;
                field_started = true;
                quote_line = line;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') {
                    break;
                }
                [[fallthrough]];
            case '\n':
                end_record();
                ++line;
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (quoted) {
        throw DataError("unterminated quoted field starting on line " + std::to_string(quote_line));
    }
    if (field_started || !field.empty() || !record.empty()) {
        end_record();
    }
    if (records.empty()) {
        throw DataError("empty CSV input: a header row is required");
    }

    CsvTable t;
    t.header = std::move(records.front());
    for (auto& h : t.header) {
        h = trim(h);
    }
    std::set<std::string> seen;
    for (const auto& h : t.header) {
        if (h.empty()) {
            throw DataError("header contains an empty column name");
        }
        if (!seen.insert(h).second) {
            throw DataError("duplicate column '" + h + "' in header");
        }
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size()) {
            throw DataError("row " + std::to_string(r) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(records[r].size()));
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open data file '" + path + "'");
    }
    return parse_csv(in);
}

std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\r\n") == std::string::npos) {
        return cell;
    }
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_double(double v) {
    if (!std::isfinite(v)) {
        return "NA";
    }
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

bool is_missing(const std::string& cell) {
    const std::string s = trim(cell);
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null" || s == ".";
}

LoadedData load_csv(const CsvTable& table, const ColumnRoles& roles_in) {
    LoadedData out;
    ColumnRoles roles = roles_in;
    if (roles.outcome.empty() || roles.treatment.empty()) {
        throw DataError("outcome and treatment columns must be named");
    }
    if (roles.outcome == roles.treatment) {
        throw DataError("column '" + roles.outcome + "' cannot be both outcome and treatment");
    }
    const std::size_t yc = table.column(roles.outcome);
    const std::size_t ac = table.column(roles.treatment);
    auto check_not_role = [&](const std::string& name) {
        if (name == roles.outcome || name == roles.treatment) {
            throw DataError("column '" + name + "' cannot be a covariate and the outcome or treatment");
        }
    };
    if (roles.mean_covariates.empty()) {
        for (const auto& h : table.header) {
            if (h != roles.outcome && h != roles.treatment && h != roles.block) {
                roles.mean_covariates.push_back(h);
            }
        }
    }
    if (roles.kernel_covariates.empty()) {
        roles.kernel_covariates = roles.mean_covariates;
    }
    std::vector<std::size_t> xc, vc;
    for (const auto& name : roles.mean_covariates) {
        check_not_role(name);
        xc.push_back(table.column(name));
    }
    for (const auto& name : roles.kernel_covariates) {
        check_not_role(name);
        vc.push_back(table.column(name));
    }
    std::optional<std::size_t> bc;
    if (!roles.block.empty()) {
        check_not_role(roles.block);
        bc = table.column(roles.block);
    }

    std::vector<std::size_t> used{yc, ac};
    used.insert(used.end(), xc.begin(), xc.end());
    used.insert(used.end(), vc.begin(), vc.end());
    if (bc) {
        used.push_back(*bc);
    }

    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const bool missing =
            std::any_of(used.begin(), used.end(), [&](std::size_t c) { return is_missing(row[c]); });
        if (missing) {
            out.report.rejected_rows.push_back(static_cast<Index>(r + 1));
        } else {
            keep.push_back(r);
        }
    }
    out.report.rows_read = static_cast<Index>(table.rows.size());
    out.report.rows_used = static_cast<Index>(keep.size());
    if (!out.report.rejected_rows.empty()) {
        std::ostringstream msg;
        msg << out.report.rejected_rows.size() << " row(s) rejected for missing values: ";
        for (std::size_t i = 0; i < out.report.rejected_rows.size(); ++i) {
            msg << (i ? ", " : "") << out.report.rejected_rows[i];
        }
        out.report.warnings.push_back(msg.str());
    }
    if (keep.empty()) {
        throw DataError("no complete rows in the data");
    }

    const Index n = static_cast<Index>(keep.size());
    Dataset& d = out.data;
    d.y.resize(n);
    d.a.resize(n);
    d.x.resize(n, static_cast<Index>(xc.size()));
    d.v.resize(n, static_cast<Index>(vc.size()));
    for (Index i = 0; i < n; ++i) {
        const std::size_t r = keep[static_cast<std::size_t>(i)];
        const auto& row = table.rows[r];
        const Index rowno = static_cast<Index>(r + 1);
        d.y(i) = parse_number(row[yc], rowno, roles.outcome);
        const double a = parse_number(row[ac], rowno, roles.treatment);
        if (a != 0.0 && a != 1.0) {
            throw DataError(cell_ref(rowno, roles.treatment) + ": treatment must be 0 or 1, got '" + trim(row[ac]) +
                            "'");
        }
        d.a(i) = a;
        for (std::size_t k = 0; k < xc.size(); ++k) {
            d.x(i, static_cast<Index>(k)) = parse_number(row[xc[k]], rowno, roles.mean_covariates[k]);
        }
        for (std::size_t k = 0; k < vc.size(); ++k) {
            d.v(i, static_cast<Index>(k)) = parse_number(row[vc[k]], rowno, roles.kernel_covariates[k]);
        }
        if (bc) {
            out.blocks.push_back(parse_label(row[*bc], rowno, roles.block));
        }
    }
    d.validate();
    out.roles = std::move(roles);
    return out;
}

LoadedData load_csv(const std::string& path, const ColumnRoles& roles) {
    return load_csv(read_csv(path), roles);
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
    out << "y,a";
    for (Index k = 0; k < ds.p(); ++k) {
        out << ",x" << (k + 1);
    }
    out << '\n';
    for (Index i = 0; i < ds.n(); ++i) {
        out << format_double(ds.y(i)) << ',' << format_double(ds.a(i));
        for (Index k = 0; k < ds.p(); ++k) {
            out << ',' << format_double(ds.x(i, k));
        }
        out << '\n';
    }
}

}  // namespace gpmatch::io
