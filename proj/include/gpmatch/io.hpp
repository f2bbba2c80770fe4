#pragma once

#include "gpmatch/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace gpmatch::io {

/// Header plus raw string cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Throws DataError when the column is absent.
    std::size_t column(const std::string& name) const;
};

/// RFC-4180: comma separated, optional double quotes with "" escapes, quoted
/// fields may span lines, CRLF or LF endings, optional UTF-8 BOM.
/// Throws DataError on ragged rows or an unterminated quote.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

/// Quotes a cell only when it needs it.
std::string csv_escape(const std::string& cell);
/// Shortest decimal text that round-trips; "NA" for non-finite values.
std::string format_double(double v);

/// Empty, NA, NaN, nan, null and "." are treated as missing.
bool is_missing(const std::string& cell);

struct ColumnRoles {
    std::string outcome = "y";
    std::string treatment = "a";
    /// Empty selects every column that has no other role.
    std::vector<std::string> mean_covariates;
    /// Empty selects the mean covariates.
    std::vector<std::string> kernel_covariates;
    /// Matching-block labels (integers); only used by the matched estimator.
    std::string block;
};

struct LoadReport {
    Index rows_read = 0;
    Index rows_used = 0;
    /// 1-based data-row numbers (header excluded) dropped for missing values.
    std::vector<Index> rejected_rows;
    std::vector<std::string> warnings;
};

struct LoadedData {
    Dataset data;
    ColumnRoles roles;  ///< with defaults filled in
    std::vector<long long> blocks;
    LoadReport report;
};

/// Rows with a missing value in any used column are dropped and listed.
/// Throws DataError for unknown columns, overlapping outcome/treatment roles,
/// unparsable cells (naming row and column), non-binary treatment values and
/// samples that lose every row or an entire treatment arm.
LoadedData load_csv(const CsvTable& table, const ColumnRoles& roles);
LoadedData load_csv(const std::string& path, const ColumnRoles& roles);

/// Writes y, a and the mean covariates as x1..xp.
void write_dataset_csv(std::ostream& out, const Dataset& ds);

}  // namespace gpmatch::io
