#include "gpmatch/errors.hpp"
#include "gpmatch/io.hpp"

#include <doctest.h>

#include <sstream>

using namespace gpmatch;
using namespace gpmatch::io;

namespace {

CsvTable parse(const std::string& text) {
    std::istringstream in(text);
    return parse_csv(in);
}

std::string error_of(const CsvTable& t, const ColumnRoles& roles) {
    try {
        load_csv(t, roles);
    } catch (const DataError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("rfc 4180 parsing") {
    const CsvTable t = parse("\xEF\xBB\xBFy,\"a\",note\r\n1,0,\"x, \"\"quoted\"\"\"\r\n2,1,\"two\nlines\"\r\n\r\n");
    CHECK(t.header == std::vector<std::string>{"y", "a", "note"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][2] == "x, \"quoted\"");
    CHECK(t.rows[1][2] == "two\nlines");
    CHECK(parse("y,a\n1,0").rows.size() == 1);
    CHECK(parse("y,a\n1,\n").rows[0][1].empty());

    CHECK_THROWS_AS(parse("y,a\n1,0,3\n"), DataError);
    CHECK_THROWS_AS(parse("y,a\n\"1,0\n"), DataError);
    CHECK_THROWS_AS(parse(""), DataError);
    CHECK_THROWS_AS(parse("y,y\n1,2\n"), DataError);
}

TEST_CASE("escaping and number formatting round-trip") {
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    for (double v : {0.1, -3.25e-12, 1.0 / 3.0, 12345678.9}) {
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(std::nan("")) == "NA");
    CHECK(is_missing(" NA "));
    CHECK(is_missing(""));
    CHECK_FALSE(is_missing("0"));
}

TEST_CASE("three well-formed rows") {
    const CsvTable t = parse("y,a,x\n1.5,0,0.1\n2.5,1,0.2\n0.5,1,-0.3\n");
    const LoadedData d = load_csv(t, ColumnRoles{});
    CHECK(d.data.n() == 3);
    CHECK(d.data.p() == 1);
    CHECK(d.data.q() == 1);
    CHECK(d.data.y(1) == 2.5);
    CHECK(d.roles.mean_covariates == std::vector<std::string>{"x"});
    CHECK(d.report.rejected_rows.empty());
}

TEST_CASE("non-binary treatment names the cell") {
    const CsvTable t = parse("y,a,x\n1,0,0.1\n2,2,0.2\n3,1,0.3\n");
    const std::string msg = error_of(t, ColumnRoles{});
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'a'") != std::string::npos);
    CHECK(msg.find("'2'") != std::string::npos);
}

TEST_CASE("missing kernel covariate rejects the row") {
    const CsvTable t = parse("y,a,x,v\n1,0,0.1,1\n2,1,0.2,NA\n3,1,0.3,2\n4,0,0.4,\n5,1,0.5,3\n");
    ColumnRoles roles;
    roles.mean_covariates = {"x"};
    roles.kernel_covariates = {"v"};
    const LoadedData d = load_csv(t, roles);
    CHECK(d.data.n() == 3);
    CHECK(d.report.rows_read == 5);
    CHECK(d.report.rejected_rows == std::vector<Index>{2, 4});
    REQUIRE(d.report.warnings.size() == 1);
    CHECK(d.report.warnings[0].find("2, 4") != std::string::npos);
    CHECK(d.data.v(2, 0) == 3.0);

    // unused columns may be missing
    roles.kernel_covariates = {"x"};
    CHECK(load_csv(t, roles).data.n() == 5);
}

TEST_CASE("role and parse errors") {
    const CsvTable t = parse("y,a,x,b\n1,0,abc,1\n2,1,0.2,1\n");
    ColumnRoles roles;
    roles.mean_covariates = {"x"};
    CHECK(error_of(t, roles).find("row 1, column 'x'") != std::string::npos);
    roles.mean_covariates = {"nope"};
    CHECK(error_of(t, roles).find("'nope' not found") != std::string::npos);
    roles.mean_covariates = {"y"};
    CHECK_FALSE(error_of(t, roles).empty());
    ColumnRoles same;
    same.treatment = "y";
    CHECK_FALSE(error_of(t, same).empty());

    // a column may be a mean and a kernel covariate at once
    const CsvTable ok = parse("y,a,x,pair\n1,0,0.1,7\n2,1,0.2,7\n");
    ColumnRoles both;
    both.mean_covariates = {"x"};
    both.kernel_covariates = {"x"};
    both.block = "pair";
    const LoadedData d = load_csv(ok, both);
    CHECK(d.data.x == d.data.v);
    CHECK(d.blocks == std::vector<long long>{7, 7});

    const CsvTable frac = parse("y,a,pair\n1,0,1.5\n2,1,1\n");
    ColumnRoles br;
    br.block = "pair";
    CHECK(error_of(frac, br).find("block label") != std::string::npos);
}

TEST_CASE("dataset csv writer") {
    Dataset d;
    d.y = VectorXd::LinSpaced(3, 0.0, 1.0);
    d.a = VectorXd::Zero(3);
    d.a(1) = 1.0;
    d.x = MatrixXd::Ones(3, 2);
    d.v = d.x;
    std::ostringstream out;
    write_dataset_csv(out, d);
    CHECK(out.str() == "y,a,x1,x2\n0,0,1,1\n0.5,1,1,1\n1,0,1,1\n");
    std::istringstream back(out.str());
    const LoadedData l = load_csv(parse_csv(back), ColumnRoles{});
    CHECK(l.data.y == d.y);
    CHECK(l.data.x == d.x);
}
