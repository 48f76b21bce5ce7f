#include <cmath>

#include "doctest.h"
#include "gathermos/csv.hpp"
#include "gathermos/errors.hpp"
#include "gathermos/textio.hpp"
#include "support/temp_dir.hpp"

using namespace gathermos;

TEST_CASE("roundtrip formatting survives reparsing exactly") {
    for (double v : {0.1, 1.0 / 3.0, 4.220000000000001, -0.0, 1e-300, 12345.678,
                     2.2250738585072014e-308}) {
        CHECK(parse_real(format_roundtrip(v)) == v);
    }
    CHECK(format_roundtrip(1.0) == "1");
    CHECK(format_roundtrip(0.5) == "0.5");
}

TEST_CASE("fixed formatting") {
    CHECK(format_fixed4(3.5) == "3.5000");
    CHECK(format_fixed4(0.00004) == "0.0000");
    CHECK(format_fixed4(-2.125) == "-2.1250");
    CHECK(format_sig6(0.0549409123) == "0.0549409");
    CHECK(format_sig6(0.0) == "0");
}

TEST_CASE("parse_real is strict about trailing garbage") {
    CHECK(parse_real(" 3.25 ") == 3.25);
    CHECK(parse_real("-1e3") == -1000.0);
    CHECK_THROWS_AS(parse_real("3.25abc"), std::invalid_argument);
    CHECK_THROWS_AS(parse_real(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_real("one"), std::invalid_argument);
}

TEST_CASE("replace_all") {
    CHECK(replace_all("a {x} b {x}", "{x}", "1") == "a 1 b 1");
    CHECK(replace_all("none", "{x}", "1") == "none");
    CHECK(replace_all("{x}{x}", "{x}", "{x}y") == "{x}y{x}y");
}

TEST_CASE("csv parsing") {
    testutil::TempDir dir;
    const auto path = dir.file("t.csv");

    SUBCASE("quotes, escaped quotes, embedded separators") {
        testutil::write_file(path,
                             "a,b,c\n"
                             "1,\"two, three\",\"say \"\"hi\"\"\"\n");
        const csv::Table t = csv::read_file(path);
        CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
        REQUIRE(t.rows.size() == 1);
        CHECK(t.rows[0][1] == "two, three");
        CHECK(t.rows[0][2] == "say \"hi\"");
    }
    SUBCASE("CRLF and blank lines are tolerated") {
        testutil::write_file(path, "a,b\r\n1,2\r\n\r\n\n3,4\n");
        const csv::Table t = csv::read_file(path);
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[1] == std::vector<std::string>{"3", "4"});
    }
    SUBCASE("newline inside a quoted field") {
        testutil::write_file(path, "a,b\n\"line1\nline2\",x\n");
        const csv::Table t = csv::read_file(path);
        CHECK(t.rows[0][0] == "line1\nline2");
    }
    SUBCASE("missing final newline still yields the last row") {
        testutil::write_file(path, "a,b\n1,2");
        const csv::Table t = csv::read_file(path);
        REQUIRE(t.rows.size() == 1);
    }
    SUBCASE("empty file is an error") {
        testutil::write_file(path, "");
        CHECK_THROWS_AS(csv::read_file(path), csv::CsvParseError);
    }
    SUBCASE("missing file is an io error") {
        CHECK_THROWS_AS(csv::read_file(dir.file("nope.csv")), IoFailure);
    }
}

TEST_CASE("csv escaping round trips") {
    // A lone empty unquoted field is indistinguishable from a blank line
    // (which the reader skips), so it is not part of this round trip.
    for (const std::string s : {"plain", "with,comma", "with \"quotes\"", "multi\nline"}) {
        testutil::TempDir dir;
        const auto path = dir.file("rt.csv");
        testutil::write_file(path, "v\n" + csv::escape(s) + "\n");
        const csv::Table t = csv::read_file(path);
        REQUIRE(t.rows.size() == 1);
        CHECK(t.rows[0][0] == s);
    }
    CHECK(csv::join_row({"a", "b,c", "d\"e\""}) == "a,\"b,c\",\"d\"\"e\"\"\"");
}
