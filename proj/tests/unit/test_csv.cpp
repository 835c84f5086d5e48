#include <doctest.h>

#include "panelsvd/csv.hpp"
#include "panelsvd/errors.hpp"

using namespace panelsvd;

TEST_CASE("csv_escape quotes only when needed") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_escape("two\nlines") == "\"two\nlines\"");
  CHECK(csv_escape("") == "");
}

TEST_CASE("parse then serialize is the identity") {
  const std::string text =
      "#schema=test/1\n"
      "n,error,value\n"
      "100,,0.5\n"
      "200,\"n=200, trial=3: \"\"bad\"\"\nthing\",\n";
  const auto table = parse_csv(text);
  CHECK(table.schema == "test/1");
  REQUIRE(table.rows.size() == 2);
  CHECK(table.text(1, "error") == "n=200, trial=3: \"bad\"\nthing");
  CHECK(table.number(0, "value") == 0.5);
  CHECK(to_csv(table) == text);
}

TEST_CASE("malformed csv is rejected") {
  CHECK_THROWS_AS((void)parse_csv("a,b\n1,2\n"), ValidationError);
  CHECK_THROWS_AS((void)parse_csv("#schema=x\na,b\n1\n"), ValidationError);
  CHECK_THROWS_AS((void)parse_csv("#schema=x\na,b\n1,2"), ValidationError);
  CHECK_THROWS_AS((void)parse_csv("#schema=x\na,b\n\"1,2\n"), ValidationError);
  CHECK_THROWS_AS((void)parse_csv("#schema=x\na,b\n1\"x\",2\n"), ValidationError);
  const auto t = parse_csv("#schema=x\na,b\n1,2\n");
  CHECK_THROWS_AS((void)t.column("c"), ValidationError);
  CHECK_THROWS_AS((void)t.number(5, "a"), ValidationError);
}
