#include <doctest.h>

#include <set>

#include "matlift/csv.hpp"
#include "matlift/errors.hpp"
#include "matlift/rng.hpp"
#include "matlift/text.hpp"
#include "test_support.hpp"

using namespace matlift;

TEST_CASE("rng streams are deterministic under seed") {
    RngStream a(42), b(42), c(43);
    bool diverged = false;
    for (int i = 0; i < 100; ++i) {
        const uint64_t va = a.next_u64();
        CHECK(va == b.next_u64());
        if (va != c.next_u64()) diverged = true;
    }
    CHECK(diverged);
}

TEST_CASE("uniform_u64 stays in bounds and covers the range") {
    RngStream rng(1);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const uint64_t v = rng.uniform_u64(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("shuffle permutes and sample_indices is sorted and distinct") {
    RngStream rng(9);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    auto shuffled = v;
    rng.shuffle(shuffled);
    CHECK(std::multiset<int>(v.begin(), v.end()) ==
          std::multiset<int>(shuffled.begin(), shuffled.end()));

    const auto idx = rng.sample_indices(100, 10);
    CHECK(idx.size() == 10);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(std::set<size_t>(idx.begin(), idx.end()).size() == 10);
    for (size_t i : idx) CHECK(i < 100);
}

TEST_CASE("csv round-trips quoting of commas, quotes and newlines") {
    testutil::TempDir dir;
    const auto path = dir / "t.csv";
    std::vector<std::vector<std::string>> rows = {
        {"Cr(OH)1,4-benzenedicarboxylate", "high"},
        {"say \"hi\"", "lo\nw"},
        {"plain", ""},
    };
    write_csv(path, {"input", "target"}, rows);
    const CsvTable table = read_csv(path);
    REQUIRE(table.rows.size() == 3);
    CHECK(table.rows[0][0] == "Cr(OH)1,4-benzenedicarboxylate");
    CHECK(table.rows[1][0] == "say \"hi\"");
    CHECK(table.rows[1][1] == "lo\nw");
    CHECK(table.rows[2][1] == "");
}

TEST_CASE("csv errors carry positions") {
    CHECK_THROWS_AS(parse_csv(""), DataError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,2,3\n"), DataError);             // ragged row
    CHECK_THROWS_AS(parse_csv("a,b\n\"unterminated,2\n"), DataError);  // open quote
    CsvTable t = parse_csv("a,b\n1,2\n");
    CHECK(t.column("b") == 1);
    CHECK_THROWS_AS(t.column("missing"), DataError);
}

TEST_CASE("decimal parsing accepts signs and scientific notation, rejects junk") {
    CHECK(parse_decimal("1.370").has_value());
    CHECK(*parse_decimal("-1.726468633") == doctest::Approx(-1.726468633));
    CHECK(*parse_decimal("2e3") == doctest::Approx(2000.0));
    CHECK(*parse_decimal("-4.5E-2") == doctest::Approx(-0.045));
    CHECK(*parse_decimal(".5") == doctest::Approx(0.5));
    CHECK(*parse_decimal("+7") == doctest::Approx(7.0));
    CHECK_FALSE(parse_decimal("").has_value());
    CHECK_FALSE(parse_decimal("abc").has_value());
    CHECK_FALSE(parse_decimal("1.2.3").has_value());
    CHECK_FALSE(parse_decimal("1.2 ").has_value());
    CHECK_FALSE(parse_decimal("inf").has_value());
    CHECK_FALSE(parse_decimal("nan").has_value());
    CHECK_FALSE(parse_decimal("0x10").has_value());
}

TEST_CASE("find_first_number takes the first maximal token") {
    auto span = find_first_number("the answer is 1.37 eV (maybe 2.4)");
    REQUIRE(span.has_value());
    CHECK(span->value == doctest::Approx(1.37));
    CHECK(find_first_number("between 1.2 and 3.4")->value == doctest::Approx(1.2));
    CHECK(find_first_number("-49%")->value == doctest::Approx(-49.0));
    CHECK(find_first_number("1.2e-3 rest")->value == doctest::Approx(0.0012));
    CHECK_FALSE(find_first_number("no number here").has_value());
    // trailing dot is not part of the number
    auto trailing = find_first_number("value 1.37.");
    REQUIRE(trailing.has_value());
    CHECK(trailing->len == 4);
}
