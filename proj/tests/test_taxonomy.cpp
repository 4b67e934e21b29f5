#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "hiercls/rng.hpp"
#include "hiercls/taxonomy.hpp"

using namespace hiercls;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kSampleDir = std::string(HIERCLS_DATA_DIR) + "/taxonomies/";

// fine 0..4 under families 0..2 under orders 0..1; fine 4 -> family 2 -> order 1
const char* kToy =
    "levels=3\n"
    "o0,f0,s0\n"
    "o0,f0,s1\n"
    "o0,f1,s2\n"
    "o1,f2,s3\n"
    "o1,f2,s4\n";

} // namespace

TEST_CASE("parse assigns indices by first appearance") {
    const Taxonomy tax = parse_taxonomy(kToy);
    REQUIRE(tax.levels() == 3);
    CHECK(tax.level_sizes() == std::vector<std::size_t>{2, 3, 5});
    CHECK(tax.level_names[0] == std::vector<std::string>{"o0", "o1"});
    CHECK(tax.parent[1] == std::vector<int>{0, 0, 1});
    CHECK(tax.parent[2] == std::vector<int>{0, 0, 1, 2, 2});
    CHECK_FALSE(validate(tax).has_value());
}

TEST_CASE("parse handles comments, blank lines and padding") {
    const Taxonomy tax = parse_taxonomy(
        "# a comment\n\nlevels=2\n  A , B \n# another\nA,C\r\n");
    CHECK(tax.level_sizes() == std::vector<std::size_t>{1, 2});
    CHECK(tax.level_names[0][0] == "A");
    CHECK(tax.level_names[1] == std::vector<std::string>{"B", "C"});
}

TEST_CASE("names are case-sensitive") {
    const Taxonomy tax = parse_taxonomy("levels=2\nA,x\na,y\n");
    CHECK(tax.level_size(0) == 2);
}

TEST_CASE("minimal single-chain taxonomy") {
    const Taxonomy tax = parse_taxonomy("levels=3\nA,B,C\n");
    CHECK(tax.level_sizes() == std::vector<std::size_t>{1, 1, 1});
    CHECK(tax.parent[1] == std::vector<int>{0});
    CHECK(tax.parent[2] == std::vector<int>{0});
}

TEST_CASE("parse errors") {
    CHECK_THROWS_WITH(parse_taxonomy(""),
                      Catch::Matchers::ContainsSubstring("empty input"));
    CHECK_THROWS_WITH(parse_taxonomy("levels=2\n"),
                      Catch::Matchers::ContainsSubstring("no category lines"));
    CHECK_THROWS_WITH(parse_taxonomy("A,B\n"),
                      Catch::Matchers::ContainsSubstring("levels=K"));
    CHECK_THROWS_WITH(parse_taxonomy("levels=2\nA,B,C\n"),
                      Catch::Matchers::ContainsSubstring("expected 2"));
    // duplicate finest category
    CHECK_THROWS_WITH(parse_taxonomy("levels=3\nA,B,C\nA,B,C\n"),
                      Catch::Matchers::ContainsSubstring("duplicate finest"));
    // same fine name under two different chains
    CHECK_THROWS_WITH(parse_taxonomy("levels=3\nA,B,C\nA,D,C\n"),
                      Catch::Matchers::ContainsSubstring("inconsistent parent"));
    // intermediate name under two different parents
    CHECK_THROWS_WITH(parse_taxonomy("levels=3\nA,B,C\nX,B,D\n"),
                      Catch::Matchers::ContainsSubstring("inconsistent parent"));
    CHECK_THROWS_WITH(parse_taxonomy("levels=0\nA\n"),
                      Catch::Matchers::ContainsSubstring(">= 1"));
}

TEST_CASE("validate names the first violation") {
    Taxonomy tax = parse_taxonomy(kToy);
    CHECK_FALSE(validate(tax).has_value());

    SECTION("a family under two orders") {
        // two entries named f0 with different parents
        tax.level_names[1][1] = "f0";
        tax.parent[1] = {0, 1, 1};
        auto v = validate(tax);
        REQUIRE(v.has_value());
        CHECK_THAT(*v, Catch::Matchers::ContainsSubstring("multiple parents"));
    }
    SECTION("an order with no families") {
        tax.parent[1] = {0, 0, 0};
        auto v = validate(tax);
        REQUIRE(v.has_value());
        CHECK_THAT(*v, Catch::Matchers::ContainsSubstring("empty internal node"));
    }
    SECTION("parent index out of range") {
        tax.parent[1] = {0, 0, 7};
        auto v = validate(tax);
        REQUIRE(v.has_value());
        CHECK_THAT(*v, Catch::Matchers::ContainsSubstring("out of range"));
    }
    SECTION("duplicate name, same parent") {
        tax.level_names[2][1] = "s0";
        auto v = validate(tax);
        REQUIRE(v.has_value());
        CHECK_THAT(*v, Catch::Matchers::ContainsSubstring("duplicate"));
    }
}

TEST_CASE("ancestor walks parent maps") {
    const Taxonomy tax = parse_taxonomy(kToy);
    CHECK(ancestor(tax, 2, 4, 2) == 4); // identity
    CHECK(ancestor(tax, 2, 4, 1) == 2);
    CHECK(ancestor(tax, 2, 4, 0) == 1);
    CHECK(ancestor(tax, 1, 1, 0) == 0);
    CHECK_THROWS_AS(ancestor(tax, 3, 0, 0), error);
    CHECK_THROWS_AS(ancestor(tax, 1, 0, 2), error);
    CHECK_THROWS_AS(ancestor(tax, 2, 9, 0), error);
}

TEST_CASE("ancestor is transitive") {
    const Taxonomy tax =
        parse_taxonomy(read_file(kSampleDir + "birds_13_38_200.txt"));
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = rng.index_below(tax.levels());
        const std::size_t m = rng.index_below(k + 1);
        const std::size_t j = rng.index_below(m + 1);
        const int idx = static_cast<int>(rng.index_below(tax.level_size(k)));
        CHECK(ancestor(tax, k, idx, j) ==
              ancestor(tax, m, ancestor(tax, k, idx, m), j));
    }
}

TEST_CASE("label_chain") {
    const Taxonomy tax = parse_taxonomy(kToy);
    CHECK(label_chain(tax, 4).indices == std::vector<int>{1, 2, 4});
    CHECK_THROWS_AS(label_chain(tax, 5), error);

    const Taxonomy single = parse_taxonomy("levels=1\nA\nB\nC\n");
    CHECK(label_chain(single, 2).indices == std::vector<int>{2});
}

TEST_CASE("shipped sample files parse, validate and round-trip") {
    for (const char* name :
         {"birds_13_38_200.txt", "aircraft_30_70_100.txt", "cars_9_196.txt"}) {
        INFO(name);
        const std::string text = read_file(kSampleDir + name);
        const Taxonomy tax = parse_taxonomy(text);
        CHECK_FALSE(validate(tax).has_value());
        CHECK(to_text(tax) == text); // byte-identical round trip

        // semantic round trip
        const Taxonomy again = parse_taxonomy(to_text(tax));
        CHECK(again.level_names == tax.level_names);
        CHECK(again.parent == tax.parent);

        // every chain satisfies the chain invariant (exhaustive)
        for (std::size_t fine = 0; fine < tax.level_size(tax.levels() - 1);
             ++fine)
            CHECK(chain_consistent(tax,
                                   label_chain(tax, static_cast<int>(fine))));
    }
}

TEST_CASE("sample shapes match their filenames") {
    CHECK(parse_taxonomy(read_file(kSampleDir + "birds_13_38_200.txt"))
              .level_sizes() == std::vector<std::size_t>{13, 38, 200});
    CHECK(parse_taxonomy(read_file(kSampleDir + "aircraft_30_70_100.txt"))
              .level_sizes() == std::vector<std::size_t>{30, 70, 100});
    CHECK(parse_taxonomy(read_file(kSampleDir + "cars_9_196.txt"))
              .level_sizes() == std::vector<std::size_t>{9, 196});
}

TEST_CASE("species ancestors match the raw file lines") {
    // independent oracle: re-read the file text directly instead of going
    // through the parent maps
    const std::string text = read_file(kSampleDir + "birds_13_38_200.txt");
    const Taxonomy tax = parse_taxonomy(text);

    std::istringstream in(text);
    std::string line;
    std::getline(in, line); // levels=3
    while (std::getline(in, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        const std::string order = line.substr(0, c1);
        const std::string species = line.substr(c2 + 1);
        const int fine = tax.index_of(2, species);
        REQUIRE(fine >= 0);
        const int top = ancestor(tax, 2, fine, 0);
        CHECK(tax.level_names[0][static_cast<std::size_t>(top)] == order);
    }
}
