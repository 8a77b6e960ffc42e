#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "flowcouple/error.hpp"
#include "flowcouple/scorebench.hpp"

using namespace flowcouple;

#ifndef FLOWCOUPLE_DATA
#define FLOWCOUPLE_DATA "data"
#endif

namespace {

const ScoreReportRow& row(const std::vector<ScoreReportRow>& rows, const std::string& name)
{
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.model_name == name; });
    REQUIRE(it != rows.end());
    return *it;
}

} // namespace

TEST_CASE("formulas on simple inputs")
{
    CHECK(lscore(4, 9) == 6.0);
    CHECK(overall_geo4({"m", 1, 1, 1, 1}) == 1.0);
    CHECK(overall_geo4({"m", 2, 8, 4, 4}) == doctest::Approx(4.0));
    CHECK(overall_mixed({"m", 2, 4, 6, 12}) == std::sqrt(4.0 * 8.0));
    CHECK(overall_mixed({"m", 0, 5, 0, 5}) == 0.0);
    CHECK_THROWS_AS(lscore(-1, 2), ContractViolation);
}

TEST_CASE("round half to even")
{
    CHECK(round_half_even(0.0625, 3) == 0.062);
    CHECK(round_half_even(0.0635, 3) == doctest::Approx(0.064));
    CHECK(round_half_even(2.5, 0) == 2.0);
    CHECK(round_half_even(3.5, 0) == 4.0);
    CHECK(round_half_even(5.7354, 3) == 5.735);
}

TEST_CASE("table fixture reproduces printed overall scores")
{
    const auto rows = aggregate_file(FLOWCOUPLE_DATA "/table1.csv");
    REQUIRE(rows.size() == 4);
    CHECK(std::abs(row(rows, "Step1X-Edit").overall_mixed - 5.735) <= 1e-3);
    CHECK(std::abs(row(rows, "FLUX.1-Kontext").overall_mixed - 5.994) <= 1e-3);
    CHECK(std::abs(row(rows, "BAGEL").overall_mixed - 6.058) <= 1e-3);
    CHECK(std::abs(row(rows, "LGCC").overall_mixed - 6.090) <= 1e-3);
    CHECK(row(rows, "LGCC").rank == 1);
    CHECK(row(rows, "Step1X-Edit").rank == 4);
    CHECK(std::abs(row(rows, "Step1X-Edit").overall_geo4 - 5.729) <= 1e-3);

    const auto g = aggregate_file(FLOWCOUPLE_DATA "/gedit.csv");
    CHECK(std::abs(row(g, "Step1X-Edit").overall_mixed - 6.529) <= 1e-3);
    CHECK(std::abs(row(g, "FLUX.1-Kontext").overall_mixed - 6.443) <= 1e-3);
    CHECK(std::abs(row(g, "BAGEL").overall_mixed - 6.639) <= 1e-3);
    CHECK(std::abs(row(g, "LGCC").overall_mixed - 6.679) <= 1e-3);
}

TEST_CASE("Step1X local score: formula value differs from the printed 5.160")
{
    const auto rows = aggregate_file(FLOWCOUPLE_DATA "/table1.csv");
    CHECK(row(rows, "Step1X-Edit").lscore == 5.954);
    CHECK(std::abs(row(rows, "Step1X-Edit").lscore - 5.160) > 0.5);
    // the other three agree with sqrt(lsc*lpq)
    CHECK(std::abs(row(rows, "LGCC").lscore - std::sqrt(6.359 * 5.886)) < 5e-4);
}

TEST_CASE("geo4 never exceeds mixed (AM-GM)")
{
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 10000; ++i) {
        const ScoreRecord r{"m", u(gen), u(gen), u(gen), u(gen)};
        CHECK(overall_geo4(r) <= overall_mixed(r) + 1e-12);
    }
}

TEST_CASE("ranking ignores input order")
{
    std::vector<ScoreRecord> recs{{"a", 5, 5, 5, 5}, {"b", 6, 6, 6, 6}, {"c", 4, 4, 4, 4}, {"d", 6, 6, 6, 6}};
    const auto base = aggregate_scores(recs);
    std::mt19937_64 gen(3);
    for (int k = 0; k < 20; ++k) {
        std::shuffle(recs.begin(), recs.end(), gen);
        const auto rows = aggregate_scores(recs);
        for (const auto& r : base) {
            CHECK(row(rows, r.model_name).rank == r.rank);
        }
    }
    CHECK(row(base, "b").rank == 1); // tie broken by name
    CHECK(row(base, "d").rank == 2);
}

TEST_CASE("parse errors carry the line number")
{
    const std::string head = "# comment\nmodel,sc,pq,lsc,lpq\n";
    try {
        parse_score_csv(head + "x,1,2,3,4\ny,1,2,oops,4\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position() == 4);
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
    try {
        parse_score_csv(head + "x,1,2,3,10.5\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position() == 3);
    }
    CHECK_THROWS_AS(parse_score_csv(head + "x,1,2,3\n"), ParseError);
    CHECK_THROWS_AS(parse_score_csv("name,a,b,c,d\n"), ParseError);
    CHECK_THROWS_AS(parse_score_csv(""), ParseError);
}

TEST_CASE("header only gives an empty report")
{
    const auto rows = aggregate_scores(parse_score_csv("model,sc,pq,lsc,lpq\n"));
    CHECK(rows.empty());
    CHECK(score_report_csv(rows) == "model,lscore,overall_geo4,overall_mixed\n");
}

TEST_CASE("report formats")
{
    const auto rows = aggregate_scores({{"m", 4, 9, 4, 9}});
    CHECK(score_report_csv(rows) == "model,lscore,overall_geo4,overall_mixed\nm,6.000,6.000,6.000\n");
    CHECK(score_report_table(rows).find("1     m") != std::string::npos);
}
