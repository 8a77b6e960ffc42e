#include "flowcouple/scorebench.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "flowcouple/error.hpp"
#include "flowcouple/io.hpp"

namespace flowcouple {

namespace {

void check_score(double v, const char* who)
{
    if (!(v >= 0.0)) {
        throw ContractViolation(std::string(who) + ": score " + format_exact(v) + " is negative or NaN");
    }
}

bool in_range(double v)
{
    return v >= 0.0 && v <= 10.0;
}

} // namespace

double lscore(double lsc, double lpq)
{
    check_score(lsc, "lscore");
    check_score(lpq, "lscore");
    return std::sqrt(lsc * lpq);
}

double overall_geo4(const ScoreRecord& r)
{
    for (double v : {r.sc, r.pq, r.lsc, r.lpq}) {
        check_score(v, "overall_geo4");
    }
    return std::sqrt(std::sqrt(r.sc * r.pq * r.lsc * r.lpq));
}

double overall_mixed(const ScoreRecord& r)
{
    for (double v : {r.sc, r.pq, r.lsc, r.lpq}) {
        check_score(v, "overall_mixed");
    }
    return std::sqrt(((r.sc + r.lsc) / 2.0) * ((r.pq + r.lpq) / 2.0));
}

double round_half_even(double value, int decimals)
{
    const double scale = std::pow(10.0, decimals);
    const int saved = std::fegetround();
    std::fesetround(FE_TONEAREST);
    const double rounded = std::nearbyint(value * scale) / scale;
    std::fesetround(saved);
    return rounded;
}

std::vector<ScoreReportRow> aggregate_scores(const std::vector<ScoreRecord>& records)
{
    std::vector<ScoreReportRow> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        rows.push_back({r.model_name, round_half_even(lscore(r.lsc, r.lpq)), round_half_even(overall_geo4(r)),
                        round_half_even(overall_mixed(r)), 0});
    }
    // Ranking depends only on (value, name), never on input order.
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rows[a].overall_mixed != rows[b].overall_mixed) {
            return rows[a].overall_mixed > rows[b].overall_mixed;
        }
        return rows[a].model_name < rows[b].model_name;
    });
    for (std::size_t k = 0; k < order.size(); ++k) {
        rows[order[k]].rank = static_cast<int>(k + 1);
    }
    return rows;
}

std::vector<ScoreRecord> parse_score_csv(std::string_view text)
{
    std::vector<ScoreRecord> records;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line[0] == '#') {
            continue;
        }
        const auto f = split_csv_line(line);
        if (!header_seen) {
            if (f != std::vector<std::string>{"model", "sc", "pq", "lsc", "lpq"}) {
                throw ParseError("line " + std::to_string(line_no) + ": expected header model,sc,pq,lsc,lpq", line_no);
            }
            header_seen = true;
            continue;
        }
        ScoreRecord r;
        if (f.size() != 5 || f[0].empty() || !parse_double(f[1], r.sc) || !parse_double(f[2], r.pq) ||
            !parse_double(f[3], r.lsc) || !parse_double(f[4], r.lpq)) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed row", line_no);
        }
        if (!in_range(r.sc) || !in_range(r.pq) || !in_range(r.lsc) || !in_range(r.lpq)) {
            throw ParseError("line " + std::to_string(line_no) + ": score outside [0, 10]", line_no);
        }
        r.model_name = f[0];
        records.push_back(std::move(r));
    }
    if (!header_seen) {
        throw ParseError("line 1: missing header model,sc,pq,lsc,lpq", 1);
    }
    return records;
}

std::vector<ScoreReportRow> aggregate_file(const std::filesystem::path& path)
{
    return aggregate_scores(parse_score_csv(read_text_file(path)));
}

std::string score_report_csv(const std::vector<ScoreReportRow>& rows)
{
    std::string out = "model,lscore,overall_geo4,overall_mixed\n";
    for (const auto& r : rows) {
        out += r.model_name + ',' + format_fixed(r.lscore, 3) + ',' + format_fixed(r.overall_geo4, 3) + ',' +
               format_fixed(r.overall_mixed, 3) + '\n';
    }
    return out;
}

std::string score_report_table(const std::vector<ScoreReportRow>& rows)
{
    std::size_t name_width = 5;
    for (const auto& r : rows) {
        name_width = std::max(name_width, r.model_name.size());
    }
    std::vector<const ScoreReportRow*> ranked;
    for (const auto& r : rows) {
        ranked.push_back(&r);
    }
    std::sort(ranked.begin(), ranked.end(), [](auto* a, auto* b) { return a->rank < b->rank; });

    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(w, s.size()), ' ');
        return s;
    };
    std::string out = pad("rank", 6) + pad("model", name_width + 2) + pad("lscore", 10) + pad("overall_geo4", 14) +
                      "overall_mixed\n";
    for (const auto* r : ranked) {
        out += pad(std::to_string(r->rank), 6) + pad(r->model_name, name_width + 2) +
               pad(format_fixed(r->lscore, 3), 10) + pad(format_fixed(r->overall_geo4, 3), 14) +
               format_fixed(r->overall_mixed, 3) + '\n';
    }
    return out;
}

} // namespace flowcouple
