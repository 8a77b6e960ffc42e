#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace flowcouple {

// Judge scores on [0, 10]: global (sc, pq) and edited-region (lsc, lpq).
struct ScoreRecord {
    std::string model_name;
    double sc = 0.0;
    double pq = 0.0;
    double lsc = 0.0;
    double lpq = 0.0;
};

// sqrt(lsc * lpq)
double lscore(double lsc, double lpq);

// (sc * pq * lsc * lpq)^(1/4)
double overall_geo4(const ScoreRecord& r);

// sqrt(mean(sc, lsc) * mean(pq, lpq)), the table default.
double overall_mixed(const ScoreRecord& r);

// Round half to even at `decimals` places.
double round_half_even(double value, int decimals = 3);

struct ScoreReportRow {
    std::string model_name;
    double lscore = 0.0;
    double overall_geo4 = 0.0;
    double overall_mixed = 0.0;
    int rank = 0; // 1-based, by overall_mixed descending
};

// Values in the rows are already rounded to 3 decimals. Rows keep input
// order; `rank` carries the ranking.
std::vector<ScoreReportRow> aggregate_scores(const std::vector<ScoreRecord>& records);

// Header "model,sc,pq,lsc,lpq". Throws ParseError with the 1-based line on
// malformed or out-of-range rows.
std::vector<ScoreRecord> parse_score_csv(std::string_view text);

std::vector<ScoreReportRow> aggregate_file(const std::filesystem::path& path);

// "model,lscore,overall_geo4,overall_mixed"
std::string score_report_csv(const std::vector<ScoreReportRow>& rows);

// Aligned table, ordered by rank.
std::string score_report_table(const std::vector<ScoreReportRow>& rows);

} // namespace flowcouple
