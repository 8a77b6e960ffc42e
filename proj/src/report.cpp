#include "flowcouple/report.hpp"

#include <algorithm>
#include <sstream>

#include "flowcouple/error.hpp"
#include "flowcouple/io.hpp"

namespace flowcouple {

namespace {

const char* kHeader =
    "instance,task_id,instance_seed,nfe,valid,preserved_count,preserved_rmse,edited_rmse,context_score,over_edit_index";

} // namespace

std::string evaluation_csv(std::span<const EditEvaluation> evals, std::span<const EditInstance> instances)
{
    std::string out = std::string(kHeader) + '\n';
    for (const auto& e : evals) {
        const auto& mask = instances[e.instance].edit_mask;
        const auto preserved = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), false));
        out += std::to_string(e.instance) + ',' + std::to_string(e.task_id) + ',' + std::to_string(e.seed) + ',' +
               std::to_string(e.nfe) + ',' + (e.valid ? "1" : "0") + ',' + std::to_string(preserved) + ',' +
               format_exact(e.metrics.preserved_rmse) + ',' + format_exact(e.metrics.edited_rmse) + ',' +
               format_exact(e.metrics.context_score) + ',' + format_exact(e.over_edit) + '\n';
    }
    return out;
}

std::vector<EvaluationRow> parse_evaluation_csv(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    std::vector<EvaluationRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line_no == 1) {
            if (line != kHeader) {
                throw ParseError("line 1: unexpected metrics header", 1);
            }
            continue;
        }
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        EvaluationRow r;
        long long instance = 0, task = 0, nfe = 0, valid = 0, preserved = 0;
        std::uint64_t seed = 0;
        const bool ok = f.size() == 10 && parse_int(f[0], instance) && instance >= 0 && parse_int(f[1], task) &&
                        parse_uint(f[2], seed) && parse_int(f[3], nfe) && parse_int(f[4], valid) && (valid == 0 || valid == 1) &&
                        parse_int(f[5], preserved) && preserved >= 0 && parse_double(f[6], r.preserved_rmse) &&
                        parse_double(f[7], r.edited_rmse) && parse_double(f[8], r.context_score) &&
                        parse_double(f[9], r.over_edit);
        if (!ok) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed metrics row", line_no);
        }
        r.instance = static_cast<std::size_t>(instance);
        r.task_id = static_cast<int>(task);
        r.instance_seed = seed;
        r.nfe = static_cast<int>(nfe);
        r.valid = valid == 1;
        r.preserved_count = static_cast<std::size_t>(preserved);
        rows.push_back(r);
    }
    if (line_no == 0) {
        throw ParseError("line 1: empty metrics file", 1);
    }
    return rows;
}

RegimeSummary summarize_rows(std::span<const EvaluationRow> rows, double threshold)
{
    RegimeSummary s;
    s.instances = rows.size();
    std::vector<double> preserved, edited, over;
    for (const auto& r : rows) {
        edited.push_back(r.edited_rmse);
        if (r.preserved_count > 0) {
            preserved.push_back(r.preserved_rmse);
            over.push_back(r.over_edit);
        }
        s.over_edit_flagged += r.over_edit > threshold;
    }
    s.median_preserved_rmse = preserved.empty() ? 0.0 : median(preserved);
    s.median_edited_rmse = edited.empty() ? 0.0 : median(edited);
    s.median_over_edit = over.empty() ? 0.0 : median(over);
    return s;
}

bool same_instances(std::span<const EvaluationRow> a, std::span<const EvaluationRow> b)
{
    return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](const auto& x, const auto& y) {
        return x.instance == y.instance && x.task_id == y.task_id && x.instance_seed == y.instance_seed;
    });
}

} // namespace flowcouple
