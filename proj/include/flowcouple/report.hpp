#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcouple/experiments.hpp"

namespace flowcouple {

inline constexpr double kOverEditThreshold = 1.0;

// One line of a per-K sample metrics file.
struct EvaluationRow {
    std::size_t instance = 0;
    int task_id = 0;
    std::uint64_t instance_seed = 0;
    int nfe = 0;
    bool valid = true;
    std::size_t preserved_count = 0;
    double preserved_rmse = 0.0;
    double edited_rmse = 0.0;
    double context_score = 0.0;
    double over_edit = 0.0;
};

// Header: instance,task_id,instance_seed,nfe,valid,preserved_count,
//         preserved_rmse,edited_rmse,context_score,over_edit_index
std::string evaluation_csv(std::span<const EditEvaluation> evals, std::span<const EditInstance> instances);
std::vector<EvaluationRow> parse_evaluation_csv(std::string_view text);

struct RegimeSummary {
    std::size_t instances = 0;
    double median_preserved_rmse = 0.0; // over rows that have preserved coordinates
    double median_edited_rmse = 0.0;
    double median_over_edit = 0.0;      // same rows as preserved
    std::size_t over_edit_flagged = 0;  // rows with over_edit_index > threshold
};

RegimeSummary summarize_rows(std::span<const EvaluationRow> rows, double threshold = kOverEditThreshold);

// True when both files list the same (instance, task_id, instance_seed) keys in order.
bool same_instances(std::span<const EvaluationRow> a, std::span<const EvaluationRow> b);

} // namespace flowcouple
