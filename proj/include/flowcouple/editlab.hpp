#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcouple/coupling.hpp"

namespace flowcouple {

enum class EditTaskName { brighten_region, invert_region, shift_block, global_scale };

std::string_view to_string(EditTaskName name);
EditTaskName parse_edit_task(std::string_view name);

// region is the half-open index range [region_begin, region_end) of the
// flattened d_s grid.
//   brighten_region  x_tgt[r] = x_src[r] + magnitude
//   invert_region    x_tgt[r] = -x_src[r]
//   shift_block      region contents rolled forward by round(magnitude) slots
//   global_scale     x_tgt = magnitude * x_src (region must be the full range)
struct EditTaskSpec {
    int task_id = 0;
    EditTaskName name = EditTaskName::brighten_region;
    std::size_t region_begin = 0;
    std::size_t region_end = 0;
    double magnitude = 0.0;
};

struct LatentShape {
    std::size_t d_s = 64;
    std::size_t d_v = 16;
};

void validate_task(const EditTaskSpec& task, const LatentShape& shape);

// The four-task suite used by the experiments, scaled to d_s (>= 8).
std::vector<EditTaskSpec> default_task_suite(std::size_t d_s = 64);

// Low-frequency cosine mixture on the sqrt(d_s) x sqrt(d_s) grid (or a 1-D
// strip when d_s is not a perfect square), values in [-1, 1].
DenseArray smooth_field(std::size_t d_s, std::uint64_t seed);

// Unit vector for task_id; distinct ids give orthogonal vectors.
DenseArray text_embedding(int task_id, std::size_t d_t);

// Consecutive groups of 4 averaged, zero-padded to d_v.
DenseArray structure_descriptor(std::span<const double> x_src, std::size_t d_v);

// Applies the task to x_src (no randomness).
DenseArray apply_task(const EditTaskSpec& task, std::span<const double> x_src);

EditInstance gen_instance(const EditTaskSpec& task, std::uint64_t seed, const LatentShape& shape = {});

// `per_task` instances for every task in the suite. Instance seeds are
// derived from (base_seed, label, task, index).
std::vector<EditInstance> make_dataset(std::span<const EditTaskSpec> suite, std::size_t per_task,
                                       std::uint64_t base_seed, std::string_view label,
                                       const LatentShape& shape = {});

struct EditMetrics {
    double preserved_rmse = 0.0; // mask-false coordinates (0 when there are none)
    double edited_rmse = 0.0;    // mask-true coordinates (0 when there are none)
    double context_score = 1.0;  // exp(-preserved_rmse)
};

EditMetrics edit_metrics(std::span<const double> pred_latent, const EditInstance& inst);

// preserved_rmse / (edited_rmse + 1e-9)
double over_edit_index(std::span<const double> pred_latent, const EditInstance& inst);

// CSV columns: task_id,seed,coordinate_index,x_src,x_tgt,mask
std::string dataset_csv(std::span<const EditInstance> dataset);

// x_text and x_vit are rebuilt from the suite entry with the same task_id.
std::vector<EditInstance> parse_dataset_csv(std::string_view text, std::span<const EditTaskSpec> suite,
                                            const LatentShape& shape);

} // namespace flowcouple
