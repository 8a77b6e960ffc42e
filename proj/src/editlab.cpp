#include "flowcouple/editlab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <utility>

#include "flowcouple/error.hpp"
#include "flowcouple/io.hpp"
#include "flowcouple/rng.hpp"

namespace flowcouple {

namespace {

constexpr std::uint64_t kTextBasisSeed = 0x7e47ba5e;
constexpr int kFieldComponents = 4;

} // namespace

std::string_view to_string(EditTaskName name)
{
    switch (name) {
    case EditTaskName::brighten_region:
        return "brighten_region";
    case EditTaskName::invert_region:
        return "invert_region";
    case EditTaskName::shift_block:
        return "shift_block";
    case EditTaskName::global_scale:
        return "global_scale";
    }
    return "unknown";
}

EditTaskName parse_edit_task(std::string_view name)
{
    for (auto n : {EditTaskName::brighten_region, EditTaskName::invert_region, EditTaskName::shift_block,
                   EditTaskName::global_scale}) {
        if (to_string(n) == name) {
            return n;
        }
    }
    throw ContractViolation("unknown edit task '" + std::string(name) + "'");
}

void validate_task(const EditTaskSpec& task, const LatentShape& shape)
{
    if (task.task_id < 0) {
        throw ContractViolation("edit task: task_id must be >= 0");
    }
    if (task.region_begin >= task.region_end || task.region_end > shape.d_s) {
        throw ContractViolation("edit task " + std::to_string(task.task_id) + ": region [" +
                                std::to_string(task.region_begin) + ", " + std::to_string(task.region_end) +
                                ") is empty or outside [0, " + std::to_string(shape.d_s) + ")");
    }
    if (task.name == EditTaskName::global_scale && (task.region_begin != 0 || task.region_end != shape.d_s)) {
        throw ContractViolation("edit task " + std::to_string(task.task_id) + ": global_scale must cover the full range");
    }
    if (!std::isfinite(task.magnitude)) {
        throw ContractViolation("edit task " + std::to_string(task.task_id) + ": magnitude must be finite");
    }
    if (static_cast<std::size_t>(task.task_id) >= shape.d_s) {
        throw ContractViolation("edit task: task_id " + std::to_string(task.task_id) +
                                " has no orthogonal text embedding in d_t = " + std::to_string(shape.d_s));
    }
    if (shape.d_v < (shape.d_s + 3) / 4) {
        throw ContractViolation("edit task: d_v = " + std::to_string(shape.d_v) + " cannot hold the " +
                                std::to_string((shape.d_s + 3) / 4) + " down-averaged source values");
    }
}

std::vector<EditTaskSpec> default_task_suite(std::size_t d_s)
{
    if (d_s < 8) {
        throw ContractViolation("default_task_suite: d_s must be >= 8");
    }
    const std::size_t e = d_s / 8;
    return {
        {0, EditTaskName::brighten_region, e, 3 * e, 0.5},
        {1, EditTaskName::invert_region, 4 * e, 6 * e, 1.0},
        {2, EditTaskName::shift_block, 2 * e, 5 * e, static_cast<double>(e)},
        {3, EditTaskName::global_scale, 0, d_s, 1.5},
    };
}

DenseArray smooth_field(std::size_t d_s, std::uint64_t seed)
{
    std::size_t width = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d_s))));
    std::size_t height = width;
    if (width * width != d_s) {
        width = d_s;
        height = 1;
    }
    Rng rng(seed, "smooth_field");
    struct Component {
        double amp, kx, ky, phase;
    };
    std::vector<Component> comps;
    double amp_sum = 0.0;
    for (int m = 0; m < kFieldComponents; ++m) {
        Component c{};
        c.amp = rng.uniform(0.2, 1.0);
        do {
            c.kx = static_cast<double>(rng.index(3));
            c.ky = height > 1 ? static_cast<double>(rng.index(3)) : 0.0;
        } while (c.kx == 0.0 && c.ky == 0.0);
        c.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        amp_sum += c.amp;
        comps.push_back(c);
    }
    DenseArray field({d_s});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            double v = 0.0;
            for (const auto& c : comps) {
                v += c.amp * std::cos(2.0 * std::numbers::pi *
                                          (c.kx * static_cast<double>(x) / static_cast<double>(width) +
                                           c.ky * static_cast<double>(y) / static_cast<double>(height)) +
                                      c.phase);
            }
            field[y * width + x] = v / amp_sum;
        }
    }
    return field;
}

DenseArray text_embedding(int task_id, std::size_t d_t)
{
    if (task_id < 0 || static_cast<std::size_t>(task_id) >= d_t) {
        throw ContractViolation("text_embedding: task_id " + std::to_string(task_id) + " out of range for d_t = " +
                                std::to_string(d_t));
    }
    // Gram-Schmidt over a fixed seeded Gaussian sequence.
    Rng rng(kTextBasisSeed, "text_basis", d_t);
    std::vector<std::vector<double>> basis;
    for (int k = 0; k <= task_id; ++k) {
        std::vector<double> v(d_t);
        rng.fill_normal(v);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                double dot = 0.0;
                for (std::size_t i = 0; i < d_t; ++i) {
                    dot += v[i] * b[i];
                }
                for (std::size_t i = 0; i < d_t; ++i) {
                    v[i] -= dot * b[i];
                }
            }
        }
        double norm = 0.0;
        for (double x : v) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : v) {
            x /= norm;
        }
        basis.push_back(std::move(v));
    }
    return DenseArray::vector(std::move(basis.back()));
}

DenseArray structure_descriptor(std::span<const double> x_src, std::size_t d_v)
{
    const std::size_t groups = (x_src.size() + 3) / 4;
    if (d_v < groups) {
        throw ContractViolation("structure_descriptor: d_v = " + std::to_string(d_v) + " < " +
                                std::to_string(groups) + " groups");
    }
    DenseArray out({d_v});
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t begin = 4 * g;
        const std::size_t end = std::min(begin + 4, x_src.size());
        double acc = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            acc += x_src[i];
        }
        out[g] = acc / static_cast<double>(end - begin);
    }
    return out;
}

DenseArray apply_task(const EditTaskSpec& task, std::span<const double> x_src)
{
    DenseArray out = DenseArray::vector(x_src);
    const std::size_t b = task.region_begin;
    const std::size_t len = task.region_end - task.region_begin;
    switch (task.name) {
    case EditTaskName::brighten_region:
        for (std::size_t i = b; i < task.region_end; ++i) {
            out[i] = x_src[i] + task.magnitude;
        }
        break;
    case EditTaskName::invert_region:
        for (std::size_t i = b; i < task.region_end; ++i) {
            out[i] = -x_src[i];
        }
        break;
    case EditTaskName::shift_block: {
        const long long raw = std::llround(task.magnitude);
        const long long L = static_cast<long long>(len);
        const std::size_t shift = static_cast<std::size_t>(((raw % L) + L) % L);
        for (std::size_t k = 0; k < len; ++k) {
            out[b + (k + shift) % len] = x_src[b + k];
        }
        break;
    }
    case EditTaskName::global_scale:
        for (std::size_t i = 0; i < x_src.size(); ++i) {
            out[i] = task.magnitude * x_src[i];
        }
        break;
    }
    return out;
}

namespace {

EditInstance assemble(const EditTaskSpec& task, std::uint64_t seed, const LatentShape& shape, DenseArray x_src,
                      DenseArray x_tgt)
{
    EditInstance inst;
    inst.task_id = task.task_id;
    inst.seed = seed;
    inst.x_vit = structure_descriptor(x_src.values(), shape.d_v);
    inst.x_text = text_embedding(task.task_id, shape.d_s);
    if (task.magnitude < 0.0) {
        for (double& v : inst.x_text) {
            v = -v;
        }
    }
    inst.edit_mask.assign(shape.d_s, false);
    for (std::size_t i = task.region_begin; i < task.region_end; ++i) {
        inst.edit_mask[i] = true;
    }
    inst.x_src = std::move(x_src);
    inst.x_tgt = std::move(x_tgt);
    return inst;
}

} // namespace

EditInstance gen_instance(const EditTaskSpec& task, std::uint64_t seed, const LatentShape& shape)
{
    validate_task(task, shape);
    DenseArray x_src = smooth_field(shape.d_s, seed);
    DenseArray x_tgt = apply_task(task, x_src.values());
    return assemble(task, seed, shape, std::move(x_src), std::move(x_tgt));
}

std::vector<EditInstance> make_dataset(std::span<const EditTaskSpec> suite, std::size_t per_task,
                                       std::uint64_t base_seed, std::string_view label, const LatentShape& shape)
{
    std::vector<EditInstance> out;
    out.reserve(suite.size() * per_task);
    for (const auto& task : suite) {
        for (std::size_t k = 0; k < per_task; ++k) {
            out.push_back(gen_instance(task, derive_seed(base_seed, label, static_cast<std::uint64_t>(task.task_id), k),
                                       shape));
        }
    }
    return out;
}

EditMetrics edit_metrics(std::span<const double> pred_latent, const EditInstance& inst)
{
    const std::size_t d = inst.latent_dim();
    if (pred_latent.size() != d) {
        throw ContractViolation("edit_metrics: prediction has length " + std::to_string(pred_latent.size()) +
                                ", expected " + std::to_string(d));
    }
    double sq_pres = 0.0, sq_edit = 0.0;
    std::size_t n_pres = 0, n_edit = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const double r = pred_latent[i] - inst.x_tgt[i];
        if (inst.edit_mask[i]) {
            sq_edit += r * r;
            ++n_edit;
        } else {
            sq_pres += r * r;
            ++n_pres;
        }
    }
    EditMetrics m;
    m.preserved_rmse = n_pres ? std::sqrt(sq_pres / static_cast<double>(n_pres)) : 0.0;
    m.edited_rmse = n_edit ? std::sqrt(sq_edit / static_cast<double>(n_edit)) : 0.0;
    m.context_score = std::exp(-m.preserved_rmse);
    return m;
}

double over_edit_index(std::span<const double> pred_latent, const EditInstance& inst)
{
    const EditMetrics m = edit_metrics(pred_latent, inst);
    return m.preserved_rmse / (m.edited_rmse + 1e-9);
}

std::string dataset_csv(std::span<const EditInstance> dataset)
{
    std::string out = "task_id,seed,coordinate_index,x_src,x_tgt,mask\n";
    for (const auto& inst : dataset) {
        for (std::size_t i = 0; i < inst.latent_dim(); ++i) {
            out += std::to_string(inst.task_id) + ',' + std::to_string(inst.seed) + ',' + std::to_string(i) + ',' +
                   format_exact(inst.x_src[i]) + ',' + format_exact(inst.x_tgt[i]) + ',' +
                   (inst.edit_mask[i] ? "1" : "0") + '\n';
        }
    }
    return out;
}

std::vector<EditInstance> parse_dataset_csv(std::string_view text, std::span<const EditTaskSpec> suite,
                                            const LatentShape& shape)
{
    std::vector<EditInstance> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;

    struct Partial {
        int task_id;
        std::uint64_t seed;
        std::vector<double> src, tgt;
        std::vector<bool> mask;
        std::size_t first_line;
    };
    std::vector<Partial> partials;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        if (!header_seen) {
            if (split_csv_line(line) != std::vector<std::string>{"task_id", "seed", "coordinate_index", "x_src",
                                                                 "x_tgt", "mask"}) {
                throw ParseError("dataset csv line " + std::to_string(line_no) + ": unexpected header", line_no);
            }
            header_seen = true;
            continue;
        }
        const auto f = split_csv_line(line);
        long long task_id = 0, index = 0, mask = 0;
        std::uint64_t seed = 0;
        double src = 0.0, tgt = 0.0;
        if (f.size() != 6 || !parse_int(f[0], task_id) || !parse_uint(f[1], seed) || !parse_int(f[2], index) ||
            !parse_double(f[3], src) || !parse_double(f[4], tgt) || !parse_int(f[5], mask) ||
            (mask != 0 && mask != 1) || index < 0) {
            throw ParseError("dataset csv line " + std::to_string(line_no) + ": malformed row", line_no);
        }
        if (index == 0) {
            partials.push_back({static_cast<int>(task_id), seed, {}, {}, {}, line_no});
        }
        if (partials.empty() || partials.back().task_id != task_id ||
            partials.back().src.size() != static_cast<std::size_t>(index)) {
            throw ParseError("dataset csv line " + std::to_string(line_no) + ": coordinate out of sequence", line_no);
        }
        partials.back().src.push_back(src);
        partials.back().tgt.push_back(tgt);
        partials.back().mask.push_back(mask == 1);
    }

    for (auto& p : partials) {
        if (p.src.size() != shape.d_s) {
            throw ParseError("dataset csv line " + std::to_string(p.first_line) + ": instance has " +
                                 std::to_string(p.src.size()) + " coordinates, expected " + std::to_string(shape.d_s),
                             p.first_line);
        }
        const auto it = std::find_if(suite.begin(), suite.end(), [&](const EditTaskSpec& t) { return t.task_id == p.task_id; });
        if (it == suite.end()) {
            throw ParseError("dataset csv line " + std::to_string(p.first_line) + ": task_id " +
                                 std::to_string(p.task_id) + " not in task suite",
                             p.first_line);
        }
        EditInstance inst = assemble(*it, p.seed, shape, DenseArray::vector(std::move(p.src)),
                                     DenseArray::vector(std::move(p.tgt)));
        inst.edit_mask = std::move(p.mask);
        out.push_back(std::move(inst));
    }
    return out;
}

} // namespace flowcouple
