#include "vitdp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "vitdp/errors.hpp"
#include "vitdp/optimizer.hpp"
#include "vitdp/serialize.hpp"

namespace vitdp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Fingerprints ride the metrics AllReduce as three 22-bit chunks, each
// exactly representable as a float.
constexpr uint64_t kFpMask = (1ull << 22) - 1;
constexpr int kGatherSlots = 8;  // compute, comm, total, loss, accuracy, fp x3

struct Plan {
    Dataset local;            // owned shard (sharded assignment only)
    const Dataset* data = nullptr;  // full dataset (interleave) or &local
    int64_t steps = 0;        // optimizer steps per epoch
    bool interleave = false;
};

Plan make_plan(const TrainConfig& cfg, const Dataset& data, int rank, int world) {
    Plan plan;
    plan.interleave = cfg.assignment == DataAssignment::interleave;
    const int64_t micro = cfg.micro_batch_per_gpu;
    const int64_t accum = cfg.gradient_accumulation_steps;
    if (plan.interleave) {
        plan.data = &data;
        const int64_t global_batch = micro * accum * world;
        plan.steps = data.size() / global_batch;
    } else {
        ShardSpec spec;
        spec.mode = cfg.scaling_mode;
        spec.rank = rank;
        spec.world_size = world;
        spec.weak_fraction = cfg.weak_fraction;
        spec.seed = cfg.seed;
        plan.local = shard(data, spec);
        plan.data = &plan.local;
        plan.steps = (plan.local.size() / micro) / accum;
    }
    if (plan.steps < 1)
        throw ConfigError("dataset of " + std::to_string(data.size()) +
                          " samples yields 0 optimizer steps at micro_batch " +
                          std::to_string(micro) + " x accum " + std::to_string(accum) +
                          " x world " + std::to_string(world));
    return plan;
}

// Index list this rank consumes in epoch `epoch`, in consumption order.
// Sharded: a reshuffle of the rank's own shard. Interleave: the rank's
// micro-slices of each global accumulation window, so the union across ranks
// of one optimizer step is the same sample window at any world size.
std::vector<int64_t> epoch_indices(const Plan& plan, const TrainConfig& cfg, int rank, int world,
                                   int64_t epoch) {
    const int64_t micro = cfg.micro_batch_per_gpu;
    const int64_t accum = cfg.gradient_accumulation_steps;
    if (!plan.interleave) {
        const uint64_t rank_seed =
            cfg.seed + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(rank + 1);
        return epoch_order(plan.local.size(), rank_seed, epoch);
    }
    const std::vector<int64_t> order = epoch_order(plan.data->size(), cfg.seed, epoch);
    std::vector<int64_t> mine;
    mine.reserve(static_cast<size_t>(plan.steps * accum * micro));
    const int64_t block = micro * world;
    for (int64_t step = 0; step < plan.steps; ++step) {
        const int64_t window = step * accum * block;
        for (int64_t k = 0; k < accum; ++k) {
            const int64_t start = window + k * block + rank * micro;
            for (int64_t i = 0; i < micro; ++i)
                mine.push_back(order[static_cast<size_t>(start + i)]);
        }
    }
    return mine;
}

void add_into(ParamSet<float>& acc, const ParamSet<float>& g) {
    for (size_t t = 0; t < acc.count(); ++t) {
        float* a = acc.entries[t].second.ptr();
        const float* b = g.entries[t].second.ptr();
        const int64_t n = acc.entries[t].second.numel();
        for (int64_t i = 0; i < n; ++i) a[i] += b[i];
    }
}

void fill_zero(ParamSet<float>& p) {
    for (auto& [name, t] : p.entries) std::fill(t.data.begin(), t.data.end(), 0.0f);
}

}  // namespace

TrainResult run_training(ProcessGroup& pg, const TrainConfig& cfg, const Dataset& data,
                         const TrainOptions& opts) {
    const int rank = pg.rank();
    const int world = pg.world_size();
    validate_config(cfg, world);
    if (opts.slowdown_multiplier < 1.0)
        throw ConfigError("slowdown multiplier must be >= 1, got " +
                          std::to_string(opts.slowdown_multiplier));
    if (data.image_size() != cfg.model.image_size)
        throw ConfigError("dataset images are " + std::to_string(data.image_size()) +
                          "x" + std::to_string(data.image_size()) + ", model expects " +
                          std::to_string(cfg.model.image_size));
    if (data.class_count != cfg.model.num_classes)
        throw ConfigError("dataset has " + std::to_string(data.class_count) +
                          " classes, model head has " + std::to_string(cfg.model.num_classes));

    const int64_t micro = cfg.micro_batch_per_gpu;
    const int64_t accum = cfg.gradient_accumulation_steps;
    const Plan plan = make_plan(cfg, data, rank, world);

    ParamSet<float> params = init_params<float>(cfg.model, cfg.seed);
    {
        std::vector<float> flat = params.flatten();
        pg.broadcast(flat.data(), static_cast<int64_t>(flat.size()), 0);
        params.unflatten(flat);
    }
    OptimizerState<float> opt = make_optimizer(cfg, params);
    ParamSet<float> window = zeros_like(params);
    const int64_t nparams = params.total_elems();
    std::vector<float> comm_buf(static_cast<size_t>(nparams) + 2, 0.0f);

    TrainResult result;
    result.step_losses.reserve(static_cast<size_t>(plan.steps * cfg.epochs));

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<int64_t> indices = epoch_indices(plan, cfg, rank, world, epoch);
        const double comm0 = pg.comm_seconds();
        const uint64_t calls0 = pg.allreduce_calls();
        const auto t0 = Clock::now();
        double compute_s = 0.0;
        double loss_sum = 0.0;
        double correct_sum = 0.0;

        for (int64_t step = 0; step < plan.steps; ++step) {
            fill_zero(window);
            double window_loss = 0.0;
            int64_t window_correct = 0;
            for (int64_t k = 0; k < accum; ++k) {
                const int64_t* idx = indices.data() + (step * accum + k) * micro;
                const Batch batch = take(*plan.data, idx, micro);
                const auto c0 = Clock::now();
                LossResult<float> r = loss_and_grads(cfg.model, params, batch.images, batch.labels);
                add_into(window, r.grads);
                const double micro_s = seconds_since(c0);
                compute_s += micro_s;
                window_loss += r.loss;
                window_correct += std::lround(r.accuracy * static_cast<double>(micro));
                if (opts.slowdown_multiplier > 1.0) {
                    const auto s0 = Clock::now();
                    std::this_thread::sleep_for(std::chrono::duration<double>(
                        (opts.slowdown_multiplier - 1.0) * micro_s));
                    compute_s += seconds_since(s0);
                }
            }

            // Window mean: each micro gradient is already a per-sample mean,
            // so dividing the sum by accum gives the mean over the window.
            const float inv_accum = 1.0f / static_cast<float>(accum);
            size_t off = 0;
            for (const auto& [name, t] : window.entries) {
                for (int64_t i = 0; i < t.numel(); ++i)
                    comm_buf[off++] = t.data[static_cast<size_t>(i)] * inv_accum;
            }
            comm_buf[static_cast<size_t>(nparams)] =
                static_cast<float>(window_loss / static_cast<double>(accum));
            comm_buf[static_cast<size_t>(nparams) + 1] = static_cast<float>(window_correct);

            pg.allreduce_average(comm_buf.data(), nparams + 2);

            off = 0;
            for (auto& [name, t] : window.entries) {
                for (int64_t i = 0; i < t.numel(); ++i)
                    t.data[static_cast<size_t>(i)] = comm_buf[off++];
            }
            const auto u0 = Clock::now();
            optimizer_step(opt, params, window);
            compute_s += seconds_since(u0);

            const float step_loss = comm_buf[static_cast<size_t>(nparams)];
            result.step_losses.push_back(step_loss);
            loss_sum += step_loss;
            correct_sum += static_cast<double>(comm_buf[static_cast<size_t>(nparams) + 1]) * world;
        }

        result.allreduce_calls_per_epoch.push_back(
            static_cast<int64_t>(pg.allreduce_calls() - calls0));
        if (opts.test_corrupt_params)
            params.entries[0].second.data[0] += 0.01f;

        pg.barrier();
        const double total_s = seconds_since(t0);
        const double comm_s = pg.comm_seconds() - comm0;

        EpochMetrics mine;
        mine.run_id = opts.run_id;
        mine.world_size = world;
        mine.rank = rank;
        mine.epoch = epoch;
        mine.compute_s = compute_s;
        mine.comm_s = comm_s;
        mine.total_s = total_s;
        mine.loss = loss_sum / static_cast<double>(plan.steps);
        const double global_samples = static_cast<double>(plan.steps * accum * micro * world);
        mine.accuracy = correct_sum / global_samples;

        // Checksum AllReduce: every rank contributes its parameter fingerprint
        // and epoch row into its own slot group; afterwards everyone holds the
        // full table and verifies the fingerprints agree.
        const uint64_t fp = param_fingerprint(params);
        std::vector<float> gather(static_cast<size_t>(world) * kGatherSlots, 0.0f);
        float* slot = gather.data() + static_cast<size_t>(rank) * kGatherSlots;
        slot[0] = static_cast<float>(mine.compute_s);
        slot[1] = static_cast<float>(mine.comm_s);
        slot[2] = static_cast<float>(mine.total_s);
        slot[3] = static_cast<float>(mine.loss);
        slot[4] = static_cast<float>(mine.accuracy);
        slot[5] = static_cast<float>(fp & kFpMask);
        slot[6] = static_cast<float>((fp >> 22) & kFpMask);
        slot[7] = static_cast<float>(fp >> 44);
        pg.allreduce_sum(gather.data(), static_cast<int64_t>(gather.size()));

        for (int r = 0; r < world; ++r) {
            const float* s = gather.data() + static_cast<size_t>(r) * kGatherSlots;
            if (s[5] != slot[5] || s[6] != slot[6] || s[7] != slot[7])
                throw ProtocolError("parameter drift after epoch " + std::to_string(epoch) +
                                    ": rank " + std::to_string(r) +
                                    " checksum differs from rank " + std::to_string(rank));
            EpochMetrics row = mine;
            row.rank = r;
            row.compute_s = s[0];
            row.comm_s = s[1];
            row.total_s = s[2];
            // Loss and accuracy are global values; keep the full-precision
            // local copy rather than the float that rode the wire.
            result.world_epochs.push_back(std::move(row));
        }
        result.local_epochs.push_back(mine);
        result.world_epochs[result.world_epochs.size() - static_cast<size_t>(world) +
                            static_cast<size_t>(rank)] = mine;
    }

    result.param_fingerprint = param_fingerprint(params);
    result.params = std::move(params);

    if (!opts.out_dir.empty() && rank == 0) {
        write_metrics_csv(opts.out_dir + "/metrics.csv", result.world_epochs);
        save_checkpoint(opts.out_dir + "/checkpoint.bin", result.params);
    }
    return result;
}

}  // namespace vitdp
