#pragma once

#include "bggan/checkpoint.hpp"
#include "bggan/config.hpp"

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace bggan {

struct StepRecord {
    long step = 0;
    std::map<std::string, double> terms;
};

using LossHistory = std::vector<StepRecord>;

struct TrainResult {
    LossHistory gen_history;
    LossHistory critic_history;
    std::vector<std::string> warnings;
};

// Single-precision training orchestrator owning the generator, critics,
// optimizers, and the two RNG streams (data crops vs gradient-penalty draws).
class Trainer {
public:
    RunConfig cfg;
    Generator<float> gen;
    MultiCritic<float> critics;
    FeatureExtractor<float> fx;
    Adam<float> adam_g, adam_d;
    Rng data_rng, gp_rng;
    int stage = 1;
    long step = 0;         // steps completed in the current stage
    long data_cursor = 0;  // id-sorted pass position

    // non-finite loss dumps a diagnostic checkpoint here before throwing
    std::string diagnostic_path;
    // periodic checkpoints (cfg.sched.checkpoint_every > 0) go here
    std::string checkpoint_path;

    explicit Trainer(const RunConfig& cfg);

    // steps < 0 derives stage1_epochs * dataset size
    TrainResult train_stage1(const std::vector<PairedSample>& data, long steps = -1);
    // cycles < 0 derives stage2_epochs * dataset size; each cycle runs
    // critic_steps_per_gen_step critic updates then one generator update
    TrainResult train_stage2(const std::vector<PairedSample>& data, long cycles = -1);

    Checkpoint to_checkpoint() const;
    static Trainer from_checkpoint(const Checkpoint& ckpt);

    // crop the next sample in pass order and convert to model range
    std::pair<Tensor4f, Tensor4f> next_batch(const std::vector<PairedSample>& data);

private:
    void abort_non_finite(const std::string& what);
    void maybe_periodic_checkpoint();
};

FeatureExtractor<float> build_feature_extractor(const RunConfig& cfg);

}  // namespace bggan
