#pragma once

#include "bggan/adam.hpp"
#include "bggan/critic.hpp"
#include "bggan/data.hpp"
#include "bggan/glassnet.hpp"
#include "bggan/losses.hpp"

#include <map>
#include <sstream>
#include <string>

namespace bggan {

struct TrainSchedule {
    int stage1_epochs = 60;
    int stage2_epochs = 60;
    int batch_size = 1;
    int critic_steps_per_gen_step = 5;
    unsigned seed = 7;
    int checkpoint_every = 0;  // 0 = only at the end
    long max_steps = -1;       // -1 = derive from epochs * dataset size

    void validate() const {
        if (stage1_epochs <= 0 || stage2_epochs <= 0)
            throw ConfigError("TrainSchedule: epochs must be positive");
        if (batch_size <= 0) throw ConfigError("TrainSchedule: batch_size must be positive");
        if (critic_steps_per_gen_step < 1)
            throw ConfigError("TrainSchedule: critic_steps_per_gen_step must be >= 1");
    }
};

// Everything a run needs, round-trippable through flat key=value text. The
// same serialization is embedded in checkpoints as the config snapshot.
struct RunConfig {
    GeneratorConfig gen;
    CriticConfig critic;
    LossWeights weights;
    AdamConfig adam;
    TrainSchedule sched;
    CropSize crop;
    FxSource fx_source = FxSource::seeded_random;
    unsigned fx_seed = 1234;
    std::string fx_weights_file;

    void validate() const {
        gen.validate();
        critic.validate();
        adam.validate();
        sched.validate();
    }

    std::map<std::string, std::string> to_map() const;
    static RunConfig from_map(const std::map<std::string, std::string>& kv);
};

// Flat key=value lines; '#' comments and blank lines ignored.
std::map<std::string, std::string> parse_config_text(std::istream& in);
std::map<std::string, std::string> parse_config_file(const std::string& path);

}  // namespace bggan
