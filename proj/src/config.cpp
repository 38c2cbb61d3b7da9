#include "bggan/config.hpp"

#include <fstream>

namespace bggan {

namespace {

std::string fx_source_name(FxSource s) {
    switch (s) {
        case FxSource::pretrained_file: return "pretrained";
        case FxSource::seeded_random: return "desk";
        default: return "identity";
    }
}

FxSource parse_fx_source(const std::string& s) {
    if (s == "pretrained") return FxSource::pretrained_file;
    if (s == "desk") return FxSource::seeded_random;
    if (s == "identity") return FxSource::identity;
    throw ConfigError("unknown fx.mode: " + s);
}

std::string join_depths(const std::vector<Index>& ds) {
    std::string out;
    for (size_t i = 0; i < ds.size(); ++i) out += (i ? "," : "") + std::to_string(ds[i]);
    return out;
}

std::vector<Index> split_depths(const std::string& s) {
    std::vector<Index> out;
    std::istringstream is(s);
    std::string part;
    while (std::getline(is, part, ',')) out.push_back(std::stol(part));
    return out;
}

template <typename T>
void read_kv(const std::map<std::string, std::string>& kv, const std::string& key, T& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    std::istringstream is(it->second);
    is >> out;
    if (!is) throw ConfigError("bad value for " + key + ": " + it->second);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> kv;
    kv["gen.stage1_base_channels"] = std::to_string(gen.stage1_base_channels);
    kv["gen.stage1_max_channels"] = std::to_string(gen.stage1_max_channels);
    kv["gen.stage2_base_channels"] = std::to_string(gen.stage2_base_channels);
    kv["gen.stage2_max_channels"] = std::to_string(gen.stage2_max_channels);
    kv["gen.n_resblocks"] = std::to_string(gen.n_resblocks);
    kv["gen.n_scales"] = std::to_string(gen.n_scales);
    kv["gen.norm_mode"] = norm_mode_name(gen.norm_mode);
    kv["critic.depths"] = join_depths(critic.depths);
    kv["critic.base_channels"] = std::to_string(critic.base_channels);
    kv["critic.gp_lambda"] = fmt(critic.gp_lambda);
    kv["loss.w_l1"] = fmt(weights.w_l1);
    kv["loss.w_ssim"] = fmt(weights.w_ssim);
    kv["loss.w_vgg"] = fmt(weights.w_vgg);
    kv["loss.w_adv"] = fmt(weights.w_adv);
    kv["adam.lr"] = fmt(adam.lr);
    kv["adam.beta1"] = fmt(adam.beta1);
    kv["adam.beta2"] = fmt(adam.beta2);
    kv["adam.eps"] = fmt(adam.eps);
    kv["train.stage1_epochs"] = std::to_string(sched.stage1_epochs);
    kv["train.stage2_epochs"] = std::to_string(sched.stage2_epochs);
    kv["train.batch_size"] = std::to_string(sched.batch_size);
    kv["train.critic_steps"] = std::to_string(sched.critic_steps_per_gen_step);
    kv["train.seed"] = std::to_string(sched.seed);
    kv["train.checkpoint_every"] = std::to_string(sched.checkpoint_every);
    kv["train.max_steps"] = std::to_string(sched.max_steps);
    kv["data.crop_h"] = std::to_string(crop.height);
    kv["data.crop_w"] = std::to_string(crop.width);
    kv["fx.mode"] = fx_source_name(fx_source);
    kv["fx.seed"] = std::to_string(fx_seed);
    if (!fx_weights_file.empty()) kv["fx.weights_file"] = fx_weights_file;
    return kv;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    const auto known = cfg.to_map();
    for (const auto& [k, v] : kv)
        if (!known.count(k) && k != "fx.weights_file") throw ConfigError("unknown config key: " + k);

    read_kv(kv, "gen.stage1_base_channels", cfg.gen.stage1_base_channels);
    read_kv(kv, "gen.stage1_max_channels", cfg.gen.stage1_max_channels);
    read_kv(kv, "gen.stage2_base_channels", cfg.gen.stage2_base_channels);
    read_kv(kv, "gen.stage2_max_channels", cfg.gen.stage2_max_channels);
    read_kv(kv, "gen.n_resblocks", cfg.gen.n_resblocks);
    read_kv(kv, "gen.n_scales", cfg.gen.n_scales);
    if (auto it = kv.find("gen.norm_mode"); it != kv.end())
        cfg.gen.norm_mode = parse_norm_mode(it->second);
    if (auto it = kv.find("critic.depths"); it != kv.end())
        cfg.critic.depths = split_depths(it->second);
    read_kv(kv, "critic.base_channels", cfg.critic.base_channels);
    read_kv(kv, "critic.gp_lambda", cfg.critic.gp_lambda);
    read_kv(kv, "loss.w_l1", cfg.weights.w_l1);
    read_kv(kv, "loss.w_ssim", cfg.weights.w_ssim);
    read_kv(kv, "loss.w_vgg", cfg.weights.w_vgg);
    read_kv(kv, "loss.w_adv", cfg.weights.w_adv);
    read_kv(kv, "adam.lr", cfg.adam.lr);
    read_kv(kv, "adam.beta1", cfg.adam.beta1);
    read_kv(kv, "adam.beta2", cfg.adam.beta2);
    read_kv(kv, "adam.eps", cfg.adam.eps);
    read_kv(kv, "train.stage1_epochs", cfg.sched.stage1_epochs);
    read_kv(kv, "train.stage2_epochs", cfg.sched.stage2_epochs);
    read_kv(kv, "train.batch_size", cfg.sched.batch_size);
    read_kv(kv, "train.critic_steps", cfg.sched.critic_steps_per_gen_step);
    read_kv(kv, "train.seed", cfg.sched.seed);
    read_kv(kv, "train.checkpoint_every", cfg.sched.checkpoint_every);
    read_kv(kv, "train.max_steps", cfg.sched.max_steps);
    read_kv(kv, "data.crop_h", cfg.crop.height);
    read_kv(kv, "data.crop_w", cfg.crop.width);
    if (auto it = kv.find("fx.mode"); it != kv.end()) cfg.fx_source = parse_fx_source(it->second);
    read_kv(kv, "fx.seed", cfg.fx_seed);
    if (auto it = kv.find("fx.weights_file"); it != kv.end()) cfg.fx_weights_file = it->second;
    cfg.validate();
    return cfg;
}

std::map<std::string, std::string> parse_config_text(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError("malformed config line (expected key=value): " + line);
            continue;
        }
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("malformed config line (empty key): " + line);
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse_config_text(in);
}

}  // namespace bggan
