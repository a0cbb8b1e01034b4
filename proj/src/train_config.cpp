#include "vitdp/train_config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vitdp/errors.hpp"

namespace vitdp {

namespace {

using nlohmann::json;

int64_t get_int(const json& j, const std::string& key) {
    if (!j.at(key).is_number_integer())
        throw ConfigError(key + " must be an integer");
    return j.at(key).get<int64_t>();
}

double get_num(const json& j, const std::string& key) {
    if (!j.at(key).is_number()) throw ConfigError(key + " must be a number");
    return j.at(key).get<double>();
}

bool get_bool(const json& j, const std::string& key) {
    if (!j.at(key).is_boolean()) throw ConfigError(key + " must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_str(const json& j, const std::string& key) {
    if (!j.at(key).is_string()) throw ConfigError(key + " must be a string");
    return j.at(key).get<std::string>();
}

void warn_unknown(TrainConfig& cfg, const std::string& path) {
    cfg.warnings.push_back("ignoring unknown config field: " + path);
}

void parse_model(TrainConfig& cfg, const json& m) {
    for (const auto& [key, value] : m.items()) {
        if (key == "image_size") cfg.model.image_size = get_int(m, key);
        else if (key == "channels") cfg.model.channels = get_int(m, key);
        else if (key == "patch_size") cfg.model.patch_size = get_int(m, key);
        else if (key == "embed_dim") cfg.model.embed_dim = get_int(m, key);
        else if (key == "num_heads") cfg.model.num_heads = get_int(m, key);
        else if (key == "depth") cfg.model.depth = get_int(m, key);
        else if (key == "mlp_ratio") cfg.model.mlp_ratio = get_int(m, key);
        else if (key == "num_classes") cfg.model.num_classes = get_int(m, key);
        else warn_unknown(cfg, "engine.model." + key);
    }
}

void parse_engine(TrainConfig& cfg, const json& e) {
    for (const auto& [key, value] : e.items()) {
        if (key == "optimizer") {
            const std::string v = get_str(e, key);
            if (v == "sgd") cfg.optimizer = OptimizerKind::sgd;
            else if (v == "adam") cfg.optimizer = OptimizerKind::adam;
            else throw ConfigError("unknown optimizer \"" + v + "\" (sgd or adam)");
        } else if (key == "learning_rate") {
            cfg.learning_rate = get_num(e, key);
        } else if (key == "momentum") {
            cfg.momentum = get_num(e, key);
        } else if (key == "betas") {
            const auto& b = e.at(key);
            if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
                throw ConfigError("betas must be [beta1, beta2]");
            cfg.beta1 = b[0].get<double>();
            cfg.beta2 = b[1].get<double>();
        } else if (key == "eps") {
            cfg.adam_eps = get_num(e, key);
        } else if (key == "epochs") {
            cfg.epochs = get_int(e, key);
        } else if (key == "seed") {
            cfg.seed = static_cast<uint64_t>(get_int(e, key));
        } else if (key == "scaling_mode") {
            const std::string v = get_str(e, key);
            if (v == "strong") cfg.scaling_mode = ShardMode::strong;
            else if (v == "weak") cfg.scaling_mode = ShardMode::weak;
            else throw ConfigError("scaling_mode must be strong or weak, got \"" + v + "\"");
        } else if (key == "weak_fraction") {
            cfg.weak_fraction = get_num(e, key);
        } else if (key == "assignment") {
            const std::string v = get_str(e, key);
            if (v == "shard") cfg.assignment = DataAssignment::sharded;
            else if (v == "interleave") cfg.assignment = DataAssignment::interleave;
            else throw ConfigError("assignment must be shard or interleave, got \"" + v + "\"");
        } else if (key == "model") {
            if (!e.at(key).is_object()) throw ConfigError("engine.model must be an object");
            parse_model(cfg, e.at(key));
        } else {
            warn_unknown(cfg, "engine." + key);
        }
    }
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");

    TrainConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "train_batch_size") {
            cfg.train_batch_size = get_int(j, key);
        } else if (key == "gradient_accumulation_steps") {
            cfg.gradient_accumulation_steps = get_int(j, key);
        } else if (key == "micro_batch_per_gpu") {
            cfg.micro_batch_per_gpu = get_int(j, key);
        } else if (key == "wall_clock_breakdown") {
            cfg.wall_clock_breakdown = get_bool(j, key);
        } else if (key == "fp16") {
            if (!value.is_object()) throw ConfigError("fp16 must be an object");
            for (const auto& [k2, v2] : value.items()) {
                if (k2 == "enabled") {
                    if (!v2.is_boolean()) throw ConfigError("fp16.enabled must be a boolean");
                    if (v2.get<bool>())
                        throw UnsupportedError("fp16 training is not supported (fp16.enabled must be false)");
                } else {
                    warn_unknown(cfg, "fp16." + k2);
                }
            }
        } else if (key == "zero_optimization") {
            if (!value.is_object()) throw ConfigError("zero_optimization must be an object");
            for (const auto& [k2, v2] : value.items()) {
                if (k2 == "stage") {
                    if (!v2.is_number_integer()) throw ConfigError("zero_optimization.stage must be an integer");
                    const int64_t stage = v2.get<int64_t>();
                    if (stage != 0)
                        throw UnsupportedError("zero_optimization.stage " + std::to_string(stage) +
                                               " is not supported (stage must be 0)");
                } else {
                    warn_unknown(cfg, "zero_optimization." + k2);
                }
            }
        } else if (key == "engine") {
            if (!value.is_object()) throw ConfigError("engine must be an object");
            parse_engine(cfg, value);
        } else {
            warn_unknown(cfg, key);
        }
    }
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str());
}

void validate_config(const TrainConfig& cfg, int world_size) {
    if (world_size < 1) throw ConfigError("world size must be at least 1");
    if (cfg.micro_batch_per_gpu < 1) throw ConfigError("micro_batch_per_gpu must be at least 1");
    if (cfg.gradient_accumulation_steps < 1)
        throw ConfigError("gradient_accumulation_steps must be at least 1");
    const int64_t implied =
        cfg.micro_batch_per_gpu * cfg.gradient_accumulation_steps * world_size;
    if (cfg.train_batch_size != implied)
        throw ConfigError(
            "train_batch_size " + std::to_string(cfg.train_batch_size) +
            " != micro_batch_per_gpu " + std::to_string(cfg.micro_batch_per_gpu) +
            " x gradient_accumulation_steps " + std::to_string(cfg.gradient_accumulation_steps) +
            " x world_size " + std::to_string(world_size) + " (= " + std::to_string(implied) + ")");
    if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
    if (cfg.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (cfg.scaling_mode == ShardMode::weak) {
        if (cfg.weak_fraction <= 0.0 || cfg.weak_fraction > 1.0)
            throw ConfigError("weak_fraction must be in (0, 1]");
        if (static_cast<double>(world_size) * cfg.weak_fraction > 1.0 + 1e-12)
            throw ConfigError("weak shards overflow the dataset: " + std::to_string(world_size) +
                              " x " + std::to_string(cfg.weak_fraction) + " > 1");
    }
    cfg.model.validate();
}

std::string default_config_json() {
    return R"({
  "train_batch_size": 32,
  "gradient_accumulation_steps": 1,
  "micro_batch_per_gpu": 16,
  "fp16": {
    "enabled": false
  },
  "zero_optimization": {
    "stage": 0
  },
  "wall_clock_breakdown": true,
  "engine": {
    "optimizer": "adam",
    "learning_rate": 0.0003,
    "epochs": 5,
    "seed": 1234,
    "scaling_mode": "strong",
    "weak_fraction": 0.1,
    "assignment": "shard",
    "model": {
      "image_size": 32,
      "channels": 3,
      "patch_size": 16,
      "embed_dim": 64,
      "num_heads": 4,
      "depth": 4,
      "mlp_ratio": 4,
      "num_classes": 10
    }
  }
}
)";
}

std::string config_to_json(const TrainConfig& cfg) {
    json model = {
        {"image_size", cfg.model.image_size},   {"channels", cfg.model.channels},
        {"patch_size", cfg.model.patch_size},   {"embed_dim", cfg.model.embed_dim},
        {"num_heads", cfg.model.num_heads},     {"depth", cfg.model.depth},
        {"mlp_ratio", cfg.model.mlp_ratio},     {"num_classes", cfg.model.num_classes},
    };
    json engine = {
        {"optimizer", optimizer_name(cfg.optimizer)},
        {"learning_rate", cfg.learning_rate},
        {"momentum", cfg.momentum},
        {"betas", {cfg.beta1, cfg.beta2}},
        {"eps", cfg.adam_eps},
        {"epochs", cfg.epochs},
        {"seed", cfg.seed},
        {"scaling_mode", cfg.scaling_mode == ShardMode::strong ? "strong" : "weak"},
        {"weak_fraction", cfg.weak_fraction},
        {"assignment", cfg.assignment == DataAssignment::sharded ? "shard" : "interleave"},
        {"model", model},
    };
    json j = {
        {"train_batch_size", cfg.train_batch_size},
        {"gradient_accumulation_steps", cfg.gradient_accumulation_steps},
        {"micro_batch_per_gpu", cfg.micro_batch_per_gpu},
        {"fp16", {{"enabled", false}}},
        {"zero_optimization", {{"stage", 0}}},
        {"wall_clock_breakdown", cfg.wall_clock_breakdown},
        {"engine", engine},
    };
    return j.dump(2) + "\n";
}

const char* optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "adam";
}

}  // namespace vitdp
