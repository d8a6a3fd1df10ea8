#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "bvi/adamax.hpp"
#include "bvi/pyramid.hpp"

namespace bvi {

inline constexpr char kCheckpointMagic[8] = {'B', 'V', 'I', 'C', 'K', 'P', '0', '1'};

// Versioned container: JSON header + raw little-endian doubles. Tensor order
// is the model's parameter-set order (levels, then ConvLSTMs), each conv as
// weights then biases; optimizer slots follow in the same order.
struct Checkpoint {
    PyramidConfig arch;
    long step = 0;
    int epoch = 0;
    long adamax_t = 0;
    bool has_optimizer = false;
    std::string rng_state;
    std::string config_hash;
    nlohmann::json train_config;  // opaque; consumed by the trainer
    PyramidModel model;
    std::vector<AdaMaxOptimizer::Slot> slots_w, slots_b;
};

namespace detail {

inline void write_doubles(std::ofstream& f, const std::vector<double>& v) {
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_doubles(std::ifstream& f, std::vector<double>& v) {
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!f) throw invalid_input("checkpoint: truncated tensor data");
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, PyramidModel& model,
                            AdaMaxOptimizer* opt, long step, int epoch,
                            const std::string& rng_state, const nlohmann::json& train_config,
                            const std::string& config_hash) {
    nlohmann::json header;
    header["version"] = 1;
    header["arch"] = model.cfg.to_json();
    header["step"] = step;
    header["epoch"] = epoch;
    header["rng_state"] = rng_state;
    header["has_optimizer"] = opt != nullptr;
    header["adamax_t"] = opt ? opt->step_count() : 0;
    header["train_config"] = train_config;
    header["config_hash"] = config_hash;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw invalid_input("checkpoint: cannot write " + path.string());
    f.write(kCheckpointMagic, 8);
    uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (ParameterSet* ps : model.all_params())
        for (ConvParam& c : ps->convs) {
            detail::write_doubles(f, c.w);
            detail::write_doubles(f, c.b);
        }
    if (opt) {
        size_t si = 0;
        for (ParameterSet* ps : model.all_params())
            for (ConvParam& c : ps->convs) {
                (void)c;
                detail::write_doubles(f, opt->slots_w()[si].m);
                detail::write_doubles(f, opt->slots_w()[si].u);
                detail::write_doubles(f, opt->slots_b()[si].m);
                detail::write_doubles(f, opt->slots_b()[si].u);
                ++si;
            }
    }
    if (!f) throw invalid_input("checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw invalid_input("checkpoint: cannot open " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw invalid_input("checkpoint: bad magic in " + path.string());
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    if (!f) throw invalid_input("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw invalid_input(std::string("checkpoint: header parse error: ") + e.what());
    }
    if (header.at("version").get<int>() != 1)
        throw invalid_input("checkpoint: unsupported version");

    Checkpoint ck;
    ck.arch = PyramidConfig::from_json(header.at("arch"));
    ck.step = header.at("step").get<long>();
    ck.epoch = header.at("epoch").get<int>();
    ck.rng_state = header.value("rng_state", "");
    ck.has_optimizer = header.at("has_optimizer").get<bool>();
    ck.adamax_t = header.value("adamax_t", 0L);
    ck.train_config = header.value("train_config", nlohmann::json::object());
    ck.config_hash = header.value("config_hash", "");
    ck.model = PyramidModel::create(ck.arch, 0);
    for (ParameterSet* ps : ck.model.all_params())
        for (ConvParam& c : ps->convs) {
            detail::read_doubles(f, c.w);
            detail::read_doubles(f, c.b);
        }
    if (ck.has_optimizer) {
        for (ParameterSet* ps : ck.model.all_params())
            for (ConvParam& c : ps->convs) {
                AdaMaxOptimizer::Slot sw, sb;
                sw.m.assign(c.w.size(), 0.0);
                sw.u.assign(c.w.size(), 0.0);
                sb.m.assign(c.b.size(), 0.0);
                sb.u.assign(c.b.size(), 0.0);
                detail::read_doubles(f, sw.m);
                detail::read_doubles(f, sw.u);
                detail::read_doubles(f, sb.m);
                detail::read_doubles(f, sb.u);
                ck.slots_w.push_back(std::move(sw));
                ck.slots_b.push_back(std::move(sb));
            }
    }
    return ck;
}

}  // namespace bvi
