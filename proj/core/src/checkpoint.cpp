#include "lienet/checkpoint.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

namespace lienet {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items()) {
        if (!keys.contains(key)) {
            throw CheckpointError("checkpoint: unknown field '" + where + key + "'");
        }
    }
}

const json& field(const json& obj, const char* name, const std::string& where) {
    if (!obj.is_object() || !obj.contains(name)) {
        throw CheckpointError("checkpoint: missing field '" + where + name + "'");
    }
    return obj.at(name);
}

template <typename T>
std::vector<T> scalar_array(const json& obj, const char* name, std::size_t expected,
                            const std::string& where) {
    const json& arr = field(obj, name, where);
    if (!arr.is_array()) throw CheckpointError("checkpoint: field '" + where + name + "' is not an array");
    if (arr.size() != expected) {
        throw CheckpointError("checkpoint: field '" + where + name + "' has " +
                              std::to_string(arr.size()) + " scalars, config requires " +
                              std::to_string(expected));
    }
    std::vector<T> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number()) throw CheckpointError("checkpoint: non-numeric value in '" + where + name + "'");
        out.push_back(static_cast<T>(v.get<double>()));
    }
    return out;
}

int int_field(const json& obj, const char* name, const std::string& where) {
    const json& v = field(obj, name, where);
    if (!v.is_number_integer()) throw CheckpointError("checkpoint: field '" + where + name + "' is not an integer");
    return v.get<int>();
}

std::string string_field(const json& obj, const char* name) {
    const json& v = field(obj, name, "");
    if (!v.is_string()) throw CheckpointError(std::string("checkpoint: field '") + name + "' is not a string");
    return v.get<std::string>();
}

} // namespace

template <typename T>
std::string checkpoint_to_json(const Network<T>& net) {
    const NetworkConfig& cfg = net.config();
    json doc;
    doc["format_version"] = kCheckpointFormatVersion;
    doc["dia_set"] = cfg.dia_set;
    doc["stages"] = cfg.stages;
    doc["channels"] = cfg.channels;
    doc["tie_mode"] = std::string(to_string(cfg.tie_mode));
    doc["skip_mode"] = std::string(to_string(cfg.skip_mode));
    json stages = json::array();
    for (std::size_t s = 0; s < net.stage_params().size(); ++s) {
        json kernels = json::array();
        for (const auto& k : net.stage_params()[s].kernels) {
            auto as_double = [](const std::vector<T>& v) {
                return std::vector<double>(v.begin(), v.end());
            };
            kernels.push_back({{"dia", k.dia},
                               {"w1", as_double(k.w1)},
                               {"b1", as_double(k.b1)},
                               {"w2", as_double(k.w2)},
                               {"b2", as_double(k.b2)}});
        }
        stages.push_back({{"stage", s + 1}, {"kernels", std::move(kernels)}});
    }
    doc["stage_params"] = std::move(stages);
    return doc.dump(1) + "\n";
}

template <typename T>
Network<T> checkpoint_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw CheckpointError(std::string("checkpoint: parse error: ") + e.what());
    }
    if (!doc.is_object()) throw CheckpointError("checkpoint: top level is not an object");
    reject_unknown(doc, {"format_version", "dia_set", "stages", "channels", "tie_mode", "skip_mode",
                         "stage_params"},
                   "");
    const int version = int_field(doc, "format_version", "");
    if (version != kCheckpointFormatVersion) {
        throw CheckpointError("checkpoint: field 'format_version' is " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointFormatVersion));
    }

    NetworkConfig cfg;
    const json& dias = field(doc, "dia_set", "");
    if (!dias.is_array()) throw CheckpointError("checkpoint: field 'dia_set' is not an array");
    cfg.dia_set.clear();
    for (const auto& d : dias) {
        if (!d.is_number_integer()) throw CheckpointError("checkpoint: field 'dia_set' holds a non-integer");
        cfg.dia_set.push_back(d.get<int>());
    }
    cfg.stages = int_field(doc, "stages", "");
    cfg.channels = int_field(doc, "channels", "");
    try {
        cfg.tie_mode = parse_tie_mode(string_field(doc, "tie_mode"));
        cfg.skip_mode = parse_skip_mode(string_field(doc, "skip_mode"));
        cfg.validate();
    } catch (const StructuralError& e) {
        throw CheckpointError(std::string("checkpoint: invalid configuration: ") + e.what());
    }

    const json& stages = field(doc, "stage_params", "");
    if (!stages.is_array()) throw CheckpointError("checkpoint: field 'stage_params' is not an array");
    if (static_cast<int>(stages.size()) != cfg.parameter_sets()) {
        throw CheckpointError("checkpoint: field 'stage_params' has " + std::to_string(stages.size()) +
                              " entries, config requires " + std::to_string(cfg.parameter_sets()));
    }
    const auto C = static_cast<std::size_t>(cfg.channels);
    std::vector<MsrbParams<T>> sets;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const std::string where = "stage_params[" + std::to_string(s) + "].";
        const json& st = stages[s];
        if (!st.is_object()) throw CheckpointError("checkpoint: '" + where + "' is not an object");
        reject_unknown(st, {"stage", "kernels"}, where);
        if (int_field(st, "stage", where) != static_cast<int>(s + 1)) {
            throw CheckpointError("checkpoint: field '" + where + "stage' out of order");
        }
        const json& kernels = field(st, "kernels", where);
        if (!kernels.is_array() || kernels.size() != cfg.dia_set.size()) {
            throw CheckpointError("checkpoint: field '" + where + "kernels' must list " +
                                  std::to_string(cfg.dia_set.size()) + " kernels");
        }
        MsrbParams<T> ms;
        for (std::size_t k = 0; k < kernels.size(); ++k) {
            const std::string kw = where + "kernels[" + std::to_string(k) + "].";
            const json& kj = kernels[k];
            if (!kj.is_object()) throw CheckpointError("checkpoint: '" + kw + "' is not an object");
            reject_unknown(kj, {"dia", "w1", "b1", "w2", "b2"}, kw);
            DSConvParams<T> p;
            p.dia = int_field(kj, "dia", kw);
            if (p.dia != cfg.dia_set[k]) {
                throw CheckpointError("checkpoint: field '" + kw + "dia' does not match dia_set");
            }
            p.w1 = scalar_array<T>(kj, "w1", C, kw);
            p.b1 = scalar_array<T>(kj, "b1", C, kw);
            p.w2 = scalar_array<T>(kj, "w2", C, kw);
            p.b2 = scalar_array<T>(kj, "b2", C, kw);
            ms.kernels.push_back(std::move(p));
        }
        sets.push_back(std::move(ms));
    }
    for (std::size_t s = 0; s < sets.size(); ++s) {
        const Variant v = home_variant(cfg, s);
        sets[s].variant = v;
        for (auto& k : sets[s].kernels) k.variant = v;
    }
    return Network<T>(cfg, std::move(sets));
}

template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out << checkpoint_to_json(net);
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return checkpoint_from_json<T>(ss.str());
    } catch (const CheckpointError& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

template std::string checkpoint_to_json(const Network<float>&);
template std::string checkpoint_to_json(const Network<double>&);
template Network<float> checkpoint_from_json<float>(const std::string&);
template Network<double> checkpoint_from_json<double>(const std::string&);
template void save_checkpoint(const Network<float>&, const std::filesystem::path&);
template void save_checkpoint(const Network<double>&, const std::filesystem::path&);
template Network<float> load_checkpoint<float>(const std::filesystem::path&);
template Network<double> load_checkpoint<double>(const std::filesystem::path&);

} // namespace lienet
