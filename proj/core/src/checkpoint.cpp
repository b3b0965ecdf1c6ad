#include <afc/checkpoint.hpp>
#include <afc/error.hpp>

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace afc {

using nlohmann::json;

namespace {

std::filesystem::path params_path(const std::filesystem::path& manifest) {
    auto p = manifest;
    p.replace_extension(".params");
    return p;
}

void write_le_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

void save_checkpoint(const std::filesystem::path& manifest_path, const EmbeddingModel& model,
                     const CheckpointInfo& info) {
    if (manifest_path.has_parent_path()) std::filesystem::create_directories(manifest_path.parent_path());
    json layers = json::array();
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        const auto& l = model.layers()[i];
        const auto& b = model.parameter_blocks()[i];
        json j{{"kind", to_string(l.kind)}};
        switch (l.kind) {
        case LayerKind::convolution:
            j["out_channels"] = l.out_channels;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        case LayerKind::max_pool:
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            break;
        case LayerKind::fully_connected: j["out_features"] = l.out_features; break;
        default: break;
        }
        j["weights"] = b.weight_count;
        j["biases"] = b.bias_count;
        layers.push_back(std::move(j));
    }
    const auto& in = model.input_shape();
    const auto ppath = params_path(manifest_path);
    json manifest{
        {"format", "afc-checkpoint"},
        {"version", 1},
        {"input", {{"channels", in.channels}, {"height", in.height}, {"width", in.width}}},
        {"layers", layers},
        {"embedding_dim", model.embedding_dim()},
        {"normalize_output", model.normalize_output()},
        {"seed", info.seed},
        {"round", info.round},
        {"trained", info.trained},
        {"parameter_count", model.parameter_count()},
        {"parameter_file", ppath.filename().string()},
    };

    {
        std::ofstream os(ppath, std::ios::binary | std::ios::trunc);
        if (!os) throw InputError("cannot write " + ppath.string());
        for (double p : model.parameters()) write_le_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(p)));
        if (!os) throw InputError("write failed: " + ppath.string());
    }
    std::ofstream os(manifest_path, std::ios::trunc);
    if (!os) throw InputError("cannot write " + manifest_path.string());
    os << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw LookupError("checkpoint not found: " + manifest_path.string());
    json m;
    try {
        is >> m;
    } catch (const json::exception& e) {
        throw FormatError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
    }
    if (m.value("format", "") != "afc-checkpoint") throw FormatError("not a checkpoint manifest");

    try {
        TensorShape input{m.at("input").at("channels").get<int>(), m.at("input").at("height").get<int>(),
                          m.at("input").at("width").get<int>(), false};
        std::vector<LayerSpec> layers;
        for (const auto& j : m.at("layers")) {
            LayerSpec l;
            l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
            l.out_channels = j.value("out_channels", 0);
            l.kernel = j.value("kernel", 0);
            l.stride = j.value("stride", 1);
            l.padding = j.value("padding", 0);
            l.out_features = j.value("out_features", 0);
            layers.push_back(l);
        }
        EmbeddingModel model(input, std::move(layers), m.at("normalize_output").get<bool>());
        if (model.embedding_dim() != m.at("embedding_dim").get<int>() ||
            model.parameter_count() != m.at("parameter_count").get<std::size_t>()) {
            throw ConsistencyError("checkpoint manifest disagrees with its layer specs");
        }

        auto ppath = manifest_path.parent_path() / m.at("parameter_file").get<std::string>();
        std::ifstream ps(ppath, std::ios::binary);
        if (!ps) throw LookupError("checkpoint parameters not found: " + ppath.string());
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(ps)), std::istreambuf_iterator<char>());
        if (bytes.size() != model.parameter_count() * 4) {
            throw TruncationError("checkpoint parameter file has " + std::to_string(bytes.size()) + " bytes, expected " +
                                  std::to_string(model.parameter_count() * 4));
        }
        auto params = model.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const unsigned char* b = &bytes[i * 4];
            const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                    (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
            params[i] = static_cast<double>(std::bit_cast<float>(u));
        }
        CheckpointInfo info{m.at("seed").get<std::uint64_t>(), m.at("round").get<int>(), m.value("trained", false)};
        return Checkpoint{std::move(model), info};
    } catch (const json::exception& e) {
        throw FormatError("malformed checkpoint manifest: " + std::string(e.what()));
    }
}

} // namespace afc
