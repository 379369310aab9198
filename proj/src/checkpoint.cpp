#include "erracc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace erracc::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoints are little-endian; big-endian hosts are unsupported");

namespace {
constexpr char kMagic[4] = {'M', 'L', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const Parameters<float>& params) {
    nlohmann::json j;
    j["config"] = {{"input_dim", header.cfg.input_dim},
                   {"hidden_layers", header.cfg.hidden_layers},
                   {"hidden_width", header.cfg.hidden_width},
                   {"output_dim", header.cfg.output_dim}};
    j["seed"] = header.seed;
    j["epoch"] = header.epoch;
    j["param_count"] = params.total_size();
    // Flatten order with group tags; the blob follows this layout exactly.
    nlohmann::json groups = nlohmann::json::array();
    params.for_each_tensor([&groups](const auto& t, bool sigma_head) {
        groups.push_back({{"size", t.size()}, {"group", sigma_head ? "sigma-head" : "body"}});
    });
    j["groups"] = groups;
    j["extra"] = header.extra;

    const std::string text = j.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
    out.write(kMagic, 4);
    const std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t json_len = text.size();
    out.write(reinterpret_cast<const char*>(&json_len), sizeof(json_len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const VecX<float> flat = params.to_flat();
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(flat.size() * sizeof(float)));
    if (!out) throw DataError("checkpoint write failed: " + path.string());
}

std::pair<CheckpointHeader, Parameters<float>> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t json_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
    if (!in || std::memcmp(magic, kMagic, 4) != 0 || version != kVersion)
        throw DataError("not a checkpoint file: " + path.string());
    std::string text(json_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(json_len));
    if (!in) throw DataError("truncated checkpoint header: " + path.string());

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
    }
    CheckpointHeader header;
    header.cfg.input_dim = j.at("config").at("input_dim").get<int>();
    header.cfg.hidden_layers = j.at("config").at("hidden_layers").get<int>();
    header.cfg.hidden_width = j.at("config").at("hidden_width").get<int>();
    header.cfg.output_dim = j.at("config").at("output_dim").get<int>();
    header.seed = j.at("seed").get<std::uint64_t>();
    header.epoch = j.at("epoch").get<int>();
    header.extra = j.value("extra", nlohmann::json::object());

    Parameters<float> params = zero_like<float>(header.cfg);
    const std::int64_t expected = j.at("param_count").get<std::int64_t>();
    if (expected != params.total_size())
        throw DataError("checkpoint parameter count mismatch in " + path.string());
    VecX<float> flat(params.total_size());
    in.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint blob: " + path.string());
    params.from_flat(flat);
    return {header, params};
}

std::uint64_t hash_params(const Parameters<float>& params) {
    const VecX<float> flat = params.to_flat();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(flat.data());
    for (std::size_t i = 0; i < flat.size() * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace erracc::nn
