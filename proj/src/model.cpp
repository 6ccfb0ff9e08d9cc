#include "fan/model.h"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fan/tensor_io.h"

namespace fan {

namespace {

constexpr std::uint32_t kFancVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
    io_detail::put_u32(os, static_cast<std::uint32_t>(v & 0xffffffffULL));
    io_detail::put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
    const std::uint64_t lo = io_detail::get_u32(is, path);
    const std::uint64_t hi = io_detail::get_u32(is, path);
    return lo | (hi << 32);
}

std::uint64_t read_fanc_header(std::istream& is, const std::string& path,
                               std::uint32_t* count_out) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FANC", 4) != 0) {
        throw parse_error("not a FANC checkpoint: " + path);
    }
    const std::uint32_t version = io_detail::get_u32(is, path);
    if (version != kFancVersion) {
        throw parse_error("unsupported FANC version in " + path);
    }
    const std::uint64_t digest = get_u64(is, path);
    const std::uint32_t count = io_detail::get_u32(is, path);
    if (count_out) *count_out = count;
    return digest;
}

std::string read_name(std::istream& is, const std::string& path) {
    const std::uint32_t len = io_detail::get_u32(is, path);
    if (len == 0 || len > 4096) {
        throw parse_error("bad tensor name length in " + path);
    }
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) {
        throw parse_error("truncated FANC checkpoint: " + path);
    }
    return name;
}

}  // namespace

void save_checkpoint(const std::string& path, const FanParams<float>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(ErrorClass::generic, "cannot open for writing: " + path);
    }
    const auto named = params.named_tensors();
    os.write("FANC", 4);
    io_detail::put_u32(os, kFancVersion);
    put_u64(os, config_digest(params.cfg));
    io_detail::put_u32(os, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        io_detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_fant(os, *tensor);
    }
    if (!os) {
        throw Error(ErrorClass::generic, "write failed: " + path);
    }
}

FanParams<float> load_checkpoint(const std::string& path, const TrainConfig& cfg) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw missing_input_error("cannot open checkpoint: " + path);
    }
    std::uint32_t count = 0;
    const std::uint64_t digest = read_fanc_header(is, path, &count);
    const std::uint64_t want = config_digest(cfg);
    if (digest != want) {
        std::ostringstream os;
        os << "checkpoint " << path << " was built under config digest 0x" << std::hex
           << std::setw(16) << std::setfill('0') << digest << ", current config digest is 0x"
           << std::setw(16) << want;
        throw digest_mismatch_error(os.str());
    }
    std::map<std::string, Tensor<float>> blobs;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = read_name(is, path);
        if (blobs.count(name)) {
            throw parse_error("duplicate tensor " + name + " in " + path);
        }
        blobs.emplace(std::move(name), read_fant<float>(is, path));
    }
    FanParams<float> params = make_fan_params<float>(cfg);
    for (auto& [name, tensor] : params.named_tensors()) {
        const auto it = blobs.find(name);
        if (it == blobs.end()) {
            throw parse_error("checkpoint " + path + " is missing tensor " + name);
        }
        if (!it->second.same_dims(*tensor)) {
            throw parse_error("checkpoint " + path + ": tensor " + name + " has shape " +
                              it->second.shape_string() + ", expected " +
                              tensor->shape_string());
        }
        *tensor = std::move(it->second);
        blobs.erase(it);
    }
    if (!blobs.empty()) {
        throw parse_error("checkpoint " + path + " has unexpected tensor " +
                          blobs.begin()->first);
    }
    return params;
}

std::uint64_t checkpoint_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw missing_input_error("cannot open checkpoint: " + path);
    }
    return read_fanc_header(is, path, nullptr);
}

std::string attention_record_to_json(const AttentionRecord<float>& record) {
    nlohmann::json j;
    j["p"] = record.p;
    j["groups"] = nlohmann::json::array();
    for (std::size_t g = 0; g < record.group_names.size(); ++g) {
        nlohmann::json entry;
        entry["name"] = record.group_names[g];
        entry["scores"] = record.scores[g];
        entry["weights"] = record.weights[g];
        j["groups"].push_back(std::move(entry));
    }
    return j.dump(2) + "\n";
}

}  // namespace fan
