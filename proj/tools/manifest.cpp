#include "manifest.hpp"

#include <openssl/evp.h>

#include <memory>

#include "ecgbench/error.hpp"
#include "ecgbench/text_io.hpp"
#include "version.hpp"

namespace ecgbench::cli {

namespace fs = std::filesystem;

std::string sha256_bytes(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string sha256_file(const fs::path& path) { return sha256_bytes(read_file(path)); }

void Manifest::add_input(const fs::path& path) { inputs[path.string()] = sha256_file(path); }

void Manifest::add_output(const fs::path& path) {
    outputs[path.string()] = sha256_file(path);
    // binary prediction containers carry their ids next to them
    fs::path ids = path;
    ids += ".ids";
    if (fs::exists(ids)) outputs[ids.string()] = sha256_file(ids);
}

nlohmann::json Manifest::to_json() const {
    return {{"tool", "ecgbench"},
            {"version", kVersion},
            {"argv", argv},
            {"cwd", cwd},
            {"config", config},
            {"seed", seed},
            {"threads", threads},
            {"data_dir", data_dir},
            {"inputs", inputs},
            {"outputs", outputs},
            {"results", results}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
    Manifest m;
    try {
        m.argv = j.at("argv").get<std::vector<std::string>>();
        m.cwd = j.value("cwd", "");
        m.config = j.value("config", "");
        m.seed = j.value("seed", std::uint64_t{0});
        m.threads = j.value("threads", 1u);
        m.data_dir = j.value("data_dir", "");
        m.inputs = j.value("inputs", std::map<std::string, std::string>{});
        m.outputs = j.value("outputs", std::map<std::string, std::string>{});
        m.results = j.value("results", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void Manifest::save(const fs::path& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }

Manifest Manifest::load(const fs::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace ecgbench::cli
