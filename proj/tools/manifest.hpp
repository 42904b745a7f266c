#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace ecgbench::cli {

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(std::string_view bytes);

// Run record written next to the primary output. Replaying it re-executes
// the same argument vector and compares output digests.
struct Manifest {
    std::vector<std::string> argv;  // without the program name
    std::string cwd;
    std::string config;  // effective options, key = value
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string data_dir;
    std::map<std::string, std::string> inputs;   // path -> sha256
    std::map<std::string, std::string> outputs;  // path -> sha256
    nlohmann::json results = nlohmann::json::object();

    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static Manifest load(const std::filesystem::path& path);
};

}  // namespace ecgbench::cli
