#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semo/config.hpp"
#include "semo/tensor.hpp"

namespace semo {

struct checkpoint_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One named float32 tensor inside a component blob file.
struct BlobEntry {
    std::string name;
    Tensor<float> value;
};

// A checkpoint directory: human-readable manifest.txt plus one .bin
// file per model component. Blob records carry magic "SEMO", a format
// version, the parameter name, a shape header, and a float32
// little-endian payload.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    RunConfig config;
    int step = 0;
    std::string stage = "ae_image";
    std::vector<std::pair<int, double>> loss_history;
    std::map<std::string, std::vector<BlobEntry>> components;

    const Tensor<float>* find(const std::string& component, const std::string& param) const {
        auto it = components.find(component);
        if (it == components.end()) return nullptr;
        for (const auto& e : it->second)
            if (e.name == param) return &e.value;
        return nullptr;
    }
};

// Returns the directory path. Loss history is downsampled to at most
// 1000 entries before writing.
std::filesystem::path save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::vector<std::pair<int, double>> downsample_history(
    const std::vector<std::pair<int, double>>& history, std::size_t max_entries = 1000);

}  // namespace semo
