#include "semo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace semo {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'O'};

void write_u32(std::ostream& o, std::uint32_t v) {
    o.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t read_u32(std::istream& i, const std::string& ctx) {
    std::uint32_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 4);
    if (!i) throw checkpoint_error("truncated blob while reading " + ctx);
    return v;
}

void write_blob_file(const std::filesystem::path& path, const std::vector<BlobEntry>& entries) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw checkpoint_error("cannot write blob: " + path.string());
    for (const auto& e : entries) {
        f.write(kMagic, 4);
        write_u32(f, Checkpoint::kFormatVersion);
        write_u32(f, static_cast<std::uint32_t>(e.name.size()));
        f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u32(f, static_cast<std::uint32_t>(e.value.shape.size()));
        for (int d : e.value.shape) write_u32(f, static_cast<std::uint32_t>(d));
        f.write(reinterpret_cast<const char*>(e.value.data.data()),
                static_cast<std::streamsize>(e.value.data.size() * sizeof(float)));
    }
}

std::vector<BlobEntry> read_blob_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw checkpoint_error("missing blob file: " + path.string());
    std::vector<BlobEntry> out;
    while (f.peek() != EOF) {
        char magic[4];
        f.read(magic, 4);
        if (!f || std::memcmp(magic, kMagic, 4) != 0)
            throw checkpoint_error("bad magic in blob: " + path.string());
        std::uint32_t version = read_u32(f, path.string());
        if (version != Checkpoint::kFormatVersion)
            throw checkpoint_error("version mismatch in " + path.string() + ": blob has v" +
                                   std::to_string(version) + ", expected v" +
                                   std::to_string(Checkpoint::kFormatVersion));
        std::uint32_t name_len = read_u32(f, path.string());
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        std::uint32_t rank = read_u32(f, path.string());
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_u32(f, path.string() + "/" + name));
        Tensor<float> t(shape);
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!f) throw checkpoint_error("truncated payload for " + name + " in " + path.string());
        out.push_back({std::move(name), std::move(t)});
    }
    return out;
}

std::string shape_field(const std::vector<int>& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += " ";
        s += std::to_string(shape[i]);
    }
    return s;
}

}  // namespace

std::vector<std::pair<int, double>> downsample_history(
    const std::vector<std::pair<int, double>>& history, std::size_t max_entries) {
    if (history.size() <= max_entries) return history;
    std::vector<std::pair<int, double>> out;
    out.reserve(max_entries);
    double stride = static_cast<double>(history.size() - 1) / static_cast<double>(max_entries - 1);
    for (std::size_t i = 0; i < max_entries; ++i) {
        auto idx = static_cast<std::size_t>(static_cast<double>(i) * stride + 0.5);
        out.push_back(history[std::min(idx, history.size() - 1)]);
    }
    return out;
}

std::filesystem::path save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::ofstream m(dir / "manifest.txt");
    if (!m) throw checkpoint_error("cannot write manifest: " + (dir / "manifest.txt").string());
    m << "format_version = " << Checkpoint::kFormatVersion << "\n";
    m << "step = " << ckpt.step << "\n";
    m << "stage = " << ckpt.stage << "\n";
    auto hist = downsample_history(ckpt.loss_history);
    m << "loss_history =";
    m.precision(10);
    for (const auto& [s, l] : hist) m << " " << s << ":" << l;
    m << "\n";
    m << "# blob shapes: component/param rank dims...\n";
    for (const auto& [comp, entries] : ckpt.components)
        for (const auto& e : entries)
            m << "blob_shape = " << comp << "/" << e.name << " " << e.value.shape.size() << " "
              << shape_field(e.value.shape) << "\n";
    m << "# run configuration\n";
    std::istringstream cfg(serialize_config(ckpt.config));
    std::string line;
    while (std::getline(cfg, line)) m << "config." << line << "\n";

    for (const auto& [comp, entries] : ckpt.components)
        write_blob_file(dir / (comp + ".bin"), entries);
    return dir;
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream m(dir / "manifest.txt");
    if (!m) throw checkpoint_error("missing manifest: " + (dir / "manifest.txt").string());

    Checkpoint ckpt;
    std::map<std::string, std::vector<int>> declared_shapes;
    std::string cfg_text;
    std::string line;
    while (std::getline(m, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("config.", 0) == 0) {
            cfg_text += line.substr(7) + "\n";
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        std::string value = line.substr(eq + 1);
        if (!value.empty() && value.front() == ' ') value.erase(0, 1);
        if (key == "format_version") {
            int v = std::stoi(value);
            if (v != Checkpoint::kFormatVersion)
                throw checkpoint_error("version mismatch: manifest has v" + std::to_string(v) +
                                       ", expected v" + std::to_string(Checkpoint::kFormatVersion));
        } else if (key == "step") {
            ckpt.step = std::stoi(value);
        } else if (key == "stage") {
            ckpt.stage = value;
        } else if (key == "loss_history") {
            std::istringstream hs(value);
            std::string tok;
            while (hs >> tok) {
                auto colon = tok.find(':');
                ckpt.loss_history.emplace_back(std::stoi(tok.substr(0, colon)),
                                               std::stod(tok.substr(colon + 1)));
            }
        } else if (key == "blob_shape") {
            std::istringstream bs(value);
            std::string full;
            int rank = 0;
            bs >> full >> rank;
            std::vector<int> shape(rank);
            for (auto& d : shape) bs >> d;
            declared_shapes[full] = std::move(shape);
        }
    }
    ckpt.config = parse_config(cfg_text);

    std::map<std::string, bool> seen;
    for (const auto& [full, shape] : declared_shapes) {
        std::string comp = full.substr(0, full.find('/'));
        if (seen[comp]) continue;
        seen[comp] = true;
        ckpt.components[comp] = read_blob_file(dir / (comp + ".bin"));
    }
    for (const auto& [full, shape] : declared_shapes) {
        auto slash = full.find('/');
        const Tensor<float>* t = ckpt.find(full.substr(0, slash), full.substr(slash + 1));
        if (!t) throw checkpoint_error("missing blob entry: " + full);
        if (t->shape != shape)
            throw checkpoint_error("shape mismatch for " + full + ": manifest says " +
                                   shape_field(shape) + ", blob has " + shape_field(t->shape));
    }
    return ckpt;
}

}  // namespace semo
