#include "semo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace semo {

std::string to_string(FrameCodec c) {
    return c == FrameCodec::space_to_depth ? "space_to_depth" : "tiny_ae";
}

FrameCodec frame_codec_from_string(const std::string& s) {
    if (s == "space_to_depth") return FrameCodec::space_to_depth;
    if (s == "tiny_ae") return FrameCodec::tiny_ae;
    throw config_error("frame_codec: unknown value '" + s + "'");
}

void RunConfig::validate() const {
    auto positive = [](const char* key, auto v) {
        if (v < 1) throw config_error(std::string(key) + ": must be >= 1");
    };
    if (image_size < 16) throw config_error("image_size: must be >= 16");
    if (image_size % 4 != 0) throw config_error("image_size: must be divisible by 4");
    positive("codec_latent_channels", codec_latent_channels);
    positive("patch_size", patch_size);
    if (latent_side() % patch_size != 0)
        throw config_error("patch_size: must divide the latent grid side (" +
                           std::to_string(latent_side()) + ")");
    positive("motion_tokens", motion_tokens);
    positive("motion_dim", motion_dim);
    positive("encoder_layers", encoder_layers);
    positive("encoder_dim", encoder_dim);
    positive("encoder_heads", encoder_heads);
    if (encoder_dim % encoder_heads != 0) throw config_error("encoder_heads: must divide encoder_dim");
    positive("decoder_layers", decoder_layers);
    positive("decoder_dim", decoder_dim);
    positive("decoder_heads", decoder_heads);
    if (decoder_dim % decoder_heads != 0) throw config_error("decoder_heads: must divide decoder_dim");
    positive("generator_layers", generator_layers);
    positive("generator_dim", generator_dim);
    positive("generator_heads", generator_heads);
    if (generator_dim % generator_heads != 0)
        throw config_error("generator_heads: must divide generator_dim");
    positive("frames_per_clip", frames_per_clip);
    auto check_range = [](const char* key, const MaskRange& r) {
        if (r.lo < 0.0 || r.hi > 1.0) throw config_error(std::string(key) + ": must lie in [0,1]");
        if (r.lo > r.hi) throw config_error(std::string(key) + ": mask range lo>hi");
    };
    check_range("ae_mask_range", ae_mask_range);
    check_range("gen_mask_range", gen_mask_range);
    if (learning_rate <= 0.0) throw config_error("learning_rate: must be > 0");
    positive("sample_steps", sample_steps);
    positive("eval_avg", eval_avg);
    positive("window", window);
    positive("n_prev", n_prev);
    positive("control_dim", control_dim);
    if (control_noise < 0.0) throw config_error("control_noise: must be >= 0");
    positive("batch_ae_image", batch_ae_image);
    positive("batch_ae_video", batch_ae_video);
    positive("batch_generator", batch_generator);
    positive("steps_ae_image", steps_ae_image);
    positive("steps_ae_video", steps_ae_video);
    positive("steps_generator", steps_generator);
    positive("checkpoint_every", checkpoint_every);
    positive("log_every", log_every);
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return static_cast<int>(x);
    } catch (const std::exception&) {
        throw config_error(key + ": expected integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw config_error(key + ": expected unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw config_error(key + ": expected number, got '" + v + "'");
    }
}

// Accepts "[lo,hi]" or "lo,hi".
MaskRange parse_range(const std::string& key, std::string v) {
    if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    auto comma = v.find(',');
    if (comma == std::string::npos)
        throw config_error(key + ": expected '[lo,hi]', got '" + v + "'");
    MaskRange r;
    r.lo = parse_double(key, trim(v.substr(0, comma)));
    r.hi = parse_double(key, trim(v.substr(comma + 1)));
    return r;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"image_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.image_size = parse_int(k, v); }},
        {"frame_codec", [](RunConfig& c, const std::string&, const std::string& v) { c.frame_codec = frame_codec_from_string(v); }},
        {"codec_latent_channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.codec_latent_channels = parse_int(k, v); }},
        {"patch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.patch_size = parse_int(k, v); }},
        {"motion_tokens", [](RunConfig& c, const std::string& k, const std::string& v) { c.motion_tokens = parse_int(k, v); }},
        {"motion_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.motion_dim = parse_int(k, v); }},
        {"encoder_layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder_layers = parse_int(k, v); }},
        {"encoder_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder_dim = parse_int(k, v); }},
        {"encoder_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder_heads = parse_int(k, v); }},
        {"decoder_layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.decoder_layers = parse_int(k, v); }},
        {"decoder_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.decoder_dim = parse_int(k, v); }},
        {"decoder_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.decoder_heads = parse_int(k, v); }},
        {"generator_layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.generator_layers = parse_int(k, v); }},
        {"generator_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.generator_dim = parse_int(k, v); }},
        {"generator_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.generator_heads = parse_int(k, v); }},
        {"frames_per_clip", [](RunConfig& c, const std::string& k, const std::string& v) { c.frames_per_clip = parse_int(k, v); }},
        {"ae_mask_range", [](RunConfig& c, const std::string& k, const std::string& v) { c.ae_mask_range = parse_range(k, v); }},
        {"gen_mask_range", [](RunConfig& c, const std::string& k, const std::string& v) { c.gen_mask_range = parse_range(k, v); }},
        {"learning_rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.learning_rate = parse_double(k, v); }},
        {"sample_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.sample_steps = parse_int(k, v); }},
        {"eval_avg", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_avg = parse_int(k, v); }},
        {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); }},
        {"window", [](RunConfig& c, const std::string& k, const std::string& v) { c.window = parse_int(k, v); }},
        {"n_prev", [](RunConfig& c, const std::string& k, const std::string& v) { c.n_prev = parse_int(k, v); }},
        {"control_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.control_dim = parse_int(k, v); }},
        {"control_noise", [](RunConfig& c, const std::string& k, const std::string& v) { c.control_noise = parse_double(k, v); }},
        {"batch_ae_image", [](RunConfig& c, const std::string& k, const std::string& v) { c.batch_ae_image = parse_int(k, v); }},
        {"batch_ae_video", [](RunConfig& c, const std::string& k, const std::string& v) { c.batch_ae_video = parse_int(k, v); }},
        {"batch_generator", [](RunConfig& c, const std::string& k, const std::string& v) { c.batch_generator = parse_int(k, v); }},
        {"steps_ae_image", [](RunConfig& c, const std::string& k, const std::string& v) { c.steps_ae_image = parse_int(k, v); }},
        {"steps_ae_video", [](RunConfig& c, const std::string& k, const std::string& v) { c.steps_ae_video = parse_int(k, v); }},
        {"steps_generator", [](RunConfig& c, const std::string& k, const std::string& v) { c.steps_generator = parse_int(k, v); }},
        {"checkpoint_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.checkpoint_every = parse_int(k, v); }},
        {"log_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.log_every = parse_int(k, v); }},
    };

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) throw config_error(key + ": unknown key");
        it->second(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw config_error("config file not found: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream o;
    o.precision(17);
    o << "image_size = " << cfg.image_size << "\n";
    o << "frame_codec = " << to_string(cfg.frame_codec) << "\n";
    o << "codec_latent_channels = " << cfg.codec_latent_channels << "\n";
    o << "patch_size = " << cfg.patch_size << "\n";
    o << "motion_tokens = " << cfg.motion_tokens << "\n";
    o << "motion_dim = " << cfg.motion_dim << "\n";
    o << "encoder_layers = " << cfg.encoder_layers << "\n";
    o << "encoder_dim = " << cfg.encoder_dim << "\n";
    o << "encoder_heads = " << cfg.encoder_heads << "\n";
    o << "decoder_layers = " << cfg.decoder_layers << "\n";
    o << "decoder_dim = " << cfg.decoder_dim << "\n";
    o << "decoder_heads = " << cfg.decoder_heads << "\n";
    o << "generator_layers = " << cfg.generator_layers << "\n";
    o << "generator_dim = " << cfg.generator_dim << "\n";
    o << "generator_heads = " << cfg.generator_heads << "\n";
    o << "frames_per_clip = " << cfg.frames_per_clip << "\n";
    o << "ae_mask_range = [" << cfg.ae_mask_range.lo << "," << cfg.ae_mask_range.hi << "]\n";
    o << "gen_mask_range = [" << cfg.gen_mask_range.lo << "," << cfg.gen_mask_range.hi << "]\n";
    o << "learning_rate = " << cfg.learning_rate << "\n";
    o << "sample_steps = " << cfg.sample_steps << "\n";
    o << "eval_avg = " << cfg.eval_avg << "\n";
    o << "seed = " << cfg.seed << "\n";
    o << "window = " << cfg.window << "\n";
    o << "n_prev = " << cfg.n_prev << "\n";
    o << "control_dim = " << cfg.control_dim << "\n";
    o << "control_noise = " << cfg.control_noise << "\n";
    o << "batch_ae_image = " << cfg.batch_ae_image << "\n";
    o << "batch_ae_video = " << cfg.batch_ae_video << "\n";
    o << "batch_generator = " << cfg.batch_generator << "\n";
    o << "steps_ae_image = " << cfg.steps_ae_image << "\n";
    o << "steps_ae_video = " << cfg.steps_ae_video << "\n";
    o << "steps_generator = " << cfg.steps_generator << "\n";
    o << "checkpoint_every = " << cfg.checkpoint_every << "\n";
    o << "log_every = " << cfg.log_every << "\n";
    return o.str();
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot write config: " + path.string());
    f << serialize_config(cfg);
}

}  // namespace semo
