#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "semo/evaluate.hpp"
#include "semo/image_io.hpp"
#include "semo/training.hpp"

namespace fs = std::filesystem;
using namespace semo;

namespace {

constexpr int kExitUsage = 64;
constexpr int kExitCheckpoint = 66;
constexpr int kExitRuntime = 70;

struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig resolve_config(const std::string& path, std::int64_t seed_override) {
    RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.validate();
    return cfg;
}

void write_manifest(const fs::path& out, const RunConfig& cfg, const std::string& command) {
    fs::create_directories(out);
    write_text_file(out / "manifest.txt",
                    "command = " + command + "\n" + serialize_config(cfg));
}

Checkpoint load_ckpt(const std::string& dir) {
    try {
        return load_checkpoint(dir);
    } catch (const checkpoint_error& e) {
        throw usage_error(std::string("checkpoint: ") + e.what());
    }
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    if (out.empty()) throw usage_error("bad flags: empty value list");
    return out;
}

std::vector<std::uint64_t> eval_ids(const RunConfig& cfg, int n) {
    Dataset data = make_dataset(kDatasetClips, kTrainSplit, cfg);
    std::vector<std::uint64_t> ids = data.eval_ids;
    if (n > 0 && static_cast<int>(ids.size()) > n) ids.resize(static_cast<std::size_t>(n));
    return ids;
}

void export_clip(const fs::path& out, const std::string& name, const std::vector<Frame>& frames) {
    fs::create_directories(out / "clips");
    fs::create_directories(out / "frames");
    write_gif(out / "clips" / (name + ".gif"), frames);
    for (std::size_t k = 0; k < frames.size(); ++k) {
        char fname[64];
        std::snprintf(fname, sizeof(fname), "%s_%03zu.png", name.c_str(), k);
        write_png(out / "frames" / fname, frames[k]);
    }
}

int run(int argc, char** argv) {
    CLI::App app{"SeMo desk-scale pipeline: synthetic data, two-stage training, "
                 "reconstruction, animation and the ablation harnesses"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ckpt_dir, ckpt_ae, ckpt_gen, ckpt_masked, ckpt_unmasked;
    std::int64_t seed = -1;
    int clips = 4, frames = -1, steps_image = -1, steps_video = -1, steps_gen = -1;
    int pairs = 20;
    double ratio = 0.0;
    std::string axis = "token_dim", values = "32,64,128", ratios = "0,0.3,0.6,0.9";
    std::string stage = "both";
    bool generic = false;

    auto add_common = [&](CLI::App* cmd, bool need_out = true) {
        cmd->add_option("--config", config_path, "config file (key = value)");
        cmd->add_option("--seed", seed, "seed override");
        auto* o = cmd->add_option("--out", out_dir, "output directory");
        if (need_out) o->required();
    };

    auto* c_synth = app.add_subcommand("synth", "render synthetic clips to GIF/PNG");
    add_common(c_synth);
    c_synth->add_option("--clips", clips, "number of clips");
    c_synth->add_option("--frames", frames, "frames per clip");
    c_synth->add_flag("--generic", generic, "generic rigid subjects instead of faces");

    auto* c_ae = app.add_subcommand("train-ae", "train the motion autoencoder stages");
    add_common(c_ae);
    c_ae->add_option("--stage", stage, "image | video | both");
    c_ae->add_option("--steps-image", steps_image, "image-stage step override");
    c_ae->add_option("--steps-video", steps_video, "video-stage step override");
    c_ae->add_option("--resume", ckpt_dir, "checkpoint directory to resume from");

    auto* c_gen = app.add_subcommand("train-gen", "train the motion generator");
    add_common(c_gen);
    c_gen->add_option("--ckpt-ae", ckpt_ae, "autoencoder checkpoint")->required();
    c_gen->add_option("--steps", steps_gen, "step override");

    auto* c_rec = app.add_subcommand("reconstruct", "reconstruct held-out clips");
    add_common(c_rec);
    c_rec->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    c_rec->add_option("--clips", clips, "number of eval clips");
    c_rec->add_option("--ratio", ratio, "forced encoder mask ratio");

    auto* c_anim = app.add_subcommand("animate", "control-driven generation via rollout");
    add_common(c_anim);
    c_anim->add_option("--ckpt-ae", ckpt_ae, "autoencoder checkpoint")->required();
    c_anim->add_option("--ckpt-gen", ckpt_gen, "generator checkpoint")->required();
    c_anim->add_option("--frames", frames, "frames to generate")->required();

    auto* c_sweep = app.add_subcommand("sweep", "capacity sweep over motion-token settings");
    add_common(c_sweep);
    c_sweep->add_option("--axis", axis, "token_dim | token_num | mask_range");
    c_sweep->add_option("--values", values, "comma-separated axis values");
    c_sweep->add_option("--steps-image", steps_image, "per-cell image-stage steps");
    c_sweep->add_option("--steps-video", steps_video, "per-cell video-stage steps");

    auto* c_mask = app.add_subcommand("mask-ablate", "masked vs unmasked training ablation");
    add_common(c_mask);
    c_mask->add_option("--ckpt-masked", ckpt_masked, "checkpoint of the masked variant");
    c_mask->add_option("--ckpt-unmasked", ckpt_unmasked, "checkpoint of the unmasked variant");
    c_mask->add_option("--pairs", pairs, "cross-identity transfer pairs");
    c_mask->add_option("--steps-image", steps_image, "image-stage steps when training in place");
    c_mask->add_option("--steps-video", steps_video, "video-stage steps when training in place");

    auto* c_attn = app.add_subcommand("attn-viz", "export decoder attention maps");
    add_common(c_attn);
    c_attn->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    c_attn->add_option("--clips", clips, "probe clips");

    auto* c_probe = app.add_subcommand("probe-mask", "PSNR under forced high mask ratios");
    add_common(c_probe);
    c_probe->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    c_probe->add_option("--ratios", ratios, "comma-separated mask ratios");
    c_probe->add_option("--clips", clips, "eval clips");

    if (argc > 1 && argv[1][0] != '-') {
        bool known = false;
        for (const auto* sub : app.get_subcommands({}))
            if (sub->get_name() == argv[1]) known = true;
        if (!known) {
            std::cerr << "error: unknown command " << argv[1] << "\n";
            return kExitUsage;
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: bad flags: " << e.what() << "\n";
        return kExitUsage;
    }

    const fs::path out(out_dir);

    if (app.got_subcommand(c_synth)) {
        RunConfig cfg = resolve_config(config_path, seed);
        write_manifest(out, cfg, "synth");
        auto data_rng = RngStream(cfg.seed, "data");
        for (int i = 0; i < clips; ++i) {
            auto rng = data_rng.split("clip", static_cast<std::uint64_t>(i));
            VideoClip clip = generic ? synth_generic_clip(cfg, rng, frames)
                                     : synth_clip(cfg, rng, frames);
            export_clip(out, "clip" + std::to_string(i), clip.frames);
        }
        return 0;
    }

    if (app.got_subcommand(c_ae)) {
        RunConfig cfg = resolve_config(config_path, seed);
        write_manifest(out, cfg, "train-ae");
        if (stage != "image" && stage != "video" && stage != "both")
            throw usage_error("bad flags: --stage must be image, video or both");
        Checkpoint ck;
        bool have = false;
        if (!ckpt_dir.empty()) {
            ck = load_ckpt(ckpt_dir);
            have = true;
        }
        if (stage != "video") {
            TrainOptions to;
            to.out_dir = out;
            to.steps_override = steps_image;
            if (have) to.resume = &ck;
            ck = train_stage("ae_image", cfg, to);
            have = true;
        }
        if (stage != "image") {
            TrainOptions to;
            to.out_dir = out;
            to.steps_override = steps_video;
            if (have && ck.stage == "ae_video")
                to.resume = &ck;
            else if (have)
                to.prev_stage = &ck;
            else
                throw usage_error("checkpoint: stage video requires --resume or a prior image run");
            ck = train_stage("ae_video", cfg, to);
        }
        return 0;
    }

    if (app.got_subcommand(c_gen)) {
        Checkpoint prev = load_ckpt(ckpt_ae);
        RunConfig cfg = prev.config;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        write_manifest(out, cfg, "train-gen");
        TrainOptions to;
        to.out_dir = out;
        to.steps_override = steps_gen;
        to.prev_stage = &prev;
        train_stage("generator", cfg, to);
        return 0;
    }

    if (app.got_subcommand(c_rec)) {
        Checkpoint ck = load_ckpt(ckpt_dir);
        TrainState st = state_from_checkpoint(ck);
        write_manifest(out, st.cfg, "reconstruct");
        auto ids = eval_ids(st.cfg, clips);
        RngStream rng(st.cfg.seed, "reconstruct");
        std::vector<std::vector<Frame>> truth, recon;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            VideoClip clip = clip_by_id(st.cfg, ids[i]);
            auto r = reconstruct_clip(st, clip, 0, ratio,
                                      rng.split("clip", static_cast<std::uint64_t>(i)));
            export_clip(out, "recon" + std::to_string(i), r);
            export_clip(out, "truth" + std::to_string(i), clip.frames);
            recon.push_back(std::move(r));
            truth.push_back(std::move(clip.frames));
        }
        MetricReport rep = metric_report(truth, recon);
        std::ostringstream csv;
        csv << "clip,psnr,ssim,l1\n";
        for (std::size_t i = 0; i < rep.per_clip.size(); ++i)
            csv << i << "," << rep.per_clip[i].psnr << "," << rep.per_clip[i].ssim << ","
                << rep.per_clip[i].l1 << "\n";
        csv << "mean," << rep.psnr << "," << rep.ssim << "," << rep.l1 << "\n";
        write_text_file(out / "metrics.csv", csv.str());
        std::cout << "psnr " << rep.psnr << " ssim " << rep.ssim << "\n";
        return 0;
    }

    if (app.got_subcommand(c_anim)) {
        Checkpoint ck_ae = load_ckpt(ckpt_ae);
        Checkpoint ck_gen = load_ckpt(ckpt_gen);
        TrainState st = state_from_checkpoint(ck_ae);
        {
            TrainState gen_state = state_from_checkpoint(ck_gen);
            st.generator = std::move(gen_state.generator);
        }
        write_manifest(out, st.cfg, "animate");
        auto ids = eval_ids(st.cfg, 1);
        VideoClip ref_clip = clip_by_id(st.cfg, ids[0], frames);
        RngStream rng(st.cfg.seed, "animate");
        auto decoded = animate(st, ref_clip, ref_clip.control, frames, rng);
        export_clip(out, "animate", decoded);
        return 0;
    }

    if (app.got_subcommand(c_sweep)) {
        RunConfig cfg = resolve_config(config_path, seed);
        write_manifest(out, cfg, "sweep");
        SweepAxis ax;
        if (axis == "token_dim") ax = SweepAxis::token_dim;
        else if (axis == "token_num") ax = SweepAxis::token_num;
        else if (axis == "mask_range") ax = SweepAxis::mask_range;
        else throw usage_error("bad flags: unknown sweep axis " + axis);
        SweepBudget budget;
        if (steps_image > 0) budget.steps_image = steps_image;
        if (steps_video > 0) budget.steps_video = steps_video;
        SweepReport rep = run_capacity_sweep(ax, parse_values(values), cfg, budget);
        write_text_file(out / "metrics.csv", sweep_csv(rep));
        std::cout << sweep_csv(rep);
        return 0;
    }

    if (app.got_subcommand(c_mask)) {
        RunConfig cfg = resolve_config(config_path, seed);
        write_manifest(out, cfg, "mask-ablate");
        if (ckpt_masked.empty() != ckpt_unmasked.empty())
            throw usage_error("checkpoint: both --ckpt-masked and --ckpt-unmasked are required");
        TrainState masked, unmasked;
        if (!ckpt_masked.empty()) {
            masked = state_from_checkpoint(load_ckpt(ckpt_masked));
            unmasked = state_from_checkpoint(load_ckpt(ckpt_unmasked));
        } else {
            auto train_variant = [&](double hi) {
                RunConfig c = cfg;
                c.ae_mask_range = {0.0, hi};
                TrainOptions to;
                to.steps_override = steps_image;
                Checkpoint ck = train_stage("ae_image", c, to);
                if (steps_video != 0) {
                    TrainOptions tv;
                    tv.steps_override = steps_video;
                    tv.prev_stage = &ck;
                    ck = train_stage("ae_video", c, tv);
                }
                return state_from_checkpoint(ck);
            };
            masked = train_variant(cfg.ae_mask_range.hi > 0 ? cfg.ae_mask_range.hi : 0.9);
            unmasked = train_variant(0.0);
        }
        auto ids = eval_ids(masked.cfg, -1);
        MaskAblationReport rep =
            mask_ablation(masked, unmasked, ids, pairs, RngStream(cfg.seed, "ablate"));
        write_text_file(out / "metrics.csv", mask_ablation_csv(rep));
        std::cout << mask_ablation_csv(rep);
        return 0;
    }

    if (app.got_subcommand(c_attn)) {
        Checkpoint ck = load_ckpt(ckpt_dir);
        TrainState st = state_from_checkpoint(ck);
        write_manifest(out, st.cfg, "attn-viz");
        auto ids = eval_ids(st.cfg, clips);
        RngStream rng(st.cfg.seed, "attn");
        std::ostringstream csv;
        csv << "clip,bbox_fraction,bbox_area_fraction\n";
        for (std::size_t i = 0; i < ids.size(); ++i) {
            VideoClip clip = clip_by_id(st.cfg, ids[i]);
            auto maps = extract_attention(st, clip, 0, static_cast<int>(clip.frames.size()) - 1,
                                          0.5, rng.split("clip", static_cast<std::uint64_t>(i)));
            export_attention_panels(maps, out / "attn" / ("clip" + std::to_string(i)));
            BBox box = subject_bbox(clip.params.subject, st.cfg.image_size);
            csv << i << "," << attention_bbox_fraction(maps, box, st.cfg.image_size) << ","
                << box.area_fraction(st.cfg.image_size) << "\n";
        }
        write_text_file(out / "metrics.csv", csv.str());
        return 0;
    }

    if (app.got_subcommand(c_probe)) {
        Checkpoint ck = load_ckpt(ckpt_dir);
        TrainState st = state_from_checkpoint(ck);
        write_manifest(out, st.cfg, "probe-mask");
        auto ids = eval_ids(st.cfg, clips);
        auto rows = high_mask_probe(st, ids, parse_values(ratios),
                                    RngStream(st.cfg.seed, "probe"));
        write_text_file(out / "metrics.csv", mask_probe_csv(rows));
        std::cout << mask_probe_csv(rows);
        return 0;
    }

    std::cerr << "error: unknown command\n";
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const usage_error& e) {
        std::string what = e.what();
        std::cerr << "error: " << what << "\n";
        return what.rfind("checkpoint:", 0) == 0 ? kExitCheckpoint : kExitUsage;
    } catch (const checkpoint_error& e) {
        std::cerr << "error: checkpoint: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const config_error& e) {
        std::cerr << "error: bad flags: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << e.what() << "\n";
        return kExitRuntime;
    }
}
