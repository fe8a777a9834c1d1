#include "semo/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace semo {

namespace {

Tensor<float> randn_like(const std::vector<int>& shape, RngStream& rng) {
    Tensor<float> t(shape);
    for (auto& x : t.data) x = static_cast<float>(rng.normal());
    return t;
}

std::string moment_name(const char* kind, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s.%04zu", kind, index);
    return buf;
}

std::vector<BlobEntry> param_blobs(const std::vector<Parameter<float>*>& params) {
    std::vector<BlobEntry> out;
    out.reserve(params.size());
    for (auto* p : params) out.push_back({p->name, p->value});
    return out;
}

void restore_component(const Checkpoint& ckpt, const std::string& comp,
                       const std::vector<Parameter<float>*>& params) {
    for (auto* p : params) {
        const Tensor<float>* t = ckpt.find(comp, p->name);
        if (!t)
            throw training_error("checkpoint missing parameter " + comp + "/" + p->name);
        if (t->shape != p->value.shape)
            throw training_error("checkpoint shape mismatch for " + comp + "/" + p->name);
        p->value = *t;
        p->grad = Tensor<float>(p->value.shape);
    }
}

// Optimizer parameter order for a stage; must match train_stage.
std::vector<Parameter<float>*> stage_params(TrainState& st, const std::string& stage) {
    if (stage == "generator") return st.generator.params();
    auto out = st.encoder.params();
    for (auto* p : st.decoder.params()) out.push_back(p);
    return out;
}

}  // namespace

void init_models(TrainState& st, const RunConfig& cfg, bool pretrain_codec) {
    cfg.validate();
    st.cfg = cfg;
    st.stage = "ae_image";
    st.step = 0;
    st.loss_history.clear();
    RngStream init_rng(cfg.seed, "init");
    st.encoder.init(cfg, init_rng.split("encoder"));
    st.decoder.init(cfg, init_rng.split("decoder"));
    st.generator.init(cfg, init_rng.split("generator"));
    st.codec.emplace(cfg);
    if (cfg.frame_codec == FrameCodec::tiny_ae && pretrain_codec)
        st.codec->tiny_ae().pretrain(cfg, 500, 16);
}

Checkpoint make_checkpoint(const TrainState& st, const Adam<float>* opt) {
    auto& s = const_cast<TrainState&>(st);
    Checkpoint ckpt;
    ckpt.config = st.cfg;
    ckpt.step = st.step;
    ckpt.stage = st.stage;
    ckpt.loss_history = st.loss_history;
    ckpt.components["encoder"] = param_blobs(s.encoder.trunk_params());
    ckpt.components["learnable_tokens"] = param_blobs(s.encoder.query_params());
    ckpt.components["decoder"] = param_blobs(s.decoder.params());
    ckpt.components["generator"] = param_blobs(s.generator.params());
    if (st.cfg.frame_codec == FrameCodec::tiny_ae)
        ckpt.components["codec"] = param_blobs(s.codec->tiny_ae().params());
    if (opt) {
        std::vector<BlobEntry> entries;
        Tensor<float> t({1, 1});
        t.data[0] = static_cast<float>(opt->step_count());
        entries.push_back({"t", std::move(t)});
        auto& mut = const_cast<Adam<float>&>(*opt);
        for (std::size_t i = 0; i < mut.first_moments().size(); ++i) {
            entries.push_back({moment_name("m", i), mut.first_moments()[i]});
            entries.push_back({moment_name("v", i), mut.second_moments()[i]});
        }
        ckpt.components["optimizer"] = std::move(entries);
    }
    return ckpt;
}

void restore_models(TrainState& st, const Checkpoint& ckpt) {
    restore_component(ckpt, "encoder", st.encoder.trunk_params());
    restore_component(ckpt, "learnable_tokens", st.encoder.query_params());
    restore_component(ckpt, "decoder", st.decoder.params());
    restore_component(ckpt, "generator", st.generator.params());
    if (st.cfg.frame_codec == FrameCodec::tiny_ae)
        restore_component(ckpt, "codec", st.codec->tiny_ae().params());
}

void restore_optimizer(const Checkpoint& ckpt, Adam<float>& opt) {
    auto it = ckpt.components.find("optimizer");
    if (it == ckpt.components.end())
        throw training_error("checkpoint has no optimizer state");
    const Tensor<float>* t = ckpt.find("optimizer", "t");
    if (!t) throw training_error("checkpoint missing optimizer/t");
    opt.set_step_count(static_cast<int>(t->data[0]));
    for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
        const Tensor<float>* m = ckpt.find("optimizer", moment_name("m", i));
        const Tensor<float>* v = ckpt.find("optimizer", moment_name("v", i));
        if (!m || !v)
            throw training_error("checkpoint missing optimizer moments for slot " +
                                 std::to_string(i));
        if (m->shape != opt.first_moments()[i].shape)
            throw training_error("optimizer moment shape mismatch at slot " + std::to_string(i));
        opt.first_moments()[i] = *m;
        opt.second_moments()[i] = *v;
    }
}

TrainState state_from_checkpoint(const Checkpoint& ckpt) {
    TrainState st;
    init_models(st, ckpt.config, /*pretrain_codec=*/false);
    restore_models(st, ckpt);
    st.stage = ckpt.stage;
    st.step = ckpt.step;
    st.loss_history = ckpt.loss_history;
    return st;
}

std::vector<PatchSeq<float>> clip_latents(const VideoClip& clip, const Codec& codec, int patch) {
    std::vector<PatchSeq<float>> out;
    out.reserve(clip.frames.size());
    for (const auto& f : clip.frames)
        out.push_back(patchify(normalize_latent(codec.encode_frame(f)), patch));
    return out;
}

double loss_autoencoder(TrainState& st, const std::vector<std::uint64_t>& clip_ids,
                        RngStream step_rng, bool video_mode, const VelocityOracle* oracle) {
    const RunConfig& cfg = st.cfg;
    auto batch = static_cast<double>(clip_ids.size());
    double total = 0.0;

    for (std::size_t b = 0; b < clip_ids.size(); ++b) {
        auto rng = step_rng.split("sample", clip_ids[b]);
        VideoClip clip = clip_by_id(cfg, clip_ids[b]);
        auto latents = clip_latents(clip, *st.codec, cfg.patch_size);
        int f = static_cast<int>(latents.size());

        int ref_idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(f)));
        std::vector<int> targets;
        if (video_mode) {
            for (int i = 0; i < f; ++i) targets.push_back(i);
        } else {
            targets.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(f))));
        }
        double ratio = sample_mask_ratio(cfg.ae_mask_range, rng);
        auto masked_ref = apply_mask(latents[static_cast<std::size_t>(ref_idx)], ratio, rng);
        std::vector<MaskedPatchSeq<float>> masked_t;
        for (int ti : targets)
            masked_t.push_back(apply_mask(latents[static_cast<std::size_t>(ti)], ratio, rng));

        auto time = static_cast<float>(rng.uniform());
        std::vector<Tensor<float>> eps, noisy, v_true;
        for (int ti : targets) {
            const auto& z = latents[static_cast<std::size_t>(ti)].tokens;
            eps.push_back(randn_like(z.shape, rng));
            noisy.push_back(noise_latent(z, time, eps.back()));
            v_true.push_back(true_velocity(z, eps.back()));
        }

        if (oracle) {
            double se = 0.0;
            std::int64_t n = 0;
            for (std::size_t i = 0; i < targets.size(); ++i) {
                const auto& z = latents[static_cast<std::size_t>(targets[i])].tokens;
                Tensor<float> pred = (*oracle)(z, eps[i]);
                for (std::int64_t j = 0; j < pred.size(); ++j) {
                    double d = static_cast<double>(pred.data[j]) - v_true[i].data[j];
                    se += d * d;
                }
                n += pred.size();
            }
            total += se / static_cast<double>(n) / batch;
            continue;
        }

        Graph<float> g;
        auto m_r = st.encoder.forward(g, g.constant(masked_ref.tokens), masked_ref.positions);
        auto z_r = g.constant(latents[static_cast<std::size_t>(ref_idx)].tokens);
        std::vector<Graph<float>::Ref> z_noisy, m_t;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            m_t.push_back(st.encoder.forward(g, g.constant(masked_t[i].tokens),
                                             masked_t[i].positions));
            z_noisy.push_back(g.constant(noisy[i]));
        }
        auto v = st.decoder.forward_frames(g, z_r, z_noisy, m_r, m_t, time, video_mode);
        Graph<float>::Ref loss = -1;
        for (std::size_t i = 0; i < v.size(); ++i) {
            auto term = g.mse(v[i], g.constant(v_true[i]));
            loss = (loss < 0) ? term : g.add(loss, term);
        }
        auto scaled =
            g.scale(loss, 1.0f / (static_cast<float>(batch) * static_cast<float>(v.size())));
        total += static_cast<double>(g.val(scaled).data[0]);
        g.backward(scaled);
    }
    if (!std::isfinite(total)) throw training_error("non-finite autoencoder loss");
    return total;
}

double loss_autoencoder_image_space(TrainState& st, const std::vector<std::uint64_t>& clip_ids,
                                    RngStream step_rng) {
    const RunConfig& cfg = st.cfg;
    auto batch = static_cast<double>(clip_ids.size());
    double total = 0.0;
    float dt = 1.0f / static_cast<float>(cfg.sample_steps);

    for (std::size_t b = 0; b < clip_ids.size(); ++b) {
        auto rng = step_rng.split("sample", clip_ids[b]);
        VideoClip clip = clip_by_id(cfg, clip_ids[b]);
        auto latents = clip_latents(clip, *st.codec, cfg.patch_size);
        int f = static_cast<int>(latents.size());

        int ref_idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(f)));
        int tgt_idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(f)));
        double ratio = sample_mask_ratio(cfg.ae_mask_range, rng);
        auto masked_ref = apply_mask(latents[static_cast<std::size_t>(ref_idx)], ratio, rng);
        auto masked_tgt = apply_mask(latents[static_cast<std::size_t>(tgt_idx)], ratio, rng);
        const auto& z_target = latents[static_cast<std::size_t>(tgt_idx)].tokens;
        Tensor<float> eps = randn_like(z_target.shape, rng);

        Graph<float> g;
        auto m_r = st.encoder.forward(g, g.input(masked_ref.tokens), masked_ref.positions);
        auto m_t = st.encoder.forward(g, g.input(masked_tgt.tokens), masked_tgt.positions);
        auto z_r = g.constant(latents[static_cast<std::size_t>(ref_idx)].tokens);
        auto z = g.constant(eps);
        for (int s = 0; s < cfg.sample_steps; ++s) {
            float time = 1.0f - static_cast<float>(s) * dt;
            auto v = st.decoder.forward_frames(g, z_r, {z}, m_r, {m_t}, time, false);
            z = g.add(z, g.scale(v[0], dt));
        }
        auto scaled = g.scale(g.mse(z, g.constant(z_target)), 1.0f / static_cast<float>(batch));
        total += static_cast<double>(g.val(scaled).data[0]);
        g.backward(scaled);
    }
    if (!std::isfinite(total)) throw training_error("non-finite image-space loss");
    return total;
}

double loss_generator(TrainState& st, const std::vector<std::uint64_t>& clip_ids,
                      RngStream step_rng, const VelocityOracle* oracle, ClipCache* cache) {
    const RunConfig& cfg = st.cfg;
    int slack = 4;
    int frames = cfg.n_prev + cfg.window + slack;
    auto batch = static_cast<double>(clip_ids.size());
    double total = 0.0;

    for (std::size_t b = 0; b < clip_ids.size(); ++b) {
        auto rng = step_rng.split("sample", clip_ids[b]);
        CachedClip local;
        CachedClip* cc = &local;
        if (cache) {
            auto it = cache->clips.find(clip_ids[b]);
            if (it != cache->clips.end()) {
                cc = &it->second;
            } else {
                cc = &cache->clips[clip_ids[b]];
            }
        }
        if (cc->latents.empty()) {
            VideoClip clip = clip_by_id(cfg, clip_ids[b], frames);
            cc->latents = clip_latents(clip, *st.codec, cfg.patch_size);
            cc->control = clip.control;
            cc->params = clip.params;
            cc->unmasked.assign(cc->latents.size(), MotionToken{});
        }

        int start = cfg.n_prev + static_cast<int>(rng.uniform_int(
                                     static_cast<std::uint64_t>(slack + 1)));
        auto w = build_window(cc->latents, cc->control, start, cfg, st.encoder, rng,
                              &cc->unmasked);
        Tensor<float> target_rows = stack_motions(w.target);
        Tensor<float> prev_rows = stack_motions(w.prev);
        auto time = static_cast<float>(rng.uniform());
        Tensor<float> eps = randn_like(target_rows.shape, rng);
        Tensor<float> noisy = noise_motion(target_rows, time, eps);
        Tensor<float> v_true = true_velocity(target_rows, eps);

        if (oracle) {
            Tensor<float> pred = (*oracle)(target_rows, eps);
            double se = 0.0;
            for (std::int64_t j = 0; j < pred.size(); ++j) {
                double d = static_cast<double>(pred.data[j]) - v_true.data[j];
                se += d * d;
            }
            total += se / static_cast<double>(pred.size()) / batch;
            continue;
        }

        Graph<float> g;
        auto v = st.generator.forward(g, g.constant(prev_rows), g.constant(noisy),
                                      g.constant(w.ref), g.constant(w.control), time);
        auto scaled =
            g.scale(g.mse(v, g.constant(v_true)), 1.0f / static_cast<float>(batch));
        total += static_cast<double>(g.val(scaled).data[0]);
        g.backward(scaled);
    }
    if (!std::isfinite(total)) throw training_error("non-finite generator loss");
    return total;
}

Checkpoint train_stage(const std::string& stage, const RunConfig& cfg, const TrainOptions& opt) {
    if (stage != "ae_image" && stage != "ae_video" && stage != "generator")
        throw training_error("unknown training stage: " + stage);
    cfg.validate();

    TrainState st;
    if (opt.resume) {
        if (opt.resume->stage != stage)
            throw training_error("resume checkpoint is for stage " + opt.resume->stage +
                                 ", not " + stage);
        st = state_from_checkpoint(*opt.resume);
    } else {
        init_models(st, cfg);
        if (stage != "ae_image") {
            std::string prereq = (stage == "ae_video") ? "ae_image" : "ae_video";
            if (!opt.prev_stage)
                throw training_error("missing prerequisite checkpoint: stage " + prereq +
                                     " must run before " + stage);
            if (opt.prev_stage->stage != prereq)
                throw training_error("prerequisite checkpoint is for stage " +
                                     opt.prev_stage->stage + ", but stage " + prereq +
                                     " must run before " + stage);
            restore_models(st, *opt.prev_stage);
        }
        st.stage = stage;
    }

    int budget = opt.steps_override;
    if (budget < 0) {
        if (stage == "ae_image") budget = cfg.steps_ae_image;
        else if (stage == "ae_video") budget = cfg.steps_ae_video;
        else budget = cfg.steps_generator;
    }
    int batch = (stage == "ae_image")   ? cfg.batch_ae_image
                : (stage == "ae_video") ? cfg.batch_ae_video
                                        : cfg.batch_generator;

    Adam<float> optimizer(stage_params(st, stage), static_cast<float>(cfg.learning_rate));
    if (opt.resume) restore_optimizer(*opt.resume, optimizer);

    // Cosine decay to a 10% floor over the configured stage budget. The
    // horizon deliberately ignores any step override so that the rate at a
    // given step is a pure function of the config, keeping interrupted and
    // resumed runs bitwise identical to uninterrupted ones.
    int horizon = (stage == "ae_image")   ? cfg.steps_ae_image
                  : (stage == "ae_video") ? cfg.steps_ae_video
                                          : cfg.steps_generator;
    auto lr_at = [&](int step) {
        double prog = std::min(1.0, static_cast<double>(step) / horizon);
        double scale = 0.1 + 0.45 * (1.0 + std::cos(prog * 3.14159265358979323846));
        return static_cast<float>(cfg.learning_rate * scale);
    };

    Dataset data = make_dataset(opt.dataset_clips, kTrainSplit, cfg);
    ClipCache cache;

    std::ofstream log;
    if (!opt.out_dir.empty()) {
        std::filesystem::create_directories(opt.out_dir);
        log.open(opt.out_dir / "log.txt", std::ios::app);
    }

    for (int step = st.step + 1; step <= budget; ++step) {
        auto t0 = std::chrono::steady_clock::now();
        auto srng = RngStream(cfg.seed, "train").split(stage).split(
            "step", static_cast<std::uint64_t>(step));
        auto data_rng = srng.split("data");
        std::vector<std::uint64_t> ids;
        ids.reserve(static_cast<std::size_t>(batch));
        for (int i = 0; i < batch; ++i)
            ids.push_back(data.train_ids[static_cast<std::size_t>(
                data_rng.uniform_int(data.train_ids.size()))]);

        optimizer.zero_grad();
        double loss;
        if (stage == "generator")
            loss = loss_generator(st, ids, srng.split("loss"), nullptr, &cache);
        else
            loss = loss_autoencoder(st, ids, srng.split("loss"), stage == "ae_video");
        if (!std::isfinite(loss))
            throw training_error("non-finite loss at step " + std::to_string(step));
        optimizer.set_lr(lr_at(step));
        optimizer.step();

        st.step = step;
        st.loss_history.emplace_back(step, loss);

        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
        if (log && (step % cfg.log_every == 0 || step == budget))
            log << step << " " << loss << " " << ms << "\n" << std::flush;
        if (!opt.out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
            save_checkpoint(make_checkpoint(st, &optimizer), opt.out_dir);
    }

    Checkpoint out = make_checkpoint(st, &optimizer);
    if (!opt.out_dir.empty()) save_checkpoint(out, opt.out_dir);
    return out;
}

}  // namespace semo
