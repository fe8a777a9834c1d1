#include "semo/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "semo/image_io.hpp"

namespace semo {

namespace {

MotionToken encode_with_ratio(TrainState& st, const PatchSeq<float>& patches, double ratio,
                              RngStream& rng) {
    if (ratio <= 0.0) {
        MaskedPatchSeq<float> none;
        none.tokens = patches.tokens;
        none.positions = patches.positions;
        return st.encoder.encode_motion(none);
    }
    auto masked = apply_mask(patches, ratio, rng);
    return st.encoder.encode_motion(masked);
}

int grid_side_of(const RunConfig& cfg) { return cfg.latent_side() / cfg.patch_size; }

// Decode an arbitrary-length motion sequence against one reference,
// temporal-aligning within chunks of frames_per_clip.
std::vector<Frame> decode_motion_seq(TrainState& st, const PatchSeq<float>& z_r,
                                     const MotionToken& m_r,
                                     const std::vector<MotionToken>& motions, RngStream rng) {
    const RunConfig& cfg = st.cfg;
    std::vector<Frame> out;
    int chunk = std::max(1, cfg.frames_per_clip);
    int n = static_cast<int>(motions.size());
    for (int start = 0, idx = 0; start < n; start += chunk, ++idx) {
        int count = std::min(chunk, n - start);
        std::vector<MotionToken> sub(motions.begin() + start, motions.begin() + start + count);
        auto latents = decode_frames(st.decoder, z_r, m_r, sub, cfg.sample_steps,
                                     rng.split("chunk", static_cast<std::uint64_t>(idx)),
                                     count > 1, grid_side_of(cfg), cfg.patch_size,
                                     cfg.latent_channels());
        for (auto& l : latents) out.push_back(clamp01(st.codec->decode_frame(denormalize_latent(l))));
    }
    return out;
}

}  // namespace

std::vector<Frame> reconstruct_clip(TrainState& st, const VideoClip& clip, int ref_idx,
                                    double mask_ratio, RngStream rng) {
    const RunConfig& cfg = st.cfg;
    if (clip.frames.empty()) throw eval_error("reconstruct_clip: empty clip");
    if (ref_idx < 0 || ref_idx >= static_cast<int>(clip.frames.size()))
        throw eval_error("reconstruct_clip: reference index out of range");
    auto latents = clip_latents(clip, *st.codec, cfg.patch_size);

    auto mask_rng = rng.split("mask");
    MotionToken m_r = encode_with_ratio(st, latents[static_cast<std::size_t>(ref_idx)],
                                        mask_ratio, mask_rng);
    std::vector<MotionToken> m_t;
    m_t.reserve(latents.size());
    for (auto& l : latents) m_t.push_back(encode_with_ratio(st, l, mask_ratio, mask_rng));

    // The Euler solve is deterministic given its init noise, so the sample
    // spread comes entirely from that draw. Averaging a few solves in pixel
    // space approximates the posterior mean frame.
    std::vector<Frame> out;
    for (int k = 0; k < cfg.eval_avg; ++k) {
        auto dec = decode_frames(st.decoder, latents[static_cast<std::size_t>(ref_idx)], m_r,
                                 m_t, cfg.sample_steps,
                                 rng.split("noise", static_cast<std::uint64_t>(k)),
                                 latents.size() > 1, grid_side_of(cfg), cfg.patch_size,
                                 cfg.latent_channels());
        if (out.empty()) out.resize(dec.size());
        for (std::size_t f = 0; f < dec.size(); ++f) {
            Frame px = st.codec->decode_frame(denormalize_latent(dec[f]));
            if (k == 0) {
                out[f] = std::move(px);
            } else {
                for (std::size_t j = 0; j < px.data.size(); ++j) out[f].data[j] += px.data[j];
            }
        }
    }
    for (auto& f : out) {
        for (auto& v : f.data) v /= static_cast<float>(cfg.eval_avg);
        f = clamp01(f);
    }
    return out;
}

MetricReport evaluate_reconstruction(TrainState& st, const std::vector<std::uint64_t>& ids,
                                     double mask_ratio, RngStream rng) {
    if (ids.empty()) throw eval_error("evaluate_reconstruction: no clips");
    std::vector<std::vector<Frame>> truth, recon;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        VideoClip clip = clip_by_id(st.cfg, ids[i]);
        recon.push_back(reconstruct_clip(st, clip, 0, mask_ratio,
                                         rng.split("clip", static_cast<std::uint64_t>(i))));
        truth.push_back(std::move(clip.frames));
    }
    return metric_report(truth, recon);
}

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::token_dim: return "token_dim";
        case SweepAxis::token_num: return "token_num";
        case SweepAxis::mask_range: return "mask_range";
    }
    return "unknown";
}

SweepCell run_sweep_cell(const RunConfig& cfg, const SweepBudget& budget) {
    SweepCell cell;
    char label[48];
    std::snprintf(label, sizeof(label), "T%dD%d", cfg.motion_tokens, cfg.motion_dim);
    cell.label = label;
    try {
        TrainOptions to;
        to.steps_override = budget.steps_image;
        to.dataset_clips = budget.dataset_clips;
        Checkpoint ck = train_stage("ae_image", cfg, to);
        if (budget.steps_video > 0) {
            TrainOptions tv;
            tv.steps_override = budget.steps_video;
            tv.dataset_clips = budget.dataset_clips;
            tv.prev_stage = &ck;
            ck = train_stage("ae_video", cfg, tv);
        }
        TrainState st = state_from_checkpoint(ck);
        Dataset data = make_dataset(budget.dataset_clips, kTrainSplit, cfg);
        std::vector<std::uint64_t> eval_ids(
            data.eval_ids.begin(),
            data.eval_ids.begin() +
                std::min<std::size_t>(data.eval_ids.size(),
                                      static_cast<std::size_t>(budget.eval_clips)));
        cell.metrics =
            evaluate_reconstruction(st, eval_ids, 0.0, RngStream(cfg.seed, "sweep-eval"));
    } catch (const std::exception& e) {
        cell.diverged = true;
        cell.error = e.what();
    }
    return cell;
}

SweepReport run_capacity_sweep(SweepAxis axis, const std::vector<double>& values,
                               const RunConfig& base, const SweepBudget& budget) {
    if (values.empty()) throw eval_error("run_capacity_sweep: no axis values");
    SweepReport report;
    report.axis = axis;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    for (double v : sorted) {
        RunConfig cfg = base;
        if (axis == SweepAxis::token_dim) cfg.motion_dim = static_cast<int>(v);
        else if (axis == SweepAxis::token_num) cfg.motion_tokens = static_cast<int>(v);
        else cfg.ae_mask_range.hi = v;
        SweepCell cell = run_sweep_cell(cfg, budget);
        cell.axis_value = v;
        if (axis == SweepAxis::mask_range) {
            char label[48];
            std::snprintf(label, sizeof(label), "M%.2f", v);
            cell.label = label;
        }
        report.rows.push_back(std::move(cell));
    }
    for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
        if (report.rows[i].diverged || report.rows[i + 1].diverged) continue;
        ++report.total_pairs;
        if (report.rows[i + 1].metrics.psnr >= report.rows[i].metrics.psnr)
            ++report.nondecreasing_pairs;
    }
    return report;
}

std::string sweep_csv(const SweepReport& report) {
    std::ostringstream out;
    out << "label,axis," << "axis_value,psnr,ssim,l1,status\n";
    for (const auto& r : report.rows) {
        out << r.label << "," << to_string(report.axis) << "," << r.axis_value << ",";
        if (r.diverged) {
            out << ",,," << "diverged\n";
        } else {
            out << r.metrics.psnr << "," << r.metrics.ssim << "," << r.metrics.l1 << ",ok\n";
        }
    }
    out << "# nondecreasing_pairs " << report.nondecreasing_pairs << " of " << report.total_pairs
        << "\n";
    return out.str();
}

double transfer_leakage(TrainState& st, const std::vector<std::uint64_t>& ids, int n_pairs,
                        RngStream rng, bool same_identity) {
    const RunConfig& cfg = st.cfg;
    if (ids.size() < 2 && !same_identity)
        throw eval_error("transfer_leakage: need at least two identities");
    double total = 0.0;
    for (int p = 0; p < n_pairs; ++p) {
        auto prng = rng.split("pair", static_cast<std::uint64_t>(p));
        std::uint64_t id_a = ids[static_cast<std::size_t>(prng.uniform_int(ids.size()))];
        std::uint64_t id_b = id_a;
        if (!same_identity) {
            VideoClip probe_a = clip_by_id(cfg, id_a, 1);
            for (int tries = 0; tries < 32; ++tries) {
                id_b = ids[static_cast<std::size_t>(prng.uniform_int(ids.size()))];
                if (id_b == id_a) continue;
                VideoClip probe_b = clip_by_id(cfg, id_b, 1);
                if (probe_b.params.subject.bg_pattern != probe_a.params.subject.bg_pattern) break;
            }
        }
        VideoClip clip_a = clip_by_id(cfg, id_a);
        VideoClip clip_b = clip_by_id(cfg, id_b);
        auto lat_a = clip_latents(clip_a, *st.codec, cfg.patch_size);
        auto lat_b = clip_latents(clip_b, *st.codec, cfg.patch_size);

        auto mrng = prng.split("mask");
        MotionToken m_r = encode_with_ratio(st, lat_b[0], 0.0, mrng);
        std::vector<MotionToken> m_t;
        for (auto& l : lat_a) m_t.push_back(encode_with_ratio(st, l, 0.0, mrng));

        auto dec = decode_frames(st.decoder, lat_b[0], m_r, m_t, cfg.sample_steps,
                                 prng.split("noise"), lat_a.size() > 1, grid_side_of(cfg),
                                 cfg.patch_size, cfg.latent_channels());

        auto mask = background_mask(clip_b.params.subject, cfg.image_size);
        const Frame& bg = clip_b.frames[0];
        double sum = 0.0;
        std::int64_t count = 0;
        for (auto& l : dec) {
            Frame out = clamp01(st.codec->decode_frame(denormalize_latent(l)));
            for (int px = 0; px < cfg.image_size * cfg.image_size; ++px) {
                if (!mask[static_cast<std::size_t>(px)]) continue;
                for (int c = 0; c < 3; ++c) {
                    sum += std::abs(out.data[static_cast<std::size_t>(px) * 3 + c] -
                                    bg.data[static_cast<std::size_t>(px) * 3 + c]);
                    ++count;
                }
            }
        }
        if (count == 0) throw eval_error("transfer_leakage: empty background mask");
        total += sum / static_cast<double>(count);
    }
    return total / n_pairs;
}

MaskAblationReport mask_ablation(TrainState& masked_ae, TrainState& unmasked_ae,
                                 const std::vector<std::uint64_t>& ids, int n_pairs,
                                 RngStream rng) {
    MaskAblationReport report;
    report.pairs = n_pairs;
    std::vector<std::uint64_t> recon_ids(
        ids.begin(), ids.begin() + std::min<std::size_t>(ids.size(), 10));
    report.masked.name = "masked";
    report.masked.recon_psnr =
        evaluate_reconstruction(masked_ae, recon_ids, 0.0, rng.split("recon")).psnr;
    report.masked.leakage = transfer_leakage(masked_ae, ids, n_pairs, rng.split("pairs"));
    report.unmasked.name = "unmasked";
    report.unmasked.recon_psnr =
        evaluate_reconstruction(unmasked_ae, recon_ids, 0.0, rng.split("recon")).psnr;
    report.unmasked.leakage = transfer_leakage(unmasked_ae, ids, n_pairs, rng.split("pairs"));
    return report;
}

std::string mask_ablation_csv(const MaskAblationReport& report) {
    std::ostringstream out;
    out << "variant,recon_psnr,leakage,pairs\n";
    for (const auto* v : {&report.masked, &report.unmasked})
        out << v->name << "," << v->recon_psnr << "," << v->leakage << "," << report.pairs
            << "\n";
    return out.str();
}

AttentionMaps extract_attention(TrainState& st, const VideoClip& clip, int ref_idx,
                                int target_idx, double time, RngStream rng) {
    const RunConfig& cfg = st.cfg;
    auto latents = clip_latents(clip, *st.codec, cfg.patch_size);
    auto mrng = rng.split("mask");
    MotionToken m_r = encode_with_ratio(st, latents[static_cast<std::size_t>(ref_idx)], 0.0, mrng);
    MotionToken m_t =
        encode_with_ratio(st, latents[static_cast<std::size_t>(target_idx)], 0.0, mrng);

    const auto& z = latents[static_cast<std::size_t>(target_idx)].tokens;
    Tensor<float> eps(z.shape);
    auto nrng = rng.split("noise");
    for (auto& x : eps.data) x = static_cast<float>(nrng.normal());
    Tensor<float> noisy = noise_latent(z, static_cast<float>(time), eps);

    Graph<float> g;
    AttentionCapture<float> cap;
    st.decoder.forward_frames(g, g.constant(latents[static_cast<std::size_t>(ref_idx)].tokens),
                              {g.constant(noisy)}, g.constant(m_r), {g.constant(m_t)},
                              static_cast<float>(time), false, &cap);

    AttentionMaps maps;
    maps.layers = cfg.decoder_layers;
    maps.heads = cfg.decoder_heads;
    maps.t = cfg.tokens_per_frame();
    maps.l = cfg.motion_tokens;
    maps.grid_side = grid_side_of(cfg);
    if (static_cast<int>(cap.maps.size()) != maps.layers * maps.heads)
        throw eval_error("extract_attention: unexpected capture count");
    int row0 = 2 * maps.t + maps.l;  // first m_t row of [z_r, z_t, m_r, m_t]
    for (const auto& m : cap.maps) {
        Tensor<float> full({maps.l, m.cols()});
        Tensor<float> ref({maps.l, maps.t});
        for (int i = 0; i < maps.l; ++i) {
            std::copy(m.row_ptr(row0 + i), m.row_ptr(row0 + i) + m.cols(), full.row_ptr(i));
            std::copy(m.row_ptr(row0 + i), m.row_ptr(row0 + i) + maps.t, ref.row_ptr(i));
        }
        maps.full_rows.push_back(std::move(full));
        maps.ref_slice.push_back(std::move(ref));
    }
    return maps;
}

void export_attention_panels(const AttentionMaps& maps, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    int side = maps.grid_side;
    const int zoom = 8;
    for (int layer = 0; layer < maps.layers; ++layer) {
        Tensor<float> panel({maps.l * side * zoom, maps.heads * side * zoom});
        for (int head = 0; head < maps.heads; ++head) {
            const auto& ref = maps.ref_slice[static_cast<std::size_t>(layer * maps.heads + head)];
            for (int tok = 0; tok < maps.l; ++tok)
                for (int y = 0; y < side * zoom; ++y)
                    for (int x = 0; x < side * zoom; ++x)
                        panel.at(tok * side * zoom + y, head * side * zoom + x) =
                            ref.at(tok, (y / zoom) * side + x / zoom);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "layer%02d.png", layer);
        write_png_gray(dir / name, panel);
    }
}

double attention_bbox_fraction(const AttentionMaps& maps, const BBox& box, int image_size) {
    int side = maps.grid_side;
    double cell = static_cast<double>(image_size) / side;
    double total = 0.0;
    int count = 0;
    for (const auto& ref : maps.ref_slice) {
        for (int tok = 0; tok < ref.rows(); ++tok) {
            double mass = 0.0, inside = 0.0;
            for (int gy = 0; gy < side; ++gy)
                for (int gx = 0; gx < side; ++gx) {
                    double w = ref.at(tok, gy * side + gx);
                    mass += w;
                    double cy = (gy + 0.5) * cell, cx = (gx + 0.5) * cell;
                    if (cy >= box.y0 && cy < box.y1 && cx >= box.x0 && cx < box.x1) inside += w;
                }
            if (mass > 0) {
                total += inside / mass;
                ++count;
            }
        }
    }
    return count ? total / count : 0.0;
}

std::vector<MaskProbeRow> high_mask_probe(TrainState& st, const std::vector<std::uint64_t>& ids,
                                          const std::vector<double>& ratios, RngStream rng) {
    std::vector<MaskProbeRow> rows;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        MaskProbeRow row;
        row.ratio = ratios[i];
        row.psnr = evaluate_reconstruction(st, ids, ratios[i],
                                           rng.split("ratio", static_cast<std::uint64_t>(i)))
                       .psnr;
        rows.push_back(row);
    }
    return rows;
}

std::string mask_probe_csv(const std::vector<MaskProbeRow>& rows) {
    std::ostringstream out;
    out << "ratio,psnr\n";
    for (const auto& r : rows) out << r.ratio << "," << r.psnr << "\n";
    return out.str();
}

double mouth_openness(const Frame& frame, const SubjectDescriptor& subject,
                      const FramePose& pose) {
    int size = frame.shape[0];
    auto mask = mouth_mask(subject, pose, size);
    std::int64_t area = 0, hit = 0;
    for (int px = 0; px < size * size; ++px) {
        if (!mask[static_cast<std::size_t>(px)]) continue;
        ++area;
        double d = 0.0;
        for (int c = 0; c < 3; ++c)
            d += std::abs(frame.data[static_cast<std::size_t>(px) * 3 + c] -
                          subject.mouth_color[c]);
        if (d / 3.0 < 0.15) ++hit;
    }
    return area ? static_cast<double>(hit) / static_cast<double>(area) : 0.0;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw eval_error("pearson: length mismatch");
    auto n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        sa += da * da;
        sb += db * db;
    }
    if (sa <= 0 || sb <= 0) return 0.0;
    return sab / std::sqrt(sa * sb);
}

std::vector<Frame> animate(TrainState& st, const VideoClip& ref_clip, const Tensor<float>& control,
                           int frames, RngStream rng) {
    const RunConfig& cfg = st.cfg;
    auto latents = clip_latents(ref_clip, *st.codec, cfg.patch_size);
    auto mrng = rng.split("mask");
    MotionToken m_ref = encode_with_ratio(st, latents[0], 0.0, mrng);
    auto motions = rollout(st.generator, m_ref, control, frames, cfg.sample_steps,
                           rng.split("rollout"));
    return decode_motion_seq(st, latents[0], m_ref, motions, rng.split("decode"));
}

SyncReport generator_sync(TrainState& st, const std::vector<std::uint64_t>& ids, int n_clips,
                          RngStream rng) {
    const RunConfig& cfg = st.cfg;
    if (ids.empty()) throw eval_error("generator_sync: no clips");
    int frames = cfg.n_prev + 2 * cfg.window;
    SyncReport report;
    for (int i = 0; i < n_clips; ++i) {
        std::uint64_t id = ids[static_cast<std::size_t>(i) % ids.size()];
        VideoClip clip = clip_by_id(cfg, id, frames);
        auto crng = rng.split("clip", static_cast<std::uint64_t>(i));
        auto decoded = animate(st, clip, clip.control, frames, crng.split("gen"));

        std::vector<double> probe, ctrl;
        for (int k = 0; k < frames; ++k) {
            probe.push_back(mouth_openness(decoded[static_cast<std::size_t>(k)],
                                           clip.params.subject,
                                           clip.params.frames[static_cast<std::size_t>(k)]));
            ctrl.push_back(static_cast<double>(clip.control.at(k, 1)));
        }
        std::vector<double> shuffled = ctrl;
        auto srng = crng.split("shuffle");
        srng.shuffle(shuffled.begin(), shuffled.end());
        report.corr_true += pearson(probe, ctrl);
        report.corr_shuffled += pearson(probe, shuffled);
    }
    report.corr_true /= n_clips;
    report.corr_shuffled /= n_clips;
    report.margin = report.corr_true - report.corr_shuffled;
    report.clips = n_clips;
    return report;
}

double high_freq_energy(const Frame& frame) {
    int h = frame.shape[0], w = frame.shape[1], c = frame.shape[2];
    auto px = [&](int y, int x, int ch) {
        return static_cast<double>(frame.data[(static_cast<std::size_t>(y) * w + x) * c + ch]);
    };
    double sum = 0.0;
    std::int64_t n = 0;
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double lap = 4 * px(y, x, ch) - px(y - 1, x, ch) - px(y + 1, x, ch) -
                             px(y, x - 1, ch) - px(y, x + 1, ch);
                sum += lap * lap;
                ++n;
            }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace semo
