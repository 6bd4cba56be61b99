#include "stylemill/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "stylemill/error.hpp"

namespace sm {

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "linear") return ScheduleKind::Linear;
    if (name == "cosine") return ScheduleKind::Cosine;
    fail("unknown schedule kind '", name, "'");
}

namespace {
void validate_alpha_bar(const std::vector<double>& ab) {
    SM_CHECK(!ab.empty(), "schedule: empty alpha_bar");
    double prev = 1.0000000001;
    for (size_t i = 0; i < ab.size(); ++i) {
        SM_CHECK(ab[i] > 0.0 && ab[i] <= 1.0, "schedule: alpha_bar[", i, "]=", ab[i],
                 " outside (0,1]");
        SM_CHECK(ab[i] < prev, "schedule: alpha_bar must be strictly decreasing at ", i);
        prev = ab[i];
    }
}
}  // namespace

NoiseSchedule NoiseSchedule::linear(int64_t steps) {
    SM_CHECK(steps >= 1, "schedule: steps must be >= 1");
    NoiseSchedule s;
    s.kind = ScheduleKind::Linear;
    const double beta0 = 1e-4, beta1 = 0.02;
    double prod = 1.0;
    for (int64_t t = 0; t < steps; ++t) {
        const double frac = steps > 1 ? static_cast<double>(t) / static_cast<double>(steps - 1) : 0.0;
        prod *= 1.0 - (beta0 + (beta1 - beta0) * frac);
        s.alpha_bar.push_back(prod);
    }
    validate_alpha_bar(s.alpha_bar);
    return s;
}

NoiseSchedule NoiseSchedule::cosine(int64_t steps) {
    SM_CHECK(steps >= 1, "schedule: steps must be >= 1");
    NoiseSchedule s;
    s.kind = ScheduleKind::Cosine;
    const double off = 0.008;
    auto f = [&](double t) {
        const double v = std::cos((t / static_cast<double>(steps) + off) / (1.0 + off) * M_PI / 2.0);
        return v * v;
    };
    const double f0 = f(0.0);
    double prev = 1.0;
    for (int64_t t = 0; t < steps; ++t) {
        double ab = f(static_cast<double>(t + 1)) / f0;
        ab = std::clamp(ab, 1e-6, prev * 0.9999);  // keep strictly decreasing and positive
        s.alpha_bar.push_back(ab);
        prev = ab;
    }
    validate_alpha_bar(s.alpha_bar);
    return s;
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
    validate_alpha_bar(alpha_bar);
    NoiseSchedule s;
    s.alpha_bar = std::move(alpha_bar);
    return s;
}

double NoiseSchedule::ab(int64_t t) const {
    SM_CHECK(t >= 0 && t < steps(), "schedule: t=", t, " out of range [0, ", steps(), ")");
    return alpha_bar[static_cast<size_t>(t)];
}

Tensor q_sample(const Tensor& x0, int64_t t, const Tensor& noise, const NoiseSchedule& s) {
    SM_CHECK(x0.same_shape(noise), "q_sample: noise shape mismatch");
    const double ab = s.ab(t);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    Tensor out(x0.shape());
    for (int64_t i = 0; i < x0.numel(); ++i) out[i] = sa * x0[i] + sn * noise[i];
    return out;
}

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_text, const Tensor& eps_text_style,
                   const GuidanceConfig& g) {
    SM_CHECK(eps_uncond.same_shape(eps_text) && eps_text.same_shape(eps_text_style),
             "cfg_combine: shape mismatch");
    const double cu = 1.0 - g.s_text;
    const double ct = g.s_text - g.s_style;
    const double cs = g.s_style;
    Tensor out(eps_uncond.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = cu * eps_uncond[i] + ct * eps_text[i] + cs * eps_text_style[i];
    return out;
}

std::vector<int64_t> ddim_timesteps(int64_t train_steps, int64_t sample_steps) {
    SM_CHECK(sample_steps >= 1 && sample_steps <= train_steps, "ddim: sample steps ", sample_steps,
             " must be in [1, ", train_steps, "]");
    std::vector<int64_t> ts;
    for (int64_t i = sample_steps - 1; i >= 0; --i) ts.push_back(i * train_steps / sample_steps);
    return ts;
}

Tensor predict_x0(const Tensor& x, const Tensor& eps, double ab_t) {
    SM_CHECK(x.same_shape(eps), "predict_x0: shape mismatch");
    const double sa = std::sqrt(ab_t), sn = std::sqrt(1.0 - ab_t);
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = (x[i] - sn * eps[i]) / sa;
    return out;
}

Tensor ddim_step(const Tensor& x, const Tensor& eps, double ab_t, double ab_prev) {
    Tensor x0 = predict_x0(x, eps, ab_t);
    if (ab_prev >= 1.0) return x0;
    const double sa = std::sqrt(ab_prev), sn = std::sqrt(1.0 - ab_prev);
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = sa * x0[i] + sn * eps[i];
    return out;
}

// ---- training ----

DropDecision draw_dropout(Rng& rng, double p_drop) {
    DropDecision d;
    d.drop_text = rng.uniform() < p_drop;
    d.drop_style = rng.uniform() < p_drop;
    return d;
}

double training_step(StyleModel& model, const NoiseSchedule& sched,
                     const std::vector<TrainItem>& batch, Adam& opt, Rng& rng,
                     const TrainStepConfig& cfg) {
    SM_CHECK(!batch.empty(), "training_step: empty batch");
    ag::Graph g;
    const auto trainable = to_set(opt.params());
    Binder bind(g, trainable);

    std::vector<ag::Var> losses;
    for (const TrainItem& item : batch) {
        SM_CHECK(item.video.ndim() == 4, "training_step: video must be [T,H,W,3]");
        const int64_t t = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(sched.steps())));
        Tensor noise = randn(item.video.shape(), rng);
        const Tensor x_t = q_sample(item.video, t, noise, sched);

        DenoiseVarArgs args;
        args.t = t;
        args.text = item.text;

        switch (cfg.stage) {
            case TrainStage::Base: {
                if (draw_dropout(rng, cfg.p_drop).drop_text) args.text = TextCond::null_cond();
                break;
            }
            case TrainStage::MotionAdapter: {
                args.alpha_motion = cfg.alpha_motion;
                break;
            }
            case TrainStage::Style:
            case TrainStage::Control: {
                if (cfg.stage == TrainStage::Style) {
                    SM_CHECK(model.extractor.has_value(),
                             "training_step: style stage without extractor");
                    SM_CHECK(item.style_selected_rows.numel() > 0 && item.style_global.numel() > 0,
                             "training_step: style stage item missing style inputs");
                } else {
                    SM_CHECK(model.control.has_value(), "training_step: control stage without stack");
                    SM_CHECK(item.condition.numel() > 0,
                             "training_step: control item missing condition");
                }
                const DropDecision drop = draw_dropout(rng, cfg.p_drop);
                if (drop.drop_text) args.text = TextCond::null_cond();
                if (!drop.drop_style && item.style_selected_rows.numel() > 0 &&
                    model.extractor.has_value()) {
                    ag::Var global = g.leaf(item.style_global.reshaped({1, model.cfg.width}));
                    ag::Var texture = texture_tokens(g, bind, model.extractor->agg,
                                                     g.leaf(item.style_selected_rows));
                    args.style = ag::concat_rows(g, {global, texture});
                }
                break;
            }
        }

        std::vector<ag::Var> residuals;
        if (cfg.stage == TrainStage::Control) {
            ag::Var text_tokens = model.dit.text_token(g, bind, args.text);
            residuals = control_forward(g, bind, *model.control, g.leaf(x_t), g.leaf(item.condition),
                                        text_tokens, t);
            args.control = &residuals;
        }
        ag::Var eps_hat = denoiser_forward(g, bind, model.dit, g.leaf(x_t), args);
        losses.push_back(ag::mse(g, eps_hat, g.leaf(noise)));
    }

    ag::Var total = losses[0];
    for (size_t i = 1; i < losses.size(); ++i) total = ag::add(g, total, losses[i]);
    total = ag::scale(g, total, 1.0 / static_cast<double>(losses.size()));
    const double loss = total->value[0];
    SM_CHECK(std::isfinite(loss), "training_step: non-finite loss");
    g.backward(total);
    opt.step(bind);
    return loss;
}

// ---- sampling ----

namespace {

struct EvalContext {
    const StyleModel& model;
    const Tensor* condition;
    double alpha_motion;
};

Tensor eval_eps(const EvalContext& ctx, const Tensor& x, int64_t t, const TextCond& text,
                const Tensor* style_tokens) {
    DenoiseArgs args;
    args.t = t;
    args.text = text;
    args.style_tokens = style_tokens;
    args.alpha_motion = ctx.alpha_motion;
    std::vector<Tensor> residuals;
    if (ctx.condition) {
        const Tensor text_tokens = ctx.model.dit.text_token(text);
        residuals = control_forward(*ctx.model.control, x, *ctx.condition, text_tokens, t);
        args.control_residuals = &residuals;
    }
    return denoiser_forward(ctx.model.dit, x, args);
}

}  // namespace

Tensor sample(const StyleModel& model, const NoiseSchedule& sched, const SampleRequest& req) {
    SM_CHECK(req.frames >= 1, "sample: frames must be >= 1");
    if (req.condition) {
        SM_CHECK(model.control.has_value(), "sample: condition given but no control stack in model");
        SM_CHECK(req.condition->dim(0) == req.frames, "sample: condition frame count mismatch");
    }
    if (req.style_tokens)
        SM_CHECK(req.style_tokens->cols() == model.cfg.width, "sample: style token width mismatch");

    Rng rng(mix_seed(req.seed, 0x5A11));
    Tensor x = randn({req.frames, model.cfg.image_h, model.cfg.image_w, 3}, rng);

    EvalContext ctx{model, req.condition, req.alpha_motion};
    const std::vector<int64_t> ts = ddim_timesteps(sched.steps(), req.steps);
    for (size_t i = 0; i < ts.size(); ++i) {
        const int64_t t = ts[i];
        const Tensor eps_u = eval_eps(ctx, x, t, TextCond::null_cond(), nullptr);
        const Tensor eps_t = req.text.is_null ? eps_u : eval_eps(ctx, x, t, req.text, nullptr);
        const Tensor eps_ts =
            req.style_tokens ? eval_eps(ctx, x, t, req.text, req.style_tokens) : eps_t;
        const Tensor eps = cfg_combine(eps_u, eps_t, eps_ts, req.guidance);
        SM_CHECK(eps.all_finite(), "sample: non-finite noise prediction at t=", t);
        const double ab_prev = i + 1 < ts.size() ? sched.ab(ts[i + 1]) : 1.0;
        x = ddim_step(x, eps, sched.ab(t), ab_prev);
        SM_CHECK(x.all_finite(), "sample: non-finite state after t=", t);
    }
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::clamp(x[i], 0.0, 1.0);
    return x;
}

Tensor build_style_tokens(const StyleModel& model, const ImageEncoder& encoder,
                          const TextEmbedder& text_embedder, const Tensor& style_image,
                          const TextCond& text) {
    SM_CHECK(model.extractor.has_value(),
             "style image provided but the model has no style extractor");
    const ExtractorParams& ex = *model.extractor;
    const EmbeddingBundle bundle = encoder.encode(style_image);
    const Tensor f_text = text.is_null ? text_embedder.null_embedding()
                                       : text_embedder.embed(text.style_id, text.object_id);
    const int64_t k = std::clamp<int64_t>(ex.keep_k, 1, bundle.patches.rows());
    const PatchSelection sel = select_patches(bundle.patches, f_text, k);
    const Tensor f_global = global_project(ex.projector, bundle.global);
    const Tensor f_texture = texture_tokens(ex.agg, sel.rows);
    return assemble_style(f_global, f_texture);
}

Tensor style_transfer(const StyleModel& model, const NoiseSchedule& sched,
                      const Tensor& content_video, const TransferRequest& req) {
    SM_CHECK(model.control.has_value(), "style_transfer: model has no control stack");
    SM_CHECK(content_video.ndim() == 4 && content_video.dim(3) == 3,
             "style_transfer: content must be [T,H,W,3]");
    SM_CHECK(content_video.dim(1) == model.cfg.image_h && content_video.dim(2) == model.cfg.image_w,
             "style_transfer: content dims do not match model");
    const TileCondition cond = make_condition(content_video, req.condition_kind, req.tile_factor,
                                              req.canny);
    SM_CHECK(model.control->cond_channels == cond.video.dim(3),
             "style_transfer: control stack expects ", model.control->cond_channels,
             " condition channels, condition has ", cond.video.dim(3));
    SampleRequest sr;
    sr.frames = content_video.dim(0);
    sr.steps = req.steps;
    sr.text = req.text;
    sr.style_tokens = req.style_tokens;
    sr.condition = &cond.video;
    sr.guidance = req.guidance;
    sr.alpha_motion = req.alpha_motion;
    sr.seed = req.seed;
    return sample(model, sched, sr);
}

}  // namespace sm
