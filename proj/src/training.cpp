#include "maeforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "maeforge/metrics.hpp"

namespace maeforge {

AdamState::AdamState(std::vector<NamedTensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (params_.empty()) throw ValidationError("adam: no parameters");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        if (!p.tensor.requires_grad())
            throw ValidationError("adam: parameter " + p.name + " does not track gradients");
        m_.emplace_back(p.tensor.numel(), Real(0));
        v_.emplace_back(p.tensor.numel(), Real(0));
    }
}

void AdamState::step(Real lr) {
    ++t_;
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_)));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_)));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& theta = params_[pi].tensor.values();
        auto& g = params_[pi].tensor.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw Error("adam: non-finite gradient in parameter " + params_[pi].name);
            m[i] = cfg_.beta1 * m[i] + (Real(1) - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (Real(1) - cfg_.beta2) * g[i] * g[i];
            const Real mhat = m[i] / bc1;
            const Real vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        params_[pi].tensor.zero_grad();
    }
}

void ScheduleConfig::validate() const {
    if (!(base_lr > eta_min) || eta_min < 0.0)
        throw ValidationError("schedule: need base_lr > eta_min >= 0");
    if (half_period < 1) throw ValidationError("schedule: half_period must be >= 1");
}

double cosine_lr(int epoch, const ScheduleConfig& cfg) {
    cfg.validate();
    if (epoch < 0) throw ValidationError("cosine_lr: negative epoch");
    const int phase = epoch % (2 * cfg.half_period);
    // frac hits exact 0 / 0.5 / 1 at the schedule landmarks
    const double frac = static_cast<double>(phase) / cfg.half_period;
    const double w = (1.0 + std::cos(M_PI * frac)) * 0.5;
    return cfg.eta_min + (cfg.base_lr - cfg.eta_min) * w;
}

Tensor bilinear_resize(const Tensor& image, int out_h, int out_w) {
    if (image.ndim() != 3) throw ValidationError("bilinear_resize: expected h x w x c image");
    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (out_h <= 0 || out_w <= 0) throw ValidationError("bilinear_resize: bad output size");
    if (out_h == h && out_w == w) return image.detached();  // no resampling when sizes match

    Tensor out({out_h, out_w, c});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < c; ++ch) {
                const double top = (1.0 - wx) * image.at(y0, x0, ch) + wx * image.at(y0, x1, ch);
                const double bot = (1.0 - wx) * image.at(y1, x0, ch) + wx * image.at(y1, x1, ch);
                out.at(y, x, ch) = static_cast<Real>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

Tensor center_resize(const Tensor& image, int side) {
    if (image.ndim() != 3) throw ValidationError("center_resize: expected h x w x c image");
    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (h == w) return bilinear_resize(image, side, side);
    const int m = std::min(h, w);
    const int top = (h - m) / 2, left = (w - m) / 2;
    Tensor crop({m, m, c});
    for (int y = 0; y < m; ++y)
        for (int x = 0; x < m; ++x)
            for (int ch = 0; ch < c; ++ch) crop.at(y, x, ch) = image.at(top + y, left + x, ch);
    return bilinear_resize(crop, side, side);
}

Tensor augment(const Tensor& image, const AugmentConfig& cfg, Rng& rng) {
    if (!cfg.enabled) return image;
    if (image.ndim() != 3) throw ValidationError("augment: expected h x w x c image");
    if (!(cfg.scale_lo > 0.0 && cfg.scale_lo <= cfg.scale_hi && cfg.scale_hi <= 1.0))
        throw ValidationError("augment: crop scale range must satisfy 0 < lo <= hi <= 1");

    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    const int max_side = std::min(h, w);
    const double area = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    int s = static_cast<int>(std::lround(std::sqrt(area) * max_side));
    s = std::clamp(s, 1, max_side);
    const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - s + 1)));
    const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - s + 1)));

    Tensor crop({s, s, c});
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
            for (int ch = 0; ch < c; ++ch) crop.at(y, x, ch) = image.at(top + y, left + x, ch);

    const int out_side = cfg.out_side > 0 ? cfg.out_side : max_side;
    return bilinear_resize(crop, out_side, out_side);
}

void RunReport::add_row(const EpochRecord& row) {
    if (!rows.empty() && row.epoch <= rows.back().epoch)
        throw ValidationError("run report: epochs must be strictly increasing");
    rows.push_back(row);
}

std::string report_csv_header() { return "epoch,stage,lr,loss,acc,f1,auc"; }

namespace {

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string report_csv_row(const std::string& stage_id, const EpochRecord& row) {
    std::string s = std::to_string(row.epoch) + "," + stage_id + "," + fmt_real(row.lr) + "," + fmt_real(row.loss);
    s += ",";
    if (row.acc) s += fmt_real(*row.acc);
    s += ",";
    if (row.f1) s += fmt_real(*row.f1);
    s += ",";
    if (row.auc) s += fmt_real(*row.auc);
    return s;
}

void write_report_csv(const RunReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("report: cannot write " + path);
    out << report_csv_header() << '\n';
    for (const auto& row : report.rows) out << report_csv_row(report.stage_id, row) << '\n';
}

ClassifierConfig::ClassifierConfig(EncoderConfig encoder_, int patch_, int image_side_, int channels_,
                                   int n_classes_)
    : encoder(encoder_), patch(patch_), image_side(image_side_), channels(channels_), n_classes(n_classes_) {
    if (patch <= 0 || image_side <= 0 || image_side % patch != 0)
        throw ValidationError("classifier config: image side " + std::to_string(image_side) +
                              " not divisible by patch " + std::to_string(patch));
    if (channels < 1) throw ValidationError("classifier config: channels must be >= 1");
    if (n_classes < 2) throw ValidationError("classifier config: n_classes must be >= 2");
}

MaeModel make_mae_model(const MaeConfig& cfg, Rng& rng) { return MaeModel{cfg, make_mae_params(cfg, rng)}; }

ClassifierModel make_classifier_model(const ClassifierConfig& cfg, Rng& rng) {
    ClassifierParams p;
    p.encoder = make_encoder_params(cfg.patch_len(), cfg.encoder, rng);
    p.head = make_head_params(cfg.encoder.width, cfg.n_classes, rng);
    return ClassifierModel{cfg, p};
}

Tensor classifier_logits(Tape& tape, const ClassifierModel& model, const Tensor& image) {
    const auto& cfg = model.cfg;
    if (image.ndim() != 3 || image.dim(0) != cfg.image_side || image.dim(1) != cfg.image_side ||
        image.dim(2) != cfg.channels)
        throw ValidationError("classifier: image " + image.shape_str() + " does not match config side " +
                              std::to_string(cfg.image_side));

    const PatchSet ps = patchify(image, cfg.patch);
    Tensor tokens = add_row_vector(tape, matmul(tape, ps.patches, model.params.encoder.patch_embed_w),
                                   model.params.encoder.patch_embed_b);
    const PosEncoding pe = sincos_pos_encoding(cfg.grid(), cfg.grid(), cfg.encoder.width);
    tokens = add(tape, tokens, pe.table);

    const bool use_cls = cfg.encoder.pool == Pool::ClsToken;
    if (use_cls) tokens = prepend_row(tape, model.params.head.cls_token, tokens);

    const Tensor encoded = encode(tape, tokens, model.params.encoder.blocks, cfg.encoder);
    return classify(tape, encoded, model.params.head, cfg.encoder, use_cls);
}

namespace {

Tensor prepare_input(const Tensor& image, const AugmentConfig& aug, int model_side, Rng& rng) {
    if (aug.enabled) {
        AugmentConfig eff = aug;
        if (eff.out_side == 0) eff.out_side = model_side;
        return augment(image, eff, rng);
    }
    return center_resize(image, model_side);
}

}  // namespace

EpochRecord train_epoch(TrainMode mode, MaeModel* mae, ClassifierModel* clf,
                        const std::vector<Example>& data, AdamState& opt, const ScheduleConfig& sched,
                        const AugmentConfig& aug, int batch_size, int epoch, const Rng& rng) {
    if (data.empty()) throw ValidationError("train_epoch: empty dataset");
    if (batch_size < 1) throw ValidationError("train_epoch: batch size must be >= 1");
    if (mode == TrainMode::Pretrain && mae == nullptr)
        throw ValidationError("train_epoch: pretrain mode requires an MAE model");
    if (mode != TrainMode::Pretrain && clf == nullptr)
        throw ValidationError("train_epoch: finetune/linear-probe mode requires a classifier model");

    const double lr = cosine_lr(epoch, sched);
    const int model_side = mode == TrainMode::Pretrain ? mae->cfg.image_side : clf->cfg.image_side;

    Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch) + 1);
    const std::vector<int> order = epoch_rng.permutation(static_cast<int>(data.size()));

    double loss_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const std::size_t batch_n = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - i);
        for (std::size_t k = 0; k < batch_n; ++k, ++i) {
            const Example& ex = data[static_cast<std::size_t>(order[i])];
            Rng item_rng = epoch_rng.fork(i);
            const Tensor input = prepare_input(ex.image, aug, model_side, item_rng);

            Tape tape;
            Tensor loss;
            if (mode == TrainMode::Pretrain) {
                const MaeForwardResult fwd = mae_forward(tape, input, mae->params, mae->cfg, item_rng);
                const PatchSet target = patchify(input, mae->cfg.patch);
                loss = reconstruction_loss(tape, fwd.pred_patches, target.patches, fwd.plan, mae->cfg);
            } else {
                if (ex.label == kUnlabeled)
                    throw ValidationError("train_epoch: unlabeled example in a supervised stage");
                const Tensor logits = classifier_logits(tape, *clf, input);
                loss = softmax_cross_entropy(tape, logits, {ex.label});
            }
            if (!std::isfinite(loss.item())) throw Error("train_epoch: non-finite loss");
            loss_sum += static_cast<double>(loss.item());

            // gradient of the batch-mean loss
            const Tensor scaled = scale(tape, loss, Real(1) / static_cast<Real>(batch_n));
            tape.backward(scaled);
        }
        opt.step(static_cast<Real>(lr));
        if (mode == TrainMode::LinearProbe) {
            // the optimizer owns only head parameters; drop trunk gradients
            for (auto& nt : named_tensors(clf->params.encoder)) nt.tensor.zero_grad();
        }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.loss = loss_sum / static_cast<double>(data.size());
    return rec;
}

EvalResult evaluate_classifier(const ClassifierModel& model, const std::vector<Example>& data) {
    if (data.empty()) throw ValidationError("evaluate: empty dataset");
    if (model.cfg.n_classes != 2)
        throw ValidationError("evaluate: binary metrics require a 2-class head");

    EvalBatch batch;
    double loss_sum = 0.0;
    for (const auto& ex : data) {
        if (ex.label == kUnlabeled) throw ValidationError("evaluate: unlabeled example");
        const Tensor input = center_resize(ex.image, model.cfg.image_side);
        Tape tape(false);
        const Tensor logits = classifier_logits(tape, model, input);
        const double z0 = logits.at(0), z1 = logits.at(1);
        const double m = std::max(z0, z1);
        const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
        batch.scores.push_back(e1 / (e0 + e1));
        batch.labels.push_back(ex.label);
        loss_sum += std::log(e0 + e1) + m - (ex.label == 1 ? z1 : z0);
    }

    EvalResult res;
    res.loss = loss_sum / static_cast<double>(data.size());
    res.acc = accuracy(batch);
    res.f1 = f1(batch);
    res.auc = auc(batch);
    return res;
}

}  // namespace maeforge
