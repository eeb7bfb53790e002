#include "maeforge/pipelines.hpp"

#include <filesystem>
#include <sstream>

namespace fs = std::filesystem;

namespace maeforge {

StageInit StageInit::from_stage(int index) {
    StageInit init;
    init.kind = Kind::FromStage;
    init.stage_index = index;
    return init;
}

StageInit StageInit::from_file(std::string path) {
    StageInit init;
    init.kind = Kind::FromFile;
    init.path = std::move(path);
    return init;
}

void StagePlan::validate() const {
    if (stages.empty()) throw ValidationError("plan: no stages");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const Stage& s = stages[i];
        if (s.id.empty()) throw ValidationError("plan: stage " + std::to_string(i) + " has no id");
        if (s.dataset.empty()) throw ValidationError("plan: stage " + s.id + " has no dataset ref");
        if (s.epochs < 1) throw ValidationError("plan: stage " + s.id + " has no epochs");
        if (s.kind == StageKind::SslPretrain && s.uses_labels)
            throw ValidationError("plan: ssl stage " + s.id + " must not use labels");
        if (s.kind == StageKind::Finetune && !s.uses_labels)
            throw ValidationError("plan: finetune stage " + s.id + " must use labels");
        if (s.init.kind == StageInit::Kind::FromStage &&
            (s.init.stage_index < 0 || s.init.stage_index >= static_cast<int>(i)))
            throw ValidationError("plan: stage " + s.id + " references a non-earlier stage");
        if (s.init.kind == StageInit::Kind::FromFile && s.init.path.empty())
            throw ValidationError("plan: stage " + s.id + " has an empty init file");
    }
}

namespace {

Stage make_stage(std::string id, StageKind kind, std::string dataset, StageInit init) {
    Stage s;
    s.id = std::move(id);
    s.kind = kind;
    s.dataset = std::move(dataset);
    s.init = init;
    s.uses_labels = kind == StageKind::Finetune;
    s.epochs = 1;
    return s;
}

void require_ref(const std::string& ref, const char* role) {
    if (ref.empty()) throw ValidationError(std::string("ablation plan: missing dataset ref for ") + role);
}

}  // namespace

StagePlan build_ablation_plan(int test_id, const DatasetRefs& refs) {
    StagePlan plan;
    plan.plan_id = "test" + std::to_string(test_id);
    switch (test_id) {
        case 1:
            require_ref(refs.target_adjacent, "target-adjacent");
            require_ref(refs.downstream, "downstream");
            plan.stages = {
                make_stage("ssl-target-adjacent", StageKind::SslPretrain, refs.target_adjacent,
                           StageInit::random()),
                make_stage("finetune", StageKind::Finetune, refs.downstream, StageInit::from_stage(0)),
            };
            break;
        case 2:
            require_ref(refs.generic, "generic");
            require_ref(refs.downstream, "downstream");
            plan.stages = {
                make_stage("ssl-generic", StageKind::SslPretrain, refs.generic, StageInit::random()),
                make_stage("finetune", StageKind::Finetune, refs.downstream, StageInit::from_stage(0)),
            };
            break;
        case 3:
            require_ref(refs.generic, "generic");
            require_ref(refs.target_adjacent, "target-adjacent");
            require_ref(refs.downstream, "downstream");
            plan.stages = {
                make_stage("ssl-generic", StageKind::SslPretrain, refs.generic, StageInit::random()),
                make_stage("ssl-target-adjacent", StageKind::SslPretrain, refs.target_adjacent,
                           StageInit::from_stage(0)),
                make_stage("finetune", StageKind::Finetune, refs.downstream, StageInit::from_stage(1)),
            };
            break;
        case 4:
            require_ref(refs.generic, "generic");
            require_ref(refs.downstream, "downstream");
            plan.stages = {
                make_stage("ssl-generic", StageKind::SslPretrain, refs.generic, StageInit::random()),
                make_stage("ssl-downstream", StageKind::SslPretrain, refs.downstream, StageInit::from_stage(0)),
                make_stage("finetune", StageKind::Finetune, refs.downstream, StageInit::from_stage(1)),
            };
            break;
        case 5:
            require_ref(refs.generic, "generic");
            require_ref(refs.downstream2, "downstream2");
            plan.stages = {
                make_stage("ssl-generic", StageKind::SslPretrain, refs.generic, StageInit::random()),
                make_stage("ssl-downstream2", StageKind::SslPretrain, refs.downstream2,
                           StageInit::from_stage(0)),
                make_stage("finetune", StageKind::Finetune, refs.downstream2, StageInit::from_stage(1)),
            };
            break;
        default:
            throw ValidationError("ablation plan: unknown test id " + std::to_string(test_id) +
                                  " (expected 1..5)");
    }
    plan.validate();
    return plan;
}

void set_plan_epochs(StagePlan& plan, int ssl_epochs, int finetune_epochs) {
    for (auto& s : plan.stages)
        s.epochs = s.kind == StageKind::SslPretrain ? ssl_epochs : finetune_epochs;
    plan.validate();
}

std::string stage_kind_name(StageKind kind) {
    return kind == StageKind::SslPretrain ? "ssl-pretrain" : "finetune";
}

std::string stage_init_name(const StageInit& init) {
    switch (init.kind) {
        case StageInit::Kind::Random: return "random";
        case StageInit::Kind::FromStage: return "stage:" + std::to_string(init.stage_index);
        case StageInit::Kind::FromFile: return "file:" + init.path;
    }
    return "?";
}

namespace {

std::string bool_name(bool v) { return v ? "true" : "false"; }

std::map<std::string, std::string> config_snapshot(const PlanEnv& env) {
    const MaeConfig& m = env.mae;
    std::map<std::string, std::string> c;
    c["image_side"] = std::to_string(m.image_side);
    c["patch"] = std::to_string(m.patch);
    c["channels"] = std::to_string(m.channels);
    c["mask_ratio"] = std::to_string(m.mask_ratio);
    c["mask_resample"] = "per-step";
    c["enc_depth"] = std::to_string(m.encoder.depth);
    c["enc_width"] = std::to_string(m.encoder.width);
    c["enc_heads"] = std::to_string(m.encoder.heads);
    c["ffn_mult"] = std::to_string(m.encoder.ffn_mult);
    c["norm_style"] = m.encoder.norm_style == NormStyle::Post ? "post" : "pre";
    c["pool"] = m.encoder.pool == Pool::ClsToken ? "cls-token" : "mean-token";
    c["dec_depth"] = std::to_string(m.decoder_depth);
    c["dec_width"] = std::to_string(m.decoder_width);
    c["dec_heads"] = std::to_string(m.decoder_heads);
    c["loss_scope"] = m.loss_scope == LossScope::MaskedOnly ? "masked-only" : "all-patches";
    c["target_norm"] = m.target_norm == TargetNorm::None ? "none" : "per-patch";
    c["pos_encoding"] = "sincos-2d";
    c["activation"] = "gelu-erf";
    c["base_lr"] = std::to_string(env.schedule.base_lr);
    c["eta_min"] = std::to_string(env.schedule.eta_min);
    c["half_period"] = std::to_string(env.schedule.half_period);
    c["batch_size"] = std::to_string(env.batch_size);
    c["augment"] = bool_name(env.augment.enabled);
    c["crop_scale_lo"] = std::to_string(env.augment.scale_lo);
    c["crop_scale_hi"] = std::to_string(env.augment.scale_hi);
    c["adam_beta1"] = "0.9";
    c["adam_beta2"] = "0.999";
    c["adam_eps"] = "1e-8";
    c["n_classes"] = std::to_string(env.n_classes);
    return c;
}

const std::vector<Example>& cached_examples(std::map<std::string, std::vector<Example>>& cache,
                                            const std::map<std::string, Manifest>& manifests,
                                            const std::string& ref, const char* role) {
    auto it = cache.find(ref);
    if (it != cache.end()) return it->second;
    auto mit = manifests.find(ref);
    if (mit == manifests.end())
        throw ValidationError(std::string("run_plan: no ") + role + " manifest for dataset ref '" + ref + "'");
    cache[ref] = load_examples(mit->second);
    return cache[ref];
}

}  // namespace

PlanResult run_plan(const StagePlan& plan, const PlanEnv& env, const Rng& rng) {
    plan.validate();
    if (env.batch_size < 1) throw ValidationError("run_plan: batch size must be >= 1");

    std::map<std::string, std::vector<Example>> train_cache, eval_cache;
    const std::map<std::string, std::string> snapshot = config_snapshot(env);

    PlanResult result;
    std::vector<std::string> lineage;
    std::vector<std::string> stage_ckpts;

    for (std::size_t si = 0; si < plan.stages.size(); ++si) {
        const Stage& stage = plan.stages[si];
        lineage.push_back(stage.id);

        const fs::path stage_dir = fs::path(env.out_dir) / plan.plan_id / stage.id;
        std::error_code ec;
        fs::create_directories(stage_dir, ec);
        if (ec) throw Error("run_plan: cannot create " + stage_dir.string());

        const Rng stage_rng = rng.fork(si + 1);
        Rng init_rng = stage_rng.fork(0xA11CE);

        auto init_path = [&]() -> std::string {
            if (stage.init.kind == StageInit::Kind::FromFile) return stage.init.path;
            return stage_ckpts[static_cast<std::size_t>(stage.init.stage_index)];
        };

        RunReport report;
        report.stage_id = stage.id;
        report.seed = rng.seed();
        for (const auto& [k, v] : snapshot) report.config.emplace_back(k, v);

        CheckpointMeta meta;
        meta.seed = rng.seed();
        meta.lineage = lineage;
        meta.config = snapshot;

        const std::string ckpt_path = (stage_dir / "checkpoint.bin").string();
        const std::string report_path = (stage_dir / "report.csv").string();

        if (stage.kind == StageKind::SslPretrain) {
            const auto& examples = cached_examples(train_cache, env.train_manifests, stage.dataset, "train");
            MaeModel model = make_mae_model(env.mae, init_rng);
            if (stage.init.kind != StageInit::Kind::Random)
                load_into(named_tensors(model.params), load_checkpoint(init_path()), true);

            AdamState opt(named_tensors(model.params));
            for (int epoch = 0; epoch < stage.epochs; ++epoch)
                report.add_row(train_epoch(TrainMode::Pretrain, &model, nullptr, examples, opt, env.schedule,
                                           env.augment, env.batch_size, epoch, stage_rng));
            save_checkpoint(named_tensors(model.params), meta, ckpt_path);
        } else {
            const auto& examples = cached_examples(train_cache, env.train_manifests, stage.dataset, "train");
            const auto& eval_examples = cached_examples(eval_cache, env.eval_manifests, stage.dataset, "eval");

            const ClassifierConfig ccfg(env.mae.encoder, env.mae.patch, env.mae.image_side, env.mae.channels,
                                        env.n_classes);
            ClassifierModel model = make_classifier_model(ccfg, init_rng);
            // the head is always freshly initialized; only the trunk transfers
            if (stage.init.kind != StageInit::Kind::Random)
                load_into(named_tensors(model.params.encoder), load_checkpoint_encoder_only(init_path()), true);

            AdamState opt(named_tensors(model.params));
            for (int epoch = 0; epoch < stage.epochs; ++epoch) {
                EpochRecord rec = train_epoch(TrainMode::Finetune, nullptr, &model, examples, opt,
                                              env.schedule, env.augment, env.batch_size, epoch, stage_rng);
                const EvalResult ev = evaluate_classifier(model, eval_examples);
                rec.acc = ev.acc;
                rec.f1 = ev.f1;
                rec.auc = ev.auc;
                report.add_row(rec);
            }
            save_checkpoint(named_tensors(model.params), meta, ckpt_path);
        }

        write_report_csv(report, report_path);
        stage_ckpts.push_back(ckpt_path);
        result.stages.push_back(StageArtifacts{stage.id, ckpt_path, report_path, std::move(report)});
    }

    result.final_checkpoint = stage_ckpts.back();
    return result;
}

namespace {

const std::string& meta_value(const CheckpointMeta& meta, const std::string& key) {
    auto it = meta.config.find(key);
    if (it == meta.config.end())
        throw ValidationError("checkpoint meta: missing config key '" + key + "'");
    return it->second;
}

int meta_int(const CheckpointMeta& meta, const std::string& key) { return std::stoi(meta_value(meta, key)); }
double meta_real(const CheckpointMeta& meta, const std::string& key) { return std::stod(meta_value(meta, key)); }

EncoderConfig encoder_config_from_meta(const CheckpointMeta& meta) {
    return EncoderConfig(meta_int(meta, "enc_depth"), meta_int(meta, "enc_width"), meta_int(meta, "enc_heads"),
                         meta_int(meta, "ffn_mult"),
                         meta_value(meta, "norm_style") == "pre" ? NormStyle::Pre : NormStyle::Post,
                         meta_value(meta, "pool") == "mean-token" ? Pool::MeanToken : Pool::ClsToken);
}

}  // namespace

MaeConfig mae_config_from_meta(const CheckpointMeta& meta) {
    return MaeConfig(encoder_config_from_meta(meta), meta_int(meta, "dec_depth"), meta_int(meta, "dec_width"),
                     meta_int(meta, "dec_heads"), meta_real(meta, "mask_ratio"), meta_int(meta, "patch"),
                     meta_int(meta, "image_side"), meta_int(meta, "channels"),
                     meta_value(meta, "loss_scope") == "all-patches" ? LossScope::AllPatches
                                                                    : LossScope::MaskedOnly,
                     meta_value(meta, "target_norm") == "per-patch" ? TargetNorm::PerPatch : TargetNorm::None);
}

ClassifierConfig classifier_config_from_meta(const CheckpointMeta& meta) {
    return ClassifierConfig(encoder_config_from_meta(meta), meta_int(meta, "patch"),
                            meta_int(meta, "image_side"), meta_int(meta, "channels"),
                            meta_int(meta, "n_classes"));
}

MaeModel mae_model_from_checkpoint(const Checkpoint& ckpt) {
    Rng scratch(0);
    MaeModel model{mae_config_from_meta(ckpt.meta), {}};
    model.params = make_mae_params(model.cfg, scratch);
    load_into(named_tensors(model.params), ckpt, true);
    return model;
}

ClassifierModel classifier_model_from_checkpoint(const Checkpoint& ckpt) {
    Rng scratch(0);
    ClassifierModel model = make_classifier_model(classifier_config_from_meta(ckpt.meta), scratch);
    load_into(named_tensors(model.params), ckpt, true);
    return model;
}

}  // namespace maeforge
