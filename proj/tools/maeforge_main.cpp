#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maeforge/gradcheck.hpp"
#include "maeforge/pipelines.hpp"

namespace fs = std::filesystem;
using namespace maeforge;

namespace {

// model + optimization flags shared by the training commands; defaults are
// the paper-parity values, --desk-scale swaps in small presets for any flag
// the user left untouched.
struct CommonOpts {
    std::uint64_t seed = 0;
    bool desk_scale = false;

    int image_side = 224;
    int patch = 16;
    int channels = 1;
    int enc_depth = 12;
    int enc_width = 768;
    int enc_heads = 12;
    int ffn_mult = 4;
    std::string norm_style = "post";
    std::string pool = "cls-token";
    int dec_depth = 8;
    int dec_width = 512;
    int dec_heads = 16;
    double mask_ratio = 0.75;
    std::string loss_scope = "masked-only";
    std::string target_norm = "none";

    double lr = 1e-4;
    double eta_min = 0.0;
    int half_period = 10;
    int batch = 32;
    bool no_augment = false;
    double crop_lo = 0.5;
    double crop_hi = 1.0;
};

using DeskSetters = std::vector<std::pair<CLI::Option*, std::function<void()>>>;

void add_common_flags(CLI::App* cmd, CommonOpts& o, DeskSetters& desk) {
    cmd->set_config("--config", "", "configuration file (key = value lines, # comments)");
    cmd->add_option("--seed", o.seed, "random seed")->envname("MAEFORGE_SEED")->capture_default_str();
    cmd->add_flag("--desk-scale", o.desk_scale, "use small desk-scale presets for unset model flags");

    auto deskable = [&](CLI::Option* opt, std::function<void()> set) { desk.emplace_back(opt, std::move(set)); };

    deskable(cmd->add_option("--image-side", o.image_side, "model input side")->capture_default_str(),
             [&o] { o.image_side = 32; });
    deskable(cmd->add_option("--patch", o.patch, "patch side")->capture_default_str(), [&o] { o.patch = 8; });
    cmd->add_option("--channels", o.channels, "image channels")->capture_default_str();
    deskable(cmd->add_option("--enc-depth", o.enc_depth, "encoder blocks")->capture_default_str(),
             [&o] { o.enc_depth = 4; });
    deskable(cmd->add_option("--enc-width", o.enc_width, "encoder token width")->capture_default_str(),
             [&o] { o.enc_width = 64; });
    deskable(cmd->add_option("--enc-heads", o.enc_heads, "encoder attention heads")->capture_default_str(),
             [&o] { o.enc_heads = 4; });
    cmd->add_option("--ffn-mult", o.ffn_mult, "FFN hidden multiplier")->capture_default_str();
    cmd->add_option("--norm-style", o.norm_style, "residual norm placement")
        ->check(CLI::IsMember({"post", "pre"}))
        ->capture_default_str();
    cmd->add_option("--pool", o.pool, "classifier pooling")
        ->check(CLI::IsMember({"cls-token", "mean-token"}))
        ->capture_default_str();
    deskable(cmd->add_option("--dec-depth", o.dec_depth, "decoder blocks")->capture_default_str(),
             [&o] { o.dec_depth = 2; });
    deskable(cmd->add_option("--dec-width", o.dec_width, "decoder token width")->capture_default_str(),
             [&o] { o.dec_width = 32; });
    deskable(cmd->add_option("--dec-heads", o.dec_heads, "decoder attention heads")->capture_default_str(),
             [&o] { o.dec_heads = 4; });
    cmd->add_option("--mask-ratio", o.mask_ratio, "masked patch fraction")->capture_default_str();
    cmd->add_option("--loss-scope", o.loss_scope, "reconstruction loss scope")
        ->check(CLI::IsMember({"masked-only", "all-patches"}))
        ->capture_default_str();
    cmd->add_option("--target-norm", o.target_norm, "reconstruction target normalization")
        ->check(CLI::IsMember({"none", "per-patch"}))
        ->capture_default_str();

    cmd->add_option("--lr", o.lr, "base learning rate")->capture_default_str();
    cmd->add_option("--eta-min", o.eta_min, "cosine schedule floor")->capture_default_str();
    cmd->add_option("--half-period", o.half_period, "cosine half period in epochs")->capture_default_str();
    deskable(cmd->add_option("--batch", o.batch, "batch size")->capture_default_str(), [&o] { o.batch = 8; });
    cmd->add_flag("--no-augment", o.no_augment, "disable random crop/resize augmentation");
    cmd->add_option("--crop-lo", o.crop_lo, "min crop area fraction")->capture_default_str();
    cmd->add_option("--crop-hi", o.crop_hi, "max crop area fraction")->capture_default_str();
}

void apply_desk_scale(const CommonOpts& o, const DeskSetters& desk) {
    if (!o.desk_scale) return;
    for (const auto& [opt, set] : desk)
        if (opt->count() == 0) set();
}

MaeConfig mae_config_from(const CommonOpts& o) {
    const EncoderConfig enc(o.enc_depth, o.enc_width, o.enc_heads, o.ffn_mult,
                            o.norm_style == "pre" ? NormStyle::Pre : NormStyle::Post,
                            o.pool == "mean-token" ? Pool::MeanToken : Pool::ClsToken);
    return MaeConfig(enc, o.dec_depth, o.dec_width, o.dec_heads, o.mask_ratio, o.patch, o.image_side,
                     o.channels, o.loss_scope == "all-patches" ? LossScope::AllPatches : LossScope::MaskedOnly,
                     o.target_norm == "per-patch" ? TargetNorm::PerPatch : TargetNorm::None);
}

PlanEnv plan_env_from(const CommonOpts& o, const std::string& out_dir) {
    PlanEnv env(mae_config_from(o));
    env.schedule = ScheduleConfig{o.lr, o.eta_min, o.half_period};
    env.augment = AugmentConfig{!o.no_augment, o.crop_lo, o.crop_hi, o.image_side};
    env.batch_size = o.batch;
    env.out_dir = out_dir;
    return env;
}

void echo_effective_config(CLI::App* cmd) {
    std::cout << "# effective config for '" << cmd->get_name() << "' (reusable via --config)\n"
              << cmd->config_to_str(true, false);
}

void print_stage_summaries(const PlanResult& result) {
    for (const auto& st : result.stages) {
        const EpochRecord& last = st.report.rows.back();
        std::printf("stage %-22s epochs=%zu final_loss=%.6g", st.stage_id.c_str(), st.report.rows.size(),
                    last.loss);
        if (last.acc) {
            double best_acc = 0.0;
            int best_epoch = 0;
            for (const auto& row : st.report.rows)
                if (row.acc && *row.acc >= best_acc) {
                    best_acc = *row.acc;
                    best_epoch = row.epoch;
                }
            std::printf(" final acc=%.4f f1=%.4f auc=%.4f | best acc=%.4f @epoch %d", *last.acc, *last.f1,
                        *last.auc, best_acc, best_epoch);
        }
        std::printf("\n  checkpoint: %s\n  report:     %s\n", st.checkpoint_path.c_str(),
                    st.report_path.c_str());
    }
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"maeforge: masked-autoencoder pretraining with a ViT backbone, transfer pipelines, and "
                 "evaluation tools"};
    app.require_subcommand(1);
    int exit_code = 0;

    // ---- pretrain ----------------------------------------------------------
    auto po = std::make_shared<CommonOpts>();
    auto pd = std::make_shared<DeskSetters>();
    auto* pretrain = app.add_subcommand("pretrain", "self-supervised MAE pretraining stage");
    add_common_flags(pretrain, *po, *pd);
    auto p_manifest = std::make_shared<std::string>();
    auto p_out = std::make_shared<std::string>("runs");
    auto p_epochs = std::make_shared<int>(100);
    auto p_init = std::make_shared<std::string>();
    auto p_synth = std::make_shared<bool>(false);
    pretrain->add_option("--manifest", *p_manifest, "training manifest (path,label CSV)");
    pretrain->add_flag("--synthetic", *p_synth, "generate a synthetic texture corpus instead of --manifest");
    pretrain->add_option("--out", *p_out, "output directory")->capture_default_str();
    auto* p_epochs_opt = pretrain->add_option("--epochs", *p_epochs, "training epochs")->capture_default_str();
    pd->emplace_back(p_epochs_opt, [p_epochs] { *p_epochs = 10; });
    pretrain->add_option("--init", *p_init, "checkpoint to continue from");

    pretrain->callback([&, po, pd, p_manifest, p_out, p_epochs, p_init, p_synth] {
        exit_code = run_guarded([&] {
            apply_desk_scale(*po, *pd);
            echo_effective_config(pretrain);
            std::string manifest_path = *p_manifest;
            if (*p_synth) {
                SyntheticSpec spec;
                spec.kind = SynthKind::Textures;
                spec.side = po->image_side;
                spec.train_count = 240;
                spec.test_count = 0;
                spec.seed = po->seed + 101;
                manifest_path = synth_dataset(spec, *p_out + "/synth-pretrain").train_manifest;
                std::cout << "synthetic corpus: " << manifest_path << "\n";
            }
            if (manifest_path.empty())
                throw ValidationError("pretrain: provide --manifest or --synthetic");

            StagePlan plan;
            plan.plan_id = "pretrain";
            Stage stage;
            stage.id = "ssl";
            stage.kind = StageKind::SslPretrain;
            stage.dataset = "train";
            stage.epochs = *p_epochs;
            stage.init = p_init->empty() ? StageInit::random() : StageInit::from_file(*p_init);
            plan.stages = {stage};

            PlanEnv env = plan_env_from(*po, *p_out);
            env.train_manifests["train"] = load_manifest(manifest_path);

            const PlanResult result = run_plan(plan, env, Rng(po->seed));
            print_stage_summaries(result);
        });
    });

    // ---- finetune ----------------------------------------------------------
    auto fo = std::make_shared<CommonOpts>();
    auto fd = std::make_shared<DeskSetters>();
    auto* finetune = app.add_subcommand("finetune", "supervised classification stage (optionally from a "
                                                    "pretrained checkpoint)");
    add_common_flags(finetune, *fo, *fd);
    auto f_manifest = std::make_shared<std::string>();
    auto f_eval = std::make_shared<std::string>();
    auto f_split = std::make_shared<double>(0.8);
    auto f_out = std::make_shared<std::string>("runs");
    auto f_epochs = std::make_shared<int>(1000);
    auto f_init = std::make_shared<std::string>();
    auto f_probe = std::make_shared<bool>(false);
    auto f_classes = std::make_shared<int>(2);
    finetune->add_option("--manifest", *f_manifest, "labeled training manifest")->required();
    finetune->add_option("--eval-manifest", *f_eval, "labeled evaluation manifest");
    finetune->add_option("--split-fraction", *f_split,
                         "train fraction for a stratified split when --eval-manifest is absent")
        ->capture_default_str();
    finetune->add_option("--out", *f_out, "output directory")->capture_default_str();
    auto* f_epochs_opt = finetune->add_option("--epochs", *f_epochs, "training epochs")->capture_default_str();
    fd->emplace_back(f_epochs_opt, [f_epochs] { *f_epochs = 30; });
    finetune->add_option("--init", *f_init, "encoder checkpoint to transfer from");
    finetune->add_flag("--linear-probe", *f_probe, "freeze the trunk; train the head only");
    finetune->add_option("--classes", *f_classes, "number of classes")->capture_default_str();

    finetune->callback([&, fo, fd, f_manifest, f_eval, f_split, f_out, f_epochs, f_init, f_probe, f_classes] {
        exit_code = run_guarded([&] {
            apply_desk_scale(*fo, *fd);
            echo_effective_config(finetune);

            Manifest train_m = load_manifest(*f_manifest);
            Manifest eval_m;
            if (f_eval->empty()) {
                Rng split_rng = Rng(fo->seed).fork(0x5917);
                auto parts = split(train_m, *f_split, split_rng);
                train_m = std::move(parts.first);
                eval_m = std::move(parts.second);
            } else {
                eval_m = load_manifest(*f_eval);
            }

            const ClassifierConfig cfg(mae_config_from(*fo).encoder, fo->patch, fo->image_side, fo->channels,
                                       *f_classes);
            Rng rng(fo->seed);
            Rng init_rng = rng.fork(0xA11CE);
            ClassifierModel model = make_classifier_model(cfg, init_rng);
            if (!f_init->empty())
                load_into(named_tensors(model.params.encoder), load_checkpoint_encoder_only(*f_init), true);

            const TrainMode mode = *f_probe ? TrainMode::LinearProbe : TrainMode::Finetune;
            std::vector<NamedTensor> opt_params;
            if (*f_probe) {
                opt_params.push_back({"head.cls_token", model.params.head.cls_token});
                opt_params.push_back({"head.weight", model.params.head.weight});
                opt_params.push_back({"head.bias", model.params.head.bias});
            } else {
                opt_params = named_tensors(model.params);
            }
            AdamState opt(opt_params);

            const std::vector<Example> train_ex = load_examples(train_m);
            const std::vector<Example> eval_ex = load_examples(eval_m);
            const ScheduleConfig sched{fo->lr, fo->eta_min, fo->half_period};
            const AugmentConfig aug{!fo->no_augment, fo->crop_lo, fo->crop_hi, fo->image_side};

            RunReport report;
            report.stage_id = *f_probe ? "linear-probe" : "finetune";
            report.seed = fo->seed;
            for (int epoch = 0; epoch < *f_epochs; ++epoch) {
                EpochRecord rec =
                    train_epoch(mode, nullptr, &model, train_ex, opt, sched, aug, fo->batch, epoch, rng);
                const EvalResult ev = evaluate_classifier(model, eval_ex);
                rec.acc = ev.acc;
                rec.f1 = ev.f1;
                rec.auc = ev.auc;
                report.add_row(rec);
                std::printf("epoch %4d lr=%.3g loss=%.6g acc=%.4f f1=%.4f auc=%.4f\n", epoch, rec.lr, rec.loss,
                            ev.acc, ev.f1, ev.auc);
            }

            const fs::path out_dir = fs::path(*f_out) / report.stage_id;
            fs::create_directories(out_dir);
            CheckpointMeta meta;
            meta.seed = fo->seed;
            meta.lineage = {report.stage_id};
            {
                // enough of a snapshot for evaluate/inspect to rebuild the model
                meta.config["image_side"] = std::to_string(fo->image_side);
                meta.config["patch"] = std::to_string(fo->patch);
                meta.config["channels"] = std::to_string(fo->channels);
                meta.config["enc_depth"] = std::to_string(fo->enc_depth);
                meta.config["enc_width"] = std::to_string(fo->enc_width);
                meta.config["enc_heads"] = std::to_string(fo->enc_heads);
                meta.config["ffn_mult"] = std::to_string(fo->ffn_mult);
                meta.config["norm_style"] = fo->norm_style;
                meta.config["pool"] = fo->pool;
                meta.config["dec_depth"] = std::to_string(fo->dec_depth);
                meta.config["dec_width"] = std::to_string(fo->dec_width);
                meta.config["dec_heads"] = std::to_string(fo->dec_heads);
                meta.config["mask_ratio"] = std::to_string(fo->mask_ratio);
                meta.config["loss_scope"] = fo->loss_scope;
                meta.config["target_norm"] = fo->target_norm;
                meta.config["n_classes"] = std::to_string(*f_classes);
                meta.config["activation"] = "gelu-erf";
                meta.config["pos_encoding"] = "sincos-2d";
            }
            save_checkpoint(named_tensors(model.params), meta, (out_dir / "checkpoint.bin").string());
            write_report_csv(report, (out_dir / "report.csv").string());

            double best_acc = 0.0;
            int best_epoch = 0;
            for (const auto& row : report.rows)
                if (row.acc && *row.acc >= best_acc) {
                    best_acc = *row.acc;
                    best_epoch = row.epoch;
                }
            const EpochRecord& last = report.rows.back();
            std::printf("final: acc=%.4f f1=%.4f auc=%.4f | best: acc=%.4f @epoch %d\n", *last.acc, *last.f1,
                        *last.auc, best_acc, best_epoch);
            std::printf("checkpoint: %s\n", (out_dir / "checkpoint.bin").string().c_str());
        });
    });

    // ---- ablate ------------------------------------------------------------
    auto ao = std::make_shared<CommonOpts>();
    auto ad = std::make_shared<DeskSetters>();
    auto* ablate = app.add_subcommand("ablate", "run one of the five staged transfer protocols");
    add_common_flags(ablate, *ao, *ad);
    auto a_test = std::make_shared<int>(0);
    auto a_out = std::make_shared<std::string>("runs");
    auto a_synth = std::make_shared<bool>(false);
    auto a_ssl_epochs = std::make_shared<int>(100);
    auto a_ft_epochs = std::make_shared<int>(1000);
    auto a_generic = std::make_shared<std::string>();
    auto a_adjacent = std::make_shared<std::string>();
    auto a_down = std::make_shared<std::string>();
    auto a_down_eval = std::make_shared<std::string>();
    auto a_down2 = std::make_shared<std::string>();
    auto a_down2_eval = std::make_shared<std::string>();
    ablate->add_option("--test", *a_test, "ablation protocol number")
        ->required()
        ->check(CLI::Range(1, 5));
    ablate->add_option("--out", *a_out, "output directory")->capture_default_str();
    ablate->add_flag("--synthetic", *a_synth, "generate the full synthetic corpus set");
    auto* a_ssl_opt =
        ablate->add_option("--ssl-epochs", *a_ssl_epochs, "epochs per ssl stage")->capture_default_str();
    ad->emplace_back(a_ssl_opt, [a_ssl_epochs] { *a_ssl_epochs = 5; });
    auto* a_ft_opt =
        ablate->add_option("--ft-epochs", *a_ft_epochs, "epochs for the finetune stage")->capture_default_str();
    ad->emplace_back(a_ft_opt, [a_ft_epochs] { *a_ft_epochs = 10; });
    ablate->add_option("--generic-manifest", *a_generic, "generic-domain pretraining manifest");
    ablate->add_option("--target-adjacent-manifest", *a_adjacent, "target-adjacent pretraining manifest");
    ablate->add_option("--downstream-manifest", *a_down, "downstream labeled train manifest");
    ablate->add_option("--downstream-eval-manifest", *a_down_eval, "downstream labeled eval manifest");
    ablate->add_option("--downstream2-manifest", *a_down2, "second downstream labeled train manifest");
    ablate->add_option("--downstream2-eval-manifest", *a_down2_eval, "second downstream labeled eval manifest");

    ablate->callback([&, ao, ad, a_test, a_out, a_synth, a_ssl_epochs, a_ft_epochs, a_generic, a_adjacent,
                      a_down, a_down_eval, a_down2, a_down2_eval] {
        exit_code = run_guarded([&] {
            apply_desk_scale(*ao, *ad);
            echo_effective_config(ablate);

            PlanEnv env = plan_env_from(*ao, *a_out);
            if (*a_synth) {
                const std::string corpus = *a_out + "/synth-corpus";
                SyntheticSpec generic;
                generic.kind = SynthKind::Textures;
                generic.side = ao->image_side;
                generic.train_count = 240;
                generic.test_count = 0;
                generic.seed = Rng(ao->seed).fork(11).seed();
                env.train_manifests["generic"] =
                    load_manifest(synth_dataset(generic, corpus + "/generic").train_manifest);

                SyntheticSpec adjacent = generic;
                adjacent.kind = SynthKind::ClassMotifs;
                adjacent.train_count = 200;
                adjacent.seed = Rng(ao->seed).fork(12).seed();
                env.train_manifests["target-adjacent"] =
                    load_manifest(synth_dataset(adjacent, corpus + "/target-adjacent").train_manifest);

                SyntheticSpec down = adjacent;
                down.train_count = 200;
                down.test_count = 100;
                down.seed = Rng(ao->seed).fork(13).seed();
                const SynthResult d = synth_dataset(down, corpus + "/downstream");
                env.train_manifests["downstream"] = load_manifest(d.train_manifest);
                env.eval_manifests["downstream"] = load_manifest(d.test_manifest);

                SyntheticSpec down2 = down;
                down2.seed = Rng(ao->seed).fork(14).seed();
                const SynthResult d2 = synth_dataset(down2, corpus + "/downstream2");
                env.train_manifests["downstream2"] = load_manifest(d2.train_manifest);
                env.eval_manifests["downstream2"] = load_manifest(d2.test_manifest);
            } else {
                if (!a_generic->empty()) env.train_manifests["generic"] = load_manifest(*a_generic);
                if (!a_adjacent->empty())
                    env.train_manifests["target-adjacent"] = load_manifest(*a_adjacent);
                if (!a_down->empty()) env.train_manifests["downstream"] = load_manifest(*a_down);
                if (!a_down_eval->empty()) env.eval_manifests["downstream"] = load_manifest(*a_down_eval);
                if (!a_down2->empty()) env.train_manifests["downstream2"] = load_manifest(*a_down2);
                if (!a_down2_eval->empty())
                    env.eval_manifests["downstream2"] = load_manifest(*a_down2_eval);
            }

            StagePlan plan = build_ablation_plan(*a_test, DatasetRefs{});
            set_plan_epochs(plan, *a_ssl_epochs, *a_ft_epochs);

            std::cout << "plan " << plan.plan_id << ":\n";
            for (const auto& s : plan.stages)
                std::cout << "  " << s.id << " kind=" << stage_kind_name(s.kind) << " dataset=" << s.dataset
                          << " epochs=" << s.epochs << " init=" << stage_init_name(s.init)
                          << " uses_labels=" << (s.uses_labels ? "true" : "false") << "\n";

            const PlanResult result = run_plan(plan, env, Rng(ao->seed));
            print_stage_summaries(result);
        });
    });

    // ---- evaluate ----------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "print Acc/F1/AUC for a classifier checkpoint");
    auto e_ckpt = std::make_shared<std::string>();
    auto e_manifest = std::make_shared<std::string>();
    evaluate->add_option("--checkpoint", *e_ckpt, "classifier checkpoint")->required();
    evaluate->add_option("--manifest", *e_manifest, "labeled manifest")->required();
    evaluate->callback([&, e_ckpt, e_manifest] {
        exit_code = run_guarded([&] {
            echo_effective_config(evaluate);
            const ClassifierModel model = classifier_model_from_checkpoint(load_checkpoint(*e_ckpt));
            const EvalResult ev = evaluate_classifier(model, load_examples(load_manifest(*e_manifest)));
            std::printf("acc=%.6f f1=%.6f auc=%.6f loss=%.6g\n", ev.acc, ev.f1, ev.auc, ev.loss);
        });
    });

    // ---- inspect -----------------------------------------------------------
    auto* inspect = app.add_subcommand("inspect", "write original/masked/reconstructed image triplets");
    auto i_ckpt = std::make_shared<std::string>();
    auto i_manifest = std::make_shared<std::string>();
    auto i_index = std::make_shared<int>(0);
    auto i_out = std::make_shared<std::string>("inspect-out");
    auto i_seed = std::make_shared<std::uint64_t>(0);
    inspect->add_option("--checkpoint", *i_ckpt, "MAE checkpoint")->required();
    inspect->add_option("--manifest", *i_manifest, "image manifest")->required();
    inspect->add_option("--index", *i_index, "image index within the manifest")->capture_default_str();
    inspect->add_option("--out", *i_out, "output directory")->capture_default_str();
    inspect->add_option("--seed", *i_seed, "mask sampling seed")
        ->envname("MAEFORGE_SEED")
        ->capture_default_str();
    inspect->callback([&, i_ckpt, i_manifest, i_index, i_out, i_seed] {
        exit_code = run_guarded([&] {
            echo_effective_config(inspect);
            const MaeModel model = mae_model_from_checkpoint(load_checkpoint(*i_ckpt));
            const Manifest m = load_manifest(*i_manifest);
            if (*i_index < 0 || *i_index >= static_cast<int>(m.records.size()))
                throw ValidationError("inspect: index out of range");
            const Tensor image = center_resize(load_image(m, static_cast<std::size_t>(*i_index)),
                                               model.cfg.image_side);

            Rng rng(*i_seed);
            Tape tape(false);
            const MaeForwardResult fwd = mae_forward(tape, image, model.params, model.cfg, rng);
            const PatchSet original = patchify(image, model.cfg.patch);

            PatchSet masked = original;
            masked.patches = original.patches.detached();
            for (int idx : fwd.plan.masked_idx)
                for (int j = 0; j < masked.patches.cols(); ++j) masked.patches.at(idx, j) = Real(0);

            fs::create_directories(*i_out);
            const auto save_img = [&](const std::string& name, const Tensor& img) {
                std::ofstream f(*i_out + "/" + name, std::ios::binary);
                const auto bytes = encode_pgm(img);
                f.write(reinterpret_cast<const char*>(bytes.data()),
                        static_cast<std::streamsize>(bytes.size()));
            };
            save_img("original.pgm", image);
            save_img("masked.pgm", unpatchify(masked));
            save_img("reconstructed.pgm",
                     reconstruct_image(fwd.pred_patches, fwd.plan, original, ReconstructMode::PasteVisible));
            std::cout << "wrote " << *i_out << "/{original,masked,reconstructed}.pgm\n";
        });
    });

    // ---- gradcheck ---------------------------------------------------------
    auto* gradcheck = app.add_subcommand("gradcheck", "compare reverse-mode gradients to finite differences");
    auto g_seed = std::make_shared<std::uint64_t>(7);
    auto g_tol = std::make_shared<double>(1e-4);
    gradcheck->add_option("--seed", *g_seed, "random seed")->envname("MAEFORGE_SEED")->capture_default_str();
    gradcheck->add_option("--tol", *g_tol, "max allowed relative error")->capture_default_str();
    gradcheck->callback([&, g_seed, g_tol] {
        exit_code = run_guarded([&] {
            echo_effective_config(gradcheck);
            const GradCheckReport report = run_gradcheck(*g_seed);
            for (const auto& c : report.cases)
                std::printf("gradcheck %-24s max_rel_err=%.3e\n", c.name.c_str(), c.max_rel_err);
            std::printf("gradcheck overall max_rel_err=%.3e (%.1fs, tol %.1e)\n", report.max_rel_err,
                        report.seconds, *g_tol);
            if (!report.passed(*g_tol)) throw Error("gradcheck exceeded tolerance");
        });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    return exit_code;
}
