#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maeforge/checkpoint.hpp"
#include "maeforge/data.hpp"
#include "maeforge/training.hpp"

namespace maeforge {

enum class StageKind { SslPretrain, Finetune };

struct StageInit {
    enum class Kind { Random, FromStage, FromFile };
    Kind kind = Kind::Random;
    int stage_index = -1;  // FromStage: index of an earlier stage
    std::string path;      // FromFile

    static StageInit random() { return {}; }
    static StageInit from_stage(int index);
    static StageInit from_file(std::string path);
};

struct Stage {
    std::string id;
    StageKind kind = StageKind::SslPretrain;
    std::string dataset;  // dataset ref resolved through PlanEnv
    int epochs = 1;
    StageInit init;
    bool uses_labels = false;
};

// Ordered pretrain/fine-tune sequence with initialization lineage.
struct StagePlan {
    std::string plan_id;
    std::vector<Stage> stages;

    void validate() const;
};

struct DatasetRefs {
    std::string generic = "generic";                  // large-corpus proxy
    std::string target_adjacent = "target-adjacent";  // near-domain proxy
    std::string downstream = "downstream";            // labeled task
    std::string downstream2 = "downstream2";          // second labeled task
};

// The five ablation protocols, test_id in 1..5.
StagePlan build_ablation_plan(int test_id, const DatasetRefs& refs);

// Stage epoch counts for a plan built above (ssl stages, finetune stage).
void set_plan_epochs(StagePlan& plan, int ssl_epochs, int finetune_epochs);

struct PlanEnv {
    // dataset ref -> loaded manifest; finetune refs also need an eval manifest
    std::map<std::string, Manifest> train_manifests;
    std::map<std::string, Manifest> eval_manifests;

    MaeConfig mae;  // model shape for every stage; finetune reuses mae.encoder
    ScheduleConfig schedule;
    AugmentConfig augment;
    int batch_size = 8;
    int n_classes = 2;
    std::string out_dir = "runs";

    explicit PlanEnv(MaeConfig mae_cfg) : mae(mae_cfg) {}
};

struct StageArtifacts {
    std::string stage_id;
    std::string checkpoint_path;
    std::string report_path;
    RunReport report;
};

struct PlanResult {
    std::vector<StageArtifacts> stages;
    std::string final_checkpoint;
};

// Executes stages in order under out_dir/<plan-id>/<stage-id>/, persisting
// checkpoint.bin (with accumulated lineage) and report.csv per stage. A
// failing stage aborts the plan; artifacts of finished stages remain.
PlanResult run_plan(const StagePlan& plan, const PlanEnv& env, const Rng& rng);

std::string stage_kind_name(StageKind kind);
std::string stage_init_name(const StageInit& init);

// Rebuild model shape from a checkpoint's config snapshot and load its
// tensors. Strict: every model tensor must be present.
MaeConfig mae_config_from_meta(const CheckpointMeta& meta);
ClassifierConfig classifier_config_from_meta(const CheckpointMeta& meta);
MaeModel mae_model_from_checkpoint(const Checkpoint& ckpt);
ClassifierModel classifier_model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace maeforge
