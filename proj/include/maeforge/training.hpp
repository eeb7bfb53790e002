#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maeforge/data.hpp"
#include "maeforge/mae.hpp"
#include "maeforge/params.hpp"
#include "maeforge/rng.hpp"

namespace maeforge {

struct AdamConfig {
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
};

// Adam with bias correction over a fixed parameter list. step() consumes the
// accumulated gradients and zeroes them; gradients are never cleared
// implicitly anywhere else.
class AdamState {
public:
    explicit AdamState(std::vector<NamedTensor> params, AdamConfig cfg = {});

    void step(Real lr);
    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<NamedTensor> params_;
    std::vector<std::vector<Real>> m_, v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

struct ScheduleConfig {
    double base_lr = 1e-4;
    double eta_min = 0.0;
    int half_period = 10;

    void validate() const;
};

// Periodic cosine annealing: a full cycle every 2*half_period epochs,
// starting at base_lr, touching eta_min at the half period.
double cosine_lr(int epoch, const ScheduleConfig& cfg);

struct AugmentConfig {
    bool enabled = true;
    double scale_lo = 0.5;  // crop area fraction range
    double scale_hi = 1.0;
    int out_side = 0;       // 0 = keep input side
};

// Random-area square crop at a random position, bilinear-resized to the
// output side. Identity when disabled; no resampling when sizes match.
Tensor augment(const Tensor& image, const AugmentConfig& cfg, Rng& rng);

// Deterministic path used when augmentation is off and at evaluation time:
// center square crop, then bilinear resize.
Tensor center_resize(const Tensor& image, int side);
Tensor bilinear_resize(const Tensor& image, int out_h, int out_w);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<double> acc, f1, auc;
};

// Per-stage training log; rows are append-only with strictly increasing
// epochs, and the config snapshot is frozen by the first row.
struct RunReport {
    std::string stage_id;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<EpochRecord> rows;

    void add_row(const EpochRecord& row);
};

// CSV rows "epoch,stage,lr,loss,acc,f1,auc", empty fields where a metric
// was not evaluated.
void write_report_csv(const RunReport& report, const std::string& path);
std::string report_csv_header();
std::string report_csv_row(const std::string& stage_id, const EpochRecord& row);

enum class TrainMode { Pretrain, Finetune, LinearProbe };

struct MaeModel {
    MaeConfig cfg;
    MaeParams params;
};

struct ClassifierConfig {
    EncoderConfig encoder;
    int patch;
    int image_side;
    int channels;
    int n_classes;

    ClassifierConfig(EncoderConfig encoder_, int patch_, int image_side_, int channels_ = 1,
                     int n_classes_ = 2);
    int patch_len() const { return patch * patch * channels; }
    int grid() const { return image_side / patch; }
};

struct ClassifierModel {
    ClassifierConfig cfg;
    ClassifierParams params;
};

MaeModel make_mae_model(const MaeConfig& cfg, Rng& rng);
ClassifierModel make_classifier_model(const ClassifierConfig& cfg, Rng& rng);

// patchify -> embed -> +PE -> prepend class token -> encode -> head.
Tensor classifier_logits(Tape& tape, const ClassifierModel& model, const Tensor& image);

// One full shuffled pass. Pretrain expects mae (labels ignored); finetune
// and linear-probe expect clf; linear-probe updates only head parameters.
// Randomness is a deterministic function of (rng seed, epoch, item index).
EpochRecord train_epoch(TrainMode mode, MaeModel* mae, ClassifierModel* clf,
                        const std::vector<Example>& data, AdamState& opt, const ScheduleConfig& sched,
                        const AugmentConfig& aug, int batch_size, int epoch, const Rng& rng);

struct EvalResult {
    double loss = 0.0;
    double acc = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
};

EvalResult evaluate_classifier(const ClassifierModel& model, const std::vector<Example>& data);

}  // namespace maeforge
