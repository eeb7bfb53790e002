#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "maeforge/data.hpp"
#include "maeforge/gradcheck.hpp"
#include "maeforge/mae.hpp"
#include "maeforge/metrics.hpp"
#include "maeforge/patcher.hpp"
#include "maeforge/training.hpp"

namespace py = pybind11;
using namespace maeforge;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<int> shape(static_cast<std::size_t>(arr.ndim()));
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] = static_cast<int>(arr.shape(i));
    std::vector<Real> values(static_cast<std::size_t>(arr.size()));
    const double* src = arr.data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<Real>(src[i]);
    return Tensor(std::move(shape), std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.ndim());
    for (std::size_t i = 0; i < t.ndim(); ++i) shape[i] = t.dim(i);
    py::array_t<double> arr(shape);
    double* dst = arr.mutable_data();
    for (std::size_t i = 0; i < t.numel(); ++i) dst[i] = static_cast<double>(t.values()[i]);
    return arr;
}

Tensor as_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    Tensor t = tensor_from_array(arr);
    if (t.ndim() == 2) return Tensor({t.dim(0), t.dim(1), 1}, t.values());
    if (t.ndim() == 3) return t;
    throw ValidationError("expected an (h, w) or (h, w, c) image array");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "maeforge core operations: patch bookkeeping, masking, MAE forward, metrics";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ValidationError>(m, "MaeforgeValidationError", PyExc_ValueError);

    m.def(
        "patchify",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image, int patch) {
            const PatchSet ps = patchify(as_image(image), patch);
            return py::make_tuple(array_from_tensor(ps.patches), ps.grid_rows, ps.grid_cols, ps.channels);
        },
        py::arg("image"), py::arg("patch"),
        "Split an image into flattened non-overlapping patches; returns (patches, grid_rows, grid_cols, "
        "channels).");

    m.def(
        "unpatchify",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& patches, int grid_rows,
           int grid_cols, int patch, int channels) {
            PatchSet ps;
            ps.patches = tensor_from_array(patches);
            ps.grid_rows = grid_rows;
            ps.grid_cols = grid_cols;
            ps.patch = patch;
            ps.channels = channels;
            return array_from_tensor(unpatchify(ps));
        },
        py::arg("patches"), py::arg("grid_rows"), py::arg("grid_cols"), py::arg("patch"),
        py::arg("channels") = 1);

    m.def(
        "sincos_pos_encoding",
        [](int grid_rows, int grid_cols, int width) {
            return array_from_tensor(sincos_pos_encoding(grid_rows, grid_cols, width).table);
        },
        py::arg("grid_rows"), py::arg("grid_cols"), py::arg("width"));

    m.def(
        "random_mask",
        [](int n, double ratio, std::uint64_t seed) {
            Rng rng(seed);
            const MaskPlan plan = random_mask(n, ratio, rng);
            return py::make_tuple(plan.visible_idx, plan.masked_idx);
        },
        py::arg("n"), py::arg("ratio"), py::arg("seed") = 0,
        "Uniform mask sample; returns (visible_indices, masked_indices).");

    m.def(
        "cosine_lr",
        [](int epoch, double base_lr, double eta_min, int half_period) {
            return cosine_lr(epoch, ScheduleConfig{base_lr, eta_min, half_period});
        },
        py::arg("epoch"), py::arg("base_lr") = 1e-4, py::arg("eta_min") = 0.0, py::arg("half_period") = 10);

    m.def(
        "gelu",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
            Tape tape(false);
            return array_from_tensor(gelu(tape, tensor_from_array(x)));
        },
        py::arg("x"));

    m.def(
        "softmax_rows",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
            Tape tape(false);
            return array_from_tensor(softmax_rows(tape, tensor_from_array(x)));
        },
        py::arg("x"));

    m.def(
        "accuracy",
        [](const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
            return accuracy(EvalBatch{scores, labels}, threshold);
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);
    m.def(
        "f1",
        [](const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
            return f1(EvalBatch{scores, labels}, threshold);
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);
    m.def(
        "auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            return auc(EvalBatch{scores, labels});
        },
        py::arg("scores"), py::arg("labels"));

    m.def(
        "gradcheck",
        [](std::uint64_t seed) {
            const GradCheckReport report = run_gradcheck(seed);
            py::dict cases;
            for (const auto& c : report.cases) cases[py::str(c.name)] = c.max_rel_err;
            py::dict out;
            out["max_rel_err"] = report.max_rel_err;
            out["seconds"] = report.seconds;
            out["cases"] = cases;
            return out;
        },
        py::arg("seed") = 7);

    m.def(
        "synth_dataset",
        [](const std::string& out_dir, const std::string& kind, int side, int train_count, int test_count,
           double noise_std, std::uint64_t seed) {
            SyntheticSpec spec;
            spec.kind = kind == "textures" ? SynthKind::Textures : SynthKind::ClassMotifs;
            spec.side = side;
            spec.train_count = train_count;
            spec.test_count = test_count;
            spec.noise_std = noise_std;
            spec.seed = seed;
            const SynthResult res = synth_dataset(spec, out_dir);
            return py::make_tuple(res.train_manifest, res.test_manifest);
        },
        py::arg("out_dir"), py::arg("kind") = "class-motifs", py::arg("side") = 32,
        py::arg("train_count") = 200, py::arg("test_count") = 100, py::arg("noise_std") = 0.05,
        py::arg("seed") = 0);

    m.def(
        "mae_reconstruct",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image, int patch,
           double mask_ratio, std::uint64_t seed) {
            const Tensor img = as_image(image);
            if (img.dim(0) != img.dim(1)) throw ValidationError("mae_reconstruct: image must be square");
            const MaeConfig cfg(EncoderConfig(1, 8, 2), 1, 8, 2, mask_ratio, patch, img.dim(0), img.dim(2));
            Rng rng(seed);
            const MaeParams params = make_mae_params(cfg, rng);
            Tape tape(false);
            const MaeForwardResult fwd = mae_forward(tape, img, params, cfg, rng);
            const PatchSet original = patchify(img, patch);
            return py::make_tuple(
                array_from_tensor(
                    reconstruct_image(fwd.pred_patches, fwd.plan, original, ReconstructMode::PasteVisible)),
                fwd.plan.visible_idx, fwd.plan.masked_idx);
        },
        py::arg("image"), py::arg("patch") = 4, py::arg("mask_ratio") = 0.75, py::arg("seed") = 0,
        "Single forward pass of a freshly initialized desk-scale MAE; returns (reconstruction, visible, "
        "masked).");

    m.def(
        "pretrain_smoke",
        [](int steps, std::uint64_t seed) {
            const MaeConfig cfg(EncoderConfig(1, 8, 2), 1, 8, 2, 0.75, 4, 16, 1);
            Rng rng(seed);
            MaeModel model{cfg, make_mae_params(cfg, rng)};

            std::vector<Example> data;
            for (int i = 0; i < 4; ++i) {
                Tensor img({16, 16, 1});
                for (auto& v : img.values()) v = static_cast<Real>(rng.uniform(0.0, 1.0));
                data.push_back(Example{img, kUnlabeled});
            }

            AdamState opt(named_tensors(model.params));
            const ScheduleConfig sched{1e-3, 0.0, 10};
            const AugmentConfig aug{false, 0.5, 1.0, 16};
            std::vector<double> losses;
            for (int epoch = 0; epoch < steps; ++epoch)
                losses.push_back(train_epoch(TrainMode::Pretrain, &model, nullptr, data, opt, sched, aug, 4,
                                             epoch, rng)
                                     .loss);
            return losses;
        },
        py::arg("steps") = 5, py::arg("seed") = 0,
        "Train a tiny MAE for a few epochs on random images; returns the per-epoch losses.");
}
