#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maeforge/rng.hpp"
#include "maeforge/tensor.hpp"

namespace maeforge {

constexpr int kUnlabeled = -1;

struct ManifestRecord {
    std::string path;  // relative to the manifest root
    int label = kUnlabeled;
};

// Dataset index: CSV with header "path,label" (label empty for unlabeled),
// image files are binary PGM (P5) relative to the manifest root. All images
// in one manifest share the declared square side and channel count.
struct Manifest {
    std::string root;
    std::vector<ManifestRecord> records;
    int side = 0;
    int channels = 1;

    bool fully_labeled() const;
};

// Loads and validates: every row parses, paths are unique, every referenced
// image decodes and matches the manifest-wide dimensions.
Manifest load_manifest(const std::string& csv_path);
void write_manifest(const Manifest& m, const std::string& csv_path);

// 8-bit binary PGM (P5, maxval 255) -> h x w x 1 tensor scaled v/255.
Tensor decode_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm(const Tensor& image);

Tensor load_image(const Manifest& m, std::size_t index);

struct Example {
    Tensor image;
    int label = kUnlabeled;
};

std::vector<Example> load_examples(const Manifest& m);

enum class SynthKind {
    // class 0: horizontal intensity ramp + ellipse; class 1: vertical ramp
    // + ellipse; labeled, approximately balanced.
    ClassMotifs,
    // unlabeled gratings with random orientation/frequency plus blobs; the
    // generic-domain stand-in for large-corpus pretraining.
    Textures,
};

struct SyntheticSpec {
    SynthKind kind = SynthKind::ClassMotifs;
    int side = 32;
    double noise_std = 0.05;
    int train_count = 200;
    int test_count = 100;
    std::uint64_t seed = 0;
};

struct SynthResult {
    std::string train_manifest;
    std::string test_manifest;
};

// Writes PGM images plus train/test manifests under out_dir. Same spec and
// seed produce byte-identical files.
SynthResult synth_dataset(const SyntheticSpec& spec, const std::string& out_dir);

// Disjoint, exhaustive, seeded split; stratified by label where labels
// exist. fraction is the share of the first (train) part.
std::pair<Manifest, Manifest> split(const Manifest& m, double fraction, Rng& rng);

}  // namespace maeforge
