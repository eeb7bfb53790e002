#include "maeforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace maeforge {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write: " + path);
}

// next whitespace-delimited header token, skipping '#' comments
std::string next_pgm_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos;
        } else {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw ValidationError("pgm: truncated header");
    return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos));
}

int parse_pgm_int(const std::string& tok) {
    for (char c : tok)
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw ValidationError("pgm: bad header field '" + tok + "'");
    return std::stoi(tok);
}

}  // namespace

bool Manifest::fully_labeled() const {
    for (const auto& r : records)
        if (r.label == kUnlabeled) return false;
    return !records.empty();
}

Tensor decode_pgm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    if (next_pgm_token(bytes, pos) != "P5") throw ValidationError("pgm: bad magic, expected P5");
    const int w = parse_pgm_int(next_pgm_token(bytes, pos));
    const int h = parse_pgm_int(next_pgm_token(bytes, pos));
    const int maxval = parse_pgm_int(next_pgm_token(bytes, pos));
    if (w <= 0 || h <= 0) throw ValidationError("pgm: bad dimensions");
    if (maxval != 255) throw ValidationError("pgm: maxval must be 255, got " + std::to_string(maxval));
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (pos + need > bytes.size()) throw ValidationError("pgm: truncated payload");

    Tensor img({h, w, 1});
    for (std::size_t i = 0; i < need; ++i)
        img.values()[i] = static_cast<Real>(bytes[pos + i]) / Real(255);
    return img;
}

std::vector<std::uint8_t> encode_pgm(const Tensor& image) {
    if (image.ndim() != 3 || image.dim(2) != 1)
        throw ValidationError("encode_pgm: expected an h x w x 1 image, got " + image.shape_str());
    const int h = image.dim(0), w = image.dim(1);
    std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + image.numel());
    for (std::size_t i = 0; i < image.numel(); ++i) {
        const double v = std::clamp(static_cast<double>(image.values()[i]), 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    return out;
}

Manifest load_manifest(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw ValidationError("manifest: cannot open " + csv_path);

    Manifest m;
    m.root = fs::path(csv_path).parent_path().string();
    if (m.root.empty()) m.root = ".";

    std::string line;
    int line_no = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "path,label")
                throw ValidationError("manifest: expected header 'path,label', got '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos)
            throw ValidationError("manifest row " + std::to_string(line_no) + ": missing comma");
        ManifestRecord rec;
        rec.path = line.substr(0, comma);
        const std::string label = line.substr(comma + 1);
        if (rec.path.empty())
            throw ValidationError("manifest row " + std::to_string(line_no) + ": empty path");
        if (label.empty()) {
            rec.label = kUnlabeled;
        } else if (label == "0" || label == "1") {
            rec.label = label[0] - '0';
        } else {
            throw ValidationError("manifest row " + std::to_string(line_no) + ": label '" + label +
                                  "' not in {0, 1, empty}");
        }
        if (!seen.insert(rec.path).second)
            throw ValidationError("manifest row " + std::to_string(line_no) + ": duplicate path " + rec.path);
        m.records.push_back(std::move(rec));
    }
    if (m.records.empty()) throw ValidationError("manifest: no records in " + csv_path);

    // validate every referenced image; the first one declares the corpus shape
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        Tensor img;
        try {
            img = decode_pgm(read_file(m.root + "/" + m.records[i].path));
        } catch (const Error& e) {
            throw ValidationError("manifest row " + std::to_string(i + 2) + " (" + m.records[i].path +
                                  "): " + e.what());
        }
        if (img.dim(0) != img.dim(1))
            throw ValidationError("manifest row " + std::to_string(i + 2) + ": image " + m.records[i].path +
                                  " is not square");
        if (i == 0) {
            m.side = img.dim(0);
            m.channels = img.dim(2);
        } else if (img.dim(0) != m.side) {
            throw ValidationError("manifest row " + std::to_string(i + 2) + ": image side " +
                                  std::to_string(img.dim(0)) + " differs from declared " +
                                  std::to_string(m.side));
        }
    }
    return m;
}

void write_manifest(const Manifest& m, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw Error("manifest: cannot write " + csv_path);
    out << "path,label\n";
    for (const auto& r : m.records) {
        out << r.path << ',';
        if (r.label != kUnlabeled) out << r.label;
        out << '\n';
    }
}

Tensor load_image(const Manifest& m, std::size_t index) {
    if (index >= m.records.size()) throw ValidationError("load_image: index out of range");
    return decode_pgm(read_file(m.root + "/" + m.records[index].path));
}

std::vector<Example> load_examples(const Manifest& m) {
    std::vector<Example> out;
    out.reserve(m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i)
        out.push_back(Example{load_image(m, i), m.records[i].label});
    return out;
}

namespace {

void add_ellipse(Tensor& img, Rng& rng) {
    const int side = img.dim(0);
    const double cx = rng.uniform(side * 0.3, side * 0.7);
    const double cy = rng.uniform(side * 0.3, side * 0.7);
    const double rx = rng.uniform(side * 0.12, side * 0.28);
    const double ry = rng.uniform(side * 0.12, side * 0.28);
    const double gain = rng.uniform(0.25, 0.55);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double dx = (x - cx) / rx, dy = (y - cy) / ry;
            if (dx * dx + dy * dy <= 1.0) img.at(y, x, 0) += static_cast<Real>(gain);
        }
}

Tensor synth_class_image(int cls, int side, double noise_std, Rng& rng) {
    Tensor img({side, side, 1});
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double t = static_cast<double>(cls == 0 ? x : y) / (side - 1);
            img.at(y, x, 0) = static_cast<Real>(0.1 + 0.45 * t);
        }
    add_ellipse(img, rng);
    if (noise_std > 0.0)
        for (auto& v : img.values()) v += static_cast<Real>(rng.normal(0.0, noise_std));
    for (auto& v : img.values()) v = std::clamp(v, Real(0), Real(1));
    return img;
}

Tensor synth_texture_image(int side, double noise_std, Rng& rng) {
    Tensor img({side, side, 1});
    const double freq = rng.uniform(1.0, 4.0);
    const double theta = rng.uniform(0.0, M_PI);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double u = (x * ct + y * st) / side;
            img.at(y, x, 0) = static_cast<Real>(0.5 + 0.3 * std::sin(2.0 * M_PI * freq * u + phase));
        }
    const int blobs = 1 + static_cast<int>(rng.uniform_int(3));
    for (int b = 0; b < blobs; ++b) add_ellipse(img, rng);
    if (noise_std > 0.0)
        for (auto& v : img.values()) v += static_cast<Real>(rng.normal(0.0, noise_std));
    for (auto& v : img.values()) v = std::clamp(v, Real(0), Real(1));
    return img;
}

}  // namespace

SynthResult synth_dataset(const SyntheticSpec& spec, const std::string& out_dir) {
    if (spec.side < 4) throw ValidationError("synth: side too small");
    if (spec.train_count < 1 || spec.test_count < 0) throw ValidationError("synth: bad counts");

    const Rng base(spec.seed);
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "train", ec);
    fs::create_directories(fs::path(out_dir) / "test", ec);
    if (ec) throw Error("synth: cannot create " + out_dir);

    auto emit = [&](const std::string& sub, int count, int index_base, const std::string& csv) {
        Manifest m;
        m.root = out_dir;
        m.side = spec.side;
        m.channels = 1;
        for (int i = 0; i < count; ++i) {
            Rng img_rng = base.fork(static_cast<std::uint64_t>(index_base + i));
            const int cls = spec.kind == SynthKind::ClassMotifs ? i % 2 : kUnlabeled;
            const Tensor img = spec.kind == SynthKind::ClassMotifs
                                   ? synth_class_image(cls, spec.side, spec.noise_std, img_rng)
                                   : synth_texture_image(spec.side, spec.noise_std, img_rng);
            char name[64];
            std::snprintf(name, sizeof(name), "%s/img_%05d.pgm", sub.c_str(), i);
            write_file(out_dir + "/" + name, encode_pgm(img));
            m.records.push_back(ManifestRecord{name, cls});
        }
        write_manifest(m, csv);
        return csv;
    };

    SynthResult res;
    res.train_manifest = emit("train", spec.train_count, 0, out_dir + "/train_manifest.csv");
    res.test_manifest = emit("test", spec.test_count, spec.train_count, out_dir + "/test_manifest.csv");
    return res;
}

std::pair<Manifest, Manifest> split(const Manifest& m, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split: fraction " + std::to_string(fraction) + " outside (0, 1)");

    // strata by label, unlabeled records forming their own stratum
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < m.records.size(); ++i) groups[m.records[i].label].push_back(i);

    const std::size_t total_train =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(m.records.size()) + 0.5));

    // per-group floor quota, remainders distributed by largest fraction
    std::vector<std::pair<double, int>> remainders;  // (-fraction, label) for stable ordering
    std::map<int, std::size_t> quota;
    std::size_t assigned = 0;
    for (const auto& [label, idxs] : groups) {
        const double want = fraction * static_cast<double>(idxs.size());
        quota[label] = static_cast<std::size_t>(std::floor(want));
        assigned += quota[label];
        remainders.push_back({-(want - std::floor(want)), label});
    }
    std::sort(remainders.begin(), remainders.end());
    for (const auto& [negfrac, label] : remainders) {
        if (assigned >= total_train) break;
        if (quota[label] < groups[label].size()) {
            ++quota[label];
            ++assigned;
        }
    }

    Manifest train = m, eval = m;
    train.records.clear();
    eval.records.clear();
    for (auto& [label, idxs] : groups) {
        const std::vector<int> perm = rng.permutation(static_cast<int>(idxs.size()));
        for (std::size_t k = 0; k < idxs.size(); ++k) {
            const auto& rec = m.records[idxs[static_cast<std::size_t>(perm[k])]];
            (k < quota[label] ? train : eval).records.push_back(rec);
        }
    }
    if (train.records.empty() || eval.records.empty())
        throw ValidationError("split: a side would be empty");
    return {train, eval};
}

}  // namespace maeforge
