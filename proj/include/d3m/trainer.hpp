#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "d3m/artifact.hpp"
#include "d3m/classifier.hpp"
#include "d3m/labeler.hpp"

namespace d3m {

// A single student training sample: one collage cell resized to the student
// input, paired with its stored label row. Derived only from artifact replay.
struct TrainUnit {
    Image image;
    std::vector<float> label;  // length k, one-hot or soft
    int class_id = 0;
};

enum class StudentLoss : uint8_t { one_hot_ce = 0, soft_kd = 1 };

struct StudentConfig {
    std::string arch = "convnet-s";  // convnet-s | convnet-m
    int epochs = 50;
    double lr = 2e-3;
    StudentLoss loss = StudentLoss::soft_kd;
    bool augment = false;  // only legal with one-hot CE
    uint64_t seed = 0;

    void check() const {
        if (loss == StudentLoss::soft_kd && augment)
            throw ConfigInvalid("augmentation is not allowed with stored soft labels");
    }
};

inline ConvNetConfig student_arch_config(const std::string& arch, int in_h, int in_w, int k) {
    if (arch == "convnet-s") return {in_h, in_w, k, 12, 2};
    if (arch == "convnet-m") return {in_h, in_w, k, 16, 2};
    throw ConfigInvalid("unknown student architecture: " + arch);
}

// Regenerates collages from (prompt, seed), cuts the grid cells in ascending
// index order, and keeps exactly `ipc` units per class; leftover cells of the
// last collage are dropped.
inline std::vector<TrainUnit> materialize_trainset(const DistilledArtifact& artifact,
                                                   const DiffusionBackend& backend, int ipc, int student_h,
                                                   int student_w,
                                                   const PromptTemplate& tpl = PromptTemplate::photo_of_placeholder()) {
    if (ipc < 1) throw ConfigInvalid("ipc must be >= 1");
    LabelerConfig lcfg;
    lcfg.ipc = ipc;
    lcfg.grid_rows = artifact.grid_rows;
    lcfg.grid_cols = artifact.grid_cols;
    lcfg.mode = artifact.mode;
    lcfg.precision = artifact.precision;
    lcfg.temperature = artifact.tau;

    std::vector<TrainUnit> units;
    uint64_t gen_hash = 0xcbf29ce484222325ULL;
    for (const auto& cls : artifact.classes) {
        int taken = 0;
        for (const auto& rec : cls.records) {
            auto rr = replay(backend, cls.prompt, rec, lcfg, static_cast<int>(artifact.k), tpl);
            uint64_t h = rr.collage.pixels.content_hash();
            gen_hash = fnv1a(&h, sizeof(h), gen_hash);
            for (int cell = 0; cell < artifact.cells() && taken < ipc; ++cell, ++taken) {
                TrainUnit u;
                u.image = resize(rr.collage.cell_pixels(cell), student_h, student_w);
                u.class_id = cls.class_id;
                u.label.assign(rr.labels.probs.begin() + static_cast<long>(cell) * rr.labels.k,
                               rr.labels.probs.begin() + static_cast<long>(cell + 1) * rr.labels.k);
                units.push_back(std::move(u));
            }
        }
        if (taken < ipc)
            throw ConfigInvalid("artifact has too few records for ipc=" + std::to_string(ipc));
    }
    if (artifact.generation_hash != 0 && gen_hash != artifact.generation_hash) throw NonDeterministicBackend();
    return units;
}

// seeded flips + random resized crops, the fixed one-hot-mode augmentation set
inline Image augment_image(const Image& img, Rng& rng) {
    Image out = img;
    if (rng.uniform() < 0.5) {  // horizontal flip
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w / 2; ++x)
                for (int c = 0; c < 3; ++c) std::swap(out.at(y, x, c), out.at(y, out.w - 1 - x, c));
    }
    double scale = 0.6 + 0.4 * rng.uniform();
    int ch = std::max(1, static_cast<int>(out.h * scale));
    int cw = std::max(1, static_cast<int>(out.w * scale));
    int top = static_cast<int>(rng.below(static_cast<uint64_t>(out.h - ch + 1)));
    int left = static_cast<int>(rng.below(static_cast<uint64_t>(out.w - cw + 1)));
    return resize(crop(out, top, left, ch, cw), img.h, img.w);
}

struct StudentResult {
    ConvNet model;
    std::vector<double> epoch_losses;
};

inline StudentResult train_student(const std::vector<TrainUnit>& units, const StudentConfig& cfg, int k) {
    cfg.check();
    if (units.empty()) throw EmptyDataset();
    int in_h = units.front().image.h, in_w = units.front().image.w;
    ConvNet net(student_arch_config(cfg.arch, in_h, in_w, k));
    net.init(mix_seed(cfg.seed, 0x57));

    Rng rng(mix_seed(cfg.seed, 0x1d));
    nn::Adam opt;
    opt.lr = cfg.lr;
    auto params = net.params();
    std::vector<size_t> order(units.size());
    std::iota(order.begin(), order.end(), 0);
    StudentResult res{std::move(net), {}};
    for (int e = 0; e < cfg.epochs; ++e) {
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double total = 0.0;
        for (size_t idx : order) {
            const TrainUnit& u = units[idx];
            Image img = cfg.augment ? augment_image(u.image, rng) : u.image;
            total += res.model.train_example(nn::to_chw(img), u.class_id, u.label.data());
            opt.step(params);
        }
        double mean = total / static_cast<double>(units.size());
        if (!std::isfinite(mean)) throw DivergedTraining();
        res.epoch_losses.push_back(mean);
    }
    return res;
}

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> per_class;
};

inline EvalResult evaluate(const ConvNet& model, const std::vector<LabeledImage>& test_set, int k) {
    EvalResult r;
    std::vector<int> hit(static_cast<size_t>(k), 0), tot(static_cast<size_t>(k), 0);
    for (const auto& ex : test_set) {
        int pred = predict(model, ex.pixels);
        tot[static_cast<size_t>(ex.label)]++;
        if (pred == ex.label) hit[static_cast<size_t>(ex.label)]++;
    }
    size_t total_hit = 0;
    for (int c = 0; c < k; ++c) {
        r.per_class.push_back(tot[static_cast<size_t>(c)] ? static_cast<double>(hit[static_cast<size_t>(c)]) /
                                                                tot[static_cast<size_t>(c)]
                                                          : 0.0);
        total_hit += static_cast<size_t>(hit[static_cast<size_t>(c)]);
    }
    r.accuracy = test_set.empty() ? 0.0 : static_cast<double>(total_hit) / static_cast<double>(test_set.size());
    return r;
}

// ---- reporting ----

struct RunRecord {
    std::string dataset;
    std::string teacher_arch;
    std::string student_arch;
    std::string mode;  // "soft" | "one_hot" | "baseline"
    int ipc = 0;
    int grid_rows = 1, grid_cols = 1;
    size_t artifact_bytes = 0;
    std::vector<double> seed_accuracies;

    double mean() const {
        return std::accumulate(seed_accuracies.begin(), seed_accuracies.end(), 0.0) /
               static_cast<double>(seed_accuracies.size());
    }
    double stddev() const {
        double m = mean(), s = 0.0;
        for (double a : seed_accuracies) s += (a - m) * (a - m);
        return seed_accuracies.size() > 1 ? std::sqrt(s / static_cast<double>(seed_accuracies.size() - 1)) : 0.0;
    }
};

inline std::string results_csv(const std::vector<RunRecord>& runs) {
    std::ostringstream os;
    os << "dataset,teacher_arch,student_arch,mode,ipc,grid,artifact_bytes,mean_accuracy,std_accuracy,seeds\n";
    for (const auto& r : runs) {
        os << r.dataset << ',' << r.teacher_arch << ',' << r.student_arch << ',' << r.mode << ',' << r.ipc << ','
           << r.grid_rows << 'x' << r.grid_cols << ',' << r.artifact_bytes << ',' << r.mean() << ',' << r.stddev()
           << ',';
        for (size_t i = 0; i < r.seed_accuracies.size(); ++i)
            os << (i ? ";" : "") << r.seed_accuracies[i];
        os << '\n';
    }
    return os.str();
}

// cross-architecture matrix in the "labeling arch x student arch" layout
inline std::string cross_matrix_csv(const std::vector<RunRecord>& runs) {
    std::vector<std::string> teachers, students;
    for (const auto& r : runs) {
        if (std::find(teachers.begin(), teachers.end(), r.teacher_arch) == teachers.end())
            teachers.push_back(r.teacher_arch);
        if (std::find(students.begin(), students.end(), r.student_arch) == students.end())
            students.push_back(r.student_arch);
    }
    std::ostringstream os;
    os << "labeler\\student";
    for (const auto& s : students) os << ',' << s;
    os << '\n';
    for (const auto& t : teachers) {
        os << t;
        for (const auto& s : students) {
            double v = -1.0;
            for (const auto& r : runs)
                if (r.teacher_arch == t && r.student_arch == s) v = r.mean();
            os << ',';
            if (v >= 0.0) os << v;
        }
        os << '\n';
    }
    return os.str();
}

// minimal accuracy-vs-bytes scatter, log-x
inline std::string accuracy_vs_bytes_svg(const std::vector<RunRecord>& runs) {
    const int W = 640, H = 420, M = 60;
    double min_b = 1e300, max_b = 0.0;
    for (const auto& r : runs) {
        min_b = std::min(min_b, static_cast<double>(r.artifact_bytes));
        max_b = std::max(max_b, static_cast<double>(r.artifact_bytes));
    }
    if (runs.empty()) min_b = 1.0, max_b = 10.0;
    if (min_b == max_b) max_b = min_b * 10.0;
    auto xf = [&](double b) {
        return M + (std::log10(b) - std::log10(min_b)) / (std::log10(max_b) - std::log10(min_b)) * (W - 2 * M);
    };
    auto yf = [&](double a) { return H - M - a * (H - 2 * M); };
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
       << "<rect width='100%' height='100%' fill='white'/>\n"
       << "<line x1='" << M << "' y1='" << H - M << "' x2='" << W - M << "' y2='" << H - M
       << "' stroke='black'/>\n"
       << "<line x1='" << M << "' y1='" << M << "' x2='" << M << "' y2='" << H - M << "' stroke='black'/>\n"
       << "<text x='" << W / 2 << "' y='" << H - 15 << "' text-anchor='middle'>artifact bytes (log)</text>\n"
       << "<text x='18' y='" << H / 2 << "' transform='rotate(-90 18 " << H / 2
       << ")' text-anchor='middle'>top-1 accuracy</text>\n";
    for (const auto& r : runs) {
        const char* color = r.mode == "soft" ? "#1f77b4" : (r.mode == "one_hot" ? "#d62728" : "#7f7f7f");
        os << "<circle cx='" << xf(static_cast<double>(r.artifact_bytes)) << "' cy='" << yf(r.mean())
           << "' r='5' fill='" << color << "'/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace d3m
