// d3m — dataset distillation via prompt inversion, single CLI entry point.
//
// Subcommands: synth, teacher, patches, collages, backend, invert, label,
// pack, inspect, train, report, run. Exit codes: 0 success, 2 config error,
// 3 stage failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "d3m/d3m.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace d3m;

namespace {

json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigInvalid("cannot read " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigInvalid(path + ": " + e.what());
    }
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << text;
}

uint32_t file_crc32(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return crc32(bytes.data(), bytes.size());
}

TeacherModel load_teacher(const std::string& path) {
    if (!fs::exists(path)) throw ConfigInvalid("missing teacher checkpoint " + path);
    return TeacherModel(ConvNet::load(path));
}

ToyBackend load_backend(const std::string& path) {
    if (!fs::exists(path)) throw ConfigInvalid("missing backend checkpoint " + path);
    return ToyBackend::load(path);
}

LabelMode parse_mode(const std::string& s) {
    if (s == "soft") return LabelMode::soft;
    if (s == "one_hot" || s == "hot") return LabelMode::one_hot;
    throw ConfigInvalid("unknown label mode: " + s);
}

LabelPrecision parse_precision(const std::string& s) {
    if (s == "f16") return LabelPrecision::f16;
    if (s == "f32") return LabelPrecision::f32;
    throw ConfigInvalid("unknown label precision: " + s);
}

// FNV over every regenerated collage hash, class order then record order —
// the same reduction materialize_trainset verifies against.
uint64_t compute_generation_hash(const DistilledArtifact& a, const DiffusionBackend& backend) {
    LabelerConfig lc;
    lc.grid_rows = a.grid_rows;
    lc.grid_cols = a.grid_cols;
    lc.mode = a.mode;
    lc.precision = a.precision;
    lc.temperature = a.tau;
    uint64_t gen_hash = 0xcbf29ce484222325ULL;
    for (const auto& cls : a.classes)
        for (const auto& rec : cls.records) {
            auto rr = replay(backend, cls.prompt, rec, lc, static_cast<int>(a.k));
            uint64_t h = rr.collage.pixels.content_hash();
            gen_hash = fnv1a(&h, sizeof(h), gen_hash);
        }
    return gen_hash;
}

// ---- stage implementations (shared by subcommands and `run`) ----

struct PatchesArgs {
    std::string data, teacher, out;
    int patch = 8, candidates = 16;
    uint64_t seed = 0;
    bool exhaustive = false, max_loss = false;
};

void stage_patches(const PatchesArgs& a) {
    auto ds = load_dataset(a.data);
    auto teacher = load_teacher(a.teacher);
    PatchSamplerConfig pcfg;
    pcfg.patch_h = pcfg.patch_w = a.patch;
    pcfg.n_candidates = a.candidates;
    pcfg.exhaustive = a.exhaustive;
    pcfg.select_max_loss = a.max_loss;

    fs::create_directories(a.out);
    json index;
    index["classes"] = ds.class_names;
    index["patch_h"] = a.patch;
    index["patch_w"] = a.patch;
    index["teacher_hash"] = hex64(teacher.frozen_hash());
    index["seed"] = a.seed;
    index["patches"] = json::array();
    for (size_t i = 0; i < ds.images.size(); ++i) {
        Patch p = select_informative_patch(teacher, ds.images[i], pcfg, mix_seed(a.seed, i),
                                           static_cast<int64_t>(i));
        char name[32];
        std::snprintf(name, sizeof(name), "patch_%05zu.ppm", i);
        write_ppm(p.pixels, (fs::path(a.out) / name).string());
        index["patches"].push_back({{"file", name},
                                    {"class", ds.images[i].label},
                                    {"source_image_id", p.source_image_id},
                                    {"top", p.top},
                                    {"left", p.left},
                                    {"score", p.score}});
    }
    write_text((fs::path(a.out) / "patches.json").string(), index.dump(2) + "\n");
}

struct CollagesArgs {
    std::string patches, out;
    int grid_rows = 2, grid_cols = 2, height = 16, width = 16;
    uint64_t seed = 0;
};

void stage_collages(const CollagesArgs& a) {
    json index = read_json((fs::path(a.patches) / "patches.json").string());
    auto class_names = index.at("classes").get<std::vector<std::string>>();
    std::vector<std::vector<Patch>> per_class(class_names.size());
    for (const auto& e : index.at("patches")) {
        Patch p;
        p.pixels = read_ppm((fs::path(a.patches) / e.at("file").get<std::string>()).string());
        p.source_image_id = e.at("source_image_id").get<int64_t>();
        p.top = e.at("top").get<int>();
        p.left = e.at("left").get<int>();
        p.score = e.at("score").get<float>();
        per_class[e.at("class").get<size_t>()].push_back(std::move(p));
    }

    fs::create_directories(a.out);
    json out;
    out["classes"] = class_names;
    out["grid_rows"] = a.grid_rows;
    out["grid_cols"] = a.grid_cols;
    out["height"] = a.height;
    out["width"] = a.width;
    out["seed"] = a.seed;
    out["collages"] = json::array();
    for (size_t c = 0; c < class_names.size(); ++c) {
        auto collages = build_collages(per_class[c], static_cast<int>(c), a.grid_rows, a.grid_cols, a.height,
                                       a.width, mix_seed(a.seed, c));
        for (size_t i = 0; i < collages.size(); ++i) {
            char name[48];
            std::snprintf(name, sizeof(name), "collage_c%02zu_%04zu.ppm", c, i);
            write_ppm(collages[i].pixels, (fs::path(a.out) / name).string());
            json cells = json::array();
            for (const auto& cell : collages[i].cells)
                cells.push_back({{"source_image_id", cell.source_image_id}, {"generated", cell.generated}});
            out["collages"].push_back({{"file", name}, {"class", c}, {"cells", cells}});
        }
    }
    write_text((fs::path(a.out) / "collages.json").string(), out.dump(2) + "\n");
}

struct LoadedCollages {
    std::vector<std::string> class_names;
    std::vector<std::vector<Collage>> per_class;
    int grid_rows = 2, grid_cols = 2, height = 16, width = 16;
};

LoadedCollages load_collages(const std::string& dir) {
    json j = read_json((fs::path(dir) / "collages.json").string());
    LoadedCollages lc;
    lc.class_names = j.at("classes").get<std::vector<std::string>>();
    lc.grid_rows = j.at("grid_rows").get<int>();
    lc.grid_cols = j.at("grid_cols").get<int>();
    lc.height = j.at("height").get<int>();
    lc.width = j.at("width").get<int>();
    lc.per_class.resize(lc.class_names.size());
    for (const auto& e : j.at("collages")) {
        Collage col;
        col.pixels = read_ppm((fs::path(dir) / e.at("file").get<std::string>()).string());
        col.grid_rows = lc.grid_rows;
        col.grid_cols = lc.grid_cols;
        col.class_id = e.at("class").get<int>();
        for (const auto& cell : e.at("cells"))
            col.cells.push_back({cell.at("source_image_id").get<int64_t>(), cell.at("generated").get<bool>()});
        lc.per_class[static_cast<size_t>(col.class_id)].push_back(std::move(col));
    }
    return lc;
}

struct BackendTrainArgs {
    std::string collages, out;
    int epochs = 60;
    double lr = 3e-3;
    uint64_t seed = 42;
    ToyBackendConfig cfg;
};

void stage_backend(const BackendTrainArgs& a) {
    auto lc = load_collages(a.collages);
    std::vector<Collage> all;
    for (const auto& v : lc.per_class)
        for (const auto& col : v) all.push_back(col);
    ToyBackendConfig cfg = a.cfg;
    cfg.height = lc.height;
    cfg.width = lc.width;
    ToyBackend backend(cfg, toy_vocabulary(lc.class_names), a.seed);
    ToyTrainConfig tcfg;
    tcfg.epochs = a.epochs;
    tcfg.lr = a.lr;
    tcfg.seed = a.seed;
    train_toy_backend(backend, all, lc.class_names, tcfg);
    fs::path p(a.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    backend.save(a.out);
}

struct InvertArgs {
    std::string collages, backend, out, losses_dir;
    int class_id = -1;  // -1 = all classes
    InversionConfig cfg;
    bool engineered = false;
};

void stage_invert(const InvertArgs& a) {
    auto lc = load_collages(a.collages);
    auto backend = load_backend(a.backend);
    int k = static_cast<int>(lc.class_names.size());

    DistilledArtifact art;
    if (fs::exists(a.out)) art = load_artifact(a.out);  // update a single class in place
    art.d = static_cast<uint32_t>(backend.d());
    art.k = static_cast<uint32_t>(k);
    art.grid_rows = static_cast<uint16_t>(lc.grid_rows);
    art.grid_cols = static_cast<uint16_t>(lc.grid_cols);
    art.img_h = static_cast<uint16_t>(lc.height);
    art.img_w = static_cast<uint16_t>(lc.width);
    art.backend_fingerprint = backend.fingerprint();
    art.classes.resize(static_cast<size_t>(k));

    for (int c = 0; c < k; ++c) {
        if (a.class_id >= 0 && c != a.class_id) continue;
        auto& slot = art.classes[static_cast<size_t>(c)];
        slot.class_id = c;
        if (a.engineered) {
            slot.prompt = engineered_prompt_embedding(backend, c, lc.class_names[c]);
            continue;
        }
        auto res = invert_class(backend, PromptTemplate::photo_of_placeholder(), lc.per_class[static_cast<size_t>(c)],
                                a.cfg, c, lc.class_names[c]);
        slot.prompt = res.embedding;
        if (!a.losses_dir.empty()) {
            std::string csv = "step,loss\n";
            for (size_t s = 0; s < res.losses.size(); ++s)
                csv += std::to_string(s) + "," + std::to_string(res.losses[s]) + "\n";
            write_text((fs::path(a.losses_dir) / ("loss_class_" + std::to_string(c) + ".csv")).string(), csv);
        }
    }
    for (const auto& cls : art.classes)
        if (cls.prompt.vector.empty())
            throw ConfigInvalid("class " + std::to_string(cls.class_id) +
                                " has no prompt yet; invert it or pass no --class to do all");
    save_artifact(art, a.out);
}

struct LabelArgs {
    std::string artifact, teacher, backend, out;
    LabelerConfig cfg;
    uint64_t seed = 777;
};

void stage_label(const LabelArgs& a) {
    auto art = load_artifact(a.artifact);
    auto teacher = load_teacher(a.teacher);
    auto backend = load_backend(a.backend);
    if (backend.fingerprint() != art.backend_fingerprint)
        throw ConfigInvalid("backend checkpoint does not match the artifact fingerprint");
    LabelerConfig cfg = a.cfg;
    cfg.grid_rows = art.grid_rows;
    cfg.grid_cols = art.grid_cols;
    art.mode = cfg.mode;
    art.precision = cfg.precision;
    art.tau = cfg.temperature;
    art.generation_hash = 0;  // invalidated until `pack`
    for (auto& cls : art.classes) cls.records = make_records(backend, cls.prompt, teacher, cfg, a.seed);
    save_artifact(art, a.out.empty() ? a.artifact : a.out);
}

struct PackArgs {
    std::string artifact, backend, out;
};

void stage_pack(const PackArgs& a) {
    auto art = load_artifact(a.artifact);
    auto backend = load_backend(a.backend);
    if (backend.fingerprint() != art.backend_fingerprint)
        throw ConfigInvalid("backend checkpoint does not match the artifact fingerprint");
    art.generation_hash = compute_generation_hash(art, backend);
    art.validate();
    save_artifact(art, a.out.empty() ? a.artifact : a.out);
}

struct TrainArgs {
    std::string artifact, backend, data, out;
    std::vector<std::string> students{"convnet-s"};
    int ipc = 10, seeds = 3;
    StudentConfig student;  // epochs/lr/loss/augment; arch and seed filled per run
    bool loss_explicit = false;
};

void stage_train(const TrainArgs& a) {
    auto art = load_artifact(a.artifact);
    auto backend = load_backend(a.backend);
    if (backend.fingerprint() != art.backend_fingerprint)
        throw ConfigInvalid("backend checkpoint does not match the artifact fingerprint");
    auto test = load_dataset(a.data);
    int k = static_cast<int>(art.k);
    if (static_cast<int>(test.class_names.size()) != k)
        throw ConfigInvalid("test dataset class count does not match the artifact");

    auto units = materialize_trainset(art, backend, a.ipc, test.height, test.width);
    StudentConfig base = a.student;
    if (!a.loss_explicit)
        base.loss = art.mode == LabelMode::soft ? StudentLoss::soft_kd : StudentLoss::one_hot_ce;
    base.check();

    fs::create_directories(a.out);
    for (const auto& arch : a.students) {
        RunRecord rec;
        rec.dataset = a.data;
        rec.teacher_arch = "teacher";
        rec.student_arch = arch;
        rec.mode = art.mode == LabelMode::soft ? "soft" : "one_hot";
        rec.ipc = a.ipc;
        rec.grid_rows = art.grid_rows;
        rec.grid_cols = art.grid_cols;
        rec.artifact_bytes = account(art).total();
        for (int s = 0; s < a.seeds; ++s) {
            StudentConfig sc = base;
            sc.arch = arch;
            sc.seed = static_cast<uint64_t>(s) + 1;
            auto sr = train_student(units, sc, k);
            rec.seed_accuracies.push_back(evaluate(sr.model, test.images, k).accuracy);
        }
        json j;
        j["dataset"] = rec.dataset;
        j["teacher_arch"] = rec.teacher_arch;
        j["student_arch"] = rec.student_arch;
        j["mode"] = rec.mode;
        j["ipc"] = rec.ipc;
        j["grid_rows"] = rec.grid_rows;
        j["grid_cols"] = rec.grid_cols;
        j["artifact_bytes"] = rec.artifact_bytes;
        j["seed_accuracies"] = rec.seed_accuracies;
        j["mean"] = rec.mean();
        j["std"] = rec.stddev();
        std::string name = "run_" + arch + "_" + rec.mode + "_ipc" + std::to_string(a.ipc) + "_grid" +
                           std::to_string(rec.grid_rows) + "x" + std::to_string(rec.grid_cols) + ".json";
        write_text((fs::path(a.out) / name).string(), j.dump(2) + "\n");
        std::printf("%s %s ipc=%d: mean %.4f +/- %.4f\n", arch.c_str(), rec.mode.c_str(), a.ipc, rec.mean(),
                    rec.stddev());
    }
}

struct ReportArgs {
    std::string runs, out;
};

void stage_report(const ReportArgs& a) {
    std::vector<RunRecord> runs;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.runs))
        if (e.is_regular_file() && e.path().extension() == ".json" &&
            e.path().filename().string().rfind("run_", 0) == 0)
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigInvalid("no run_*.json files in " + a.runs);
    for (const auto& p : files) {
        json j = read_json(p.string());
        RunRecord r;
        r.dataset = j.at("dataset").get<std::string>();
        r.teacher_arch = j.at("teacher_arch").get<std::string>();
        r.student_arch = j.at("student_arch").get<std::string>();
        r.mode = j.at("mode").get<std::string>();
        r.ipc = j.at("ipc").get<int>();
        r.grid_rows = j.at("grid_rows").get<int>();
        r.grid_cols = j.at("grid_cols").get<int>();
        r.artifact_bytes = j.at("artifact_bytes").get<size_t>();
        r.seed_accuracies = j.at("seed_accuracies").get<std::vector<double>>();
        runs.push_back(std::move(r));
    }
    fs::create_directories(a.out);
    write_text((fs::path(a.out) / "results.csv").string(), results_csv(runs));
    write_text((fs::path(a.out) / "cross_matrix.csv").string(), cross_matrix_csv(runs));
    write_text((fs::path(a.out) / "accuracy_vs_bytes.svg").string(), accuracy_vs_bytes_svg(runs));

    // patch-size ablation table: one row per grid observed
    std::string ab = "grid,mode,ipc,mean_accuracy,std_accuracy\n";
    for (const auto& r : runs)
        ab += std::to_string(r.grid_rows) + "x" + std::to_string(r.grid_cols) + "," + r.mode + "," +
              std::to_string(r.ipc) + "," + std::to_string(r.mean()) + "," + std::to_string(r.stddev()) + "\n";
    write_text((fs::path(a.out) / "ablation.csv").string(), ab);
}

// ---- the `run` pipeline ----

json default_run_config() {
    return json{
        {"out", "runs/exp"},
        {"dataset", {{"synth", {{"classes", 4}, {"per_class", 64}, {"height", 16}, {"width", 16}, {"seed", 1}}}}},
        {"test_dataset",
         {{"synth", {{"classes", 4}, {"per_class", 64}, {"height", 16}, {"width", 16}, {"seed", 2}}}}},
        {"teacher", {{"train", {{"width", 12}, {"blocks", 2}, {"epochs", 20}, {"lr", 2e-3}, {"seed", 11}}}}},
        {"patches", {{"patch", 8}, {"candidates", 16}, {"seed", 99}, {"exhaustive", false}}},
        {"collages", {{"grid_rows", 2}, {"grid_cols", 2}, {"seed", 123}}},
        {"backend", {{"train", {{"epochs", 60}, {"lr", 3e-3}, {"seed", 42}}}}},
        {"invert",
         {{"steps", 1500}, {"lr", 3e-3}, {"batch", 4}, {"adam", true}, {"seed", 5}, {"engineered", false}}},
        {"label", {{"ipc", 10}, {"mode", "soft"}, {"tau", 1.0}, {"precision", "f16"}, {"seed", 777}}},
        {"train",
         {{"students", {"convnet-s", "convnet-m"}},
          {"ipc", 10},
          {"seeds", 3},
          {"epochs", 50},
          {"lr", 2e-3},
          {"augment", false}}},
    };
}

json merge_config(json base, const json& user) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
            base[it.key()] = merge_config(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
    return base;
}

void validate_run_config(const json& cfg) {
    for (const char* key : {"dataset", "test_dataset", "teacher", "patches", "collages", "backend", "invert",
                            "label", "train"})
        if (!cfg.contains(key)) throw ConfigInvalid(std::string("missing config section: ") + key);
    for (const char* key : {"dataset", "test_dataset"}) {
        const auto& d = cfg.at(key);
        if (!d.contains("synth") && !d.contains("path"))
            throw ConfigInvalid(std::string(key) + " needs either \"synth\" or \"path\"");
        if (d.contains("path") && !fs::exists(d.at("path").get<std::string>()))
            throw ConfigInvalid("missing dataset directory " + d.at("path").get<std::string>());
    }
    const auto& t = cfg.at("teacher");
    if (!t.contains("train") && !t.contains("path"))
        throw ConfigInvalid("teacher needs either \"train\" or \"path\"");
    if (t.contains("path") && !fs::exists(t.at("path").get<std::string>()))
        throw ConfigInvalid("missing teacher checkpoint " + t.at("path").get<std::string>());
    const auto& b = cfg.at("backend");
    if (!b.contains("train") && !b.contains("path"))
        throw ConfigInvalid("backend needs either \"train\" or \"path\"");
    if (b.contains("path") && !fs::exists(b.at("path").get<std::string>()))
        throw ConfigInvalid("missing backend checkpoint " + b.at("path").get<std::string>());
    parse_mode(cfg.at("label").at("mode").get<std::string>());
    parse_precision(cfg.at("label").at("precision").get<std::string>());
}

int cmd_run(const std::string& config_path, const std::string& out_override, bool dry_run) {
    json user = config_path.empty() ? json::object() : read_json(config_path);
    if (user.contains("config")) user = user.at("config");  // accept a manifest as config
    json cfg = merge_config(default_run_config(), user);
    if (!out_override.empty()) cfg["out"] = out_override;
    validate_run_config(cfg);

    std::string out = cfg.at("out").get<std::string>();
    uint64_t config_hash = fnv1a(cfg.dump().data(), cfg.dump().size());

    const std::vector<std::string> plan = {"dataset", "teacher",  "patches", "collages", "backend",
                                           "invert",  "label",    "pack",    "train",    "report"};
    if (dry_run) {
        std::printf("run plan (config hash %s, out %s):\n", hex64(config_hash).c_str(), out.c_str());
        for (const auto& s : plan) std::printf("  %s\n", s.c_str());
        std::printf("dry run: nothing executed\n");
        return 0;
    }
    fs::create_directories(out);

    json manifest;
    manifest["config"] = cfg;
    manifest["config_hash"] = hex64(config_hash);
    manifest["stages"] = json::array();
    auto timed = [&manifest](const std::string& name, auto&& fn) {
        auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const ConfigInvalid&) {
            throw;
        } catch (const Error& e) {
            throw StageFailed(name, e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest["stages"].push_back({{"name", name}, {"seconds", secs}});
        std::printf("[stage] %-8s %.2fs\n", name.c_str(), secs);
    };

    // resolved paths for every stage product
    std::string data_dir = out + "/data/train";
    std::string test_dir = out + "/data/test";
    std::string teacher_ckpt = out + "/teacher.ckpt";
    std::string patches_dir = out + "/patches";
    std::string collages_dir = out + "/collages";
    std::string backend_ckpt = out + "/backend.ckpt";
    std::string artifact_path = out + "/distilled.d3m";
    std::string runs_dir = out + "/train";
    std::string report_dir = out + "/report";

    timed("dataset", [&] {
        for (auto [key, dir] : {std::pair{"dataset", &data_dir}, {"test_dataset", &test_dir}}) {
            const auto& d = cfg.at(key);
            if (d.contains("path")) {
                *dir = d.at("path").get<std::string>();
            } else {
                const auto& s = d.at("synth");
                auto ds = shapes::make_dataset(s.at("classes").get<int>(), s.at("per_class").get<int>(),
                                               s.at("height").get<int>(), s.at("width").get<int>(),
                                               s.at("seed").get<uint64_t>());
                save_dataset(ds, *dir);
            }
        }
    });

    timed("teacher", [&] {
        const auto& t = cfg.at("teacher");
        if (t.contains("path")) {
            teacher_ckpt = t.at("path").get<std::string>();
            return;
        }
        auto ds = load_dataset(data_dir);
        const auto& tr = t.at("train");
        ConvNetConfig ncfg{ds.height, ds.width, static_cast<int>(ds.class_names.size()),
                           tr.at("width").get<int>(), tr.at("blocks").get<int>()};
        ConvNet net(ncfg);
        net.init(mix_seed(tr.at("seed").get<uint64_t>(), 0x7e));
        fit_classifier(net, ds.images, tr.at("epochs").get<int>(), tr.at("lr").get<double>(),
                       tr.at("seed").get<uint64_t>());
        net.save(teacher_ckpt);
    });

    timed("patches", [&] {
        const auto& p = cfg.at("patches");
        PatchesArgs a;
        a.data = data_dir;
        a.teacher = teacher_ckpt;
        a.out = patches_dir;
        a.patch = p.at("patch").get<int>();
        a.candidates = p.at("candidates").get<int>();
        a.seed = p.at("seed").get<uint64_t>();
        a.exhaustive = p.at("exhaustive").get<bool>();
        stage_patches(a);
    });

    timed("collages", [&] {
        const auto& c = cfg.at("collages");
        auto ds_manifest = read_json(data_dir + "/manifest.json");
        CollagesArgs a;
        a.patches = patches_dir;
        a.out = collages_dir;
        a.grid_rows = c.at("grid_rows").get<int>();
        a.grid_cols = c.at("grid_cols").get<int>();
        a.height = ds_manifest.at("height").get<int>();
        a.width = ds_manifest.at("width").get<int>();
        a.seed = c.at("seed").get<uint64_t>();
        stage_collages(a);
    });

    timed("backend", [&] {
        const auto& b = cfg.at("backend");
        if (b.contains("path")) {
            backend_ckpt = b.at("path").get<std::string>();
            return;
        }
        const auto& tr = b.at("train");
        BackendTrainArgs a;
        a.collages = collages_dir;
        a.out = backend_ckpt;
        a.epochs = tr.at("epochs").get<int>();
        a.lr = tr.at("lr").get<double>();
        a.seed = tr.at("seed").get<uint64_t>();
        stage_backend(a);
    });

    timed("invert", [&] {
        const auto& iv = cfg.at("invert");
        InvertArgs a;
        a.collages = collages_dir;
        a.backend = backend_ckpt;
        a.out = artifact_path;
        a.losses_dir = out + "/inversion";
        a.cfg.steps = iv.at("steps").get<int>();
        a.cfg.lr = iv.at("lr").get<double>();
        a.cfg.batch = iv.at("batch").get<int>();
        a.cfg.adam = iv.at("adam").get<bool>();
        a.cfg.seed = iv.at("seed").get<uint64_t>();
        a.engineered = iv.at("engineered").get<bool>();
        stage_invert(a);
    });

    timed("label", [&] {
        const auto& lb = cfg.at("label");
        LabelArgs a;
        a.artifact = artifact_path;
        a.teacher = teacher_ckpt;
        a.backend = backend_ckpt;
        a.cfg.ipc = lb.at("ipc").get<int>();
        a.cfg.mode = parse_mode(lb.at("mode").get<std::string>());
        a.cfg.precision = parse_precision(lb.at("precision").get<std::string>());
        a.cfg.temperature = lb.at("tau").get<float>();
        a.seed = lb.at("seed").get<uint64_t>();
        stage_label(a);
    });

    timed("pack", [&] { stage_pack({artifact_path, backend_ckpt, ""}); });

    timed("train", [&] {
        const auto& tr = cfg.at("train");
        TrainArgs a;
        a.artifact = artifact_path;
        a.backend = backend_ckpt;
        a.data = test_dir;
        a.out = runs_dir;
        a.students = tr.at("students").get<std::vector<std::string>>();
        a.ipc = tr.at("ipc").get<int>();
        a.seeds = tr.at("seeds").get<int>();
        a.student.epochs = tr.at("epochs").get<int>();
        a.student.lr = tr.at("lr").get<double>();
        a.student.augment = tr.at("augment").get<bool>();
        if (tr.contains("loss")) {
            a.student.loss = tr.at("loss").get<std::string>() == "soft" ? StudentLoss::soft_kd
                                                                        : StudentLoss::one_hot_ce;
            a.loss_explicit = true;
        }
        stage_train(a);
    });

    timed("report", [&] { stage_report({runs_dir, report_dir}); });

    manifest["artifact"] = {{"path", artifact_path}, {"crc32", file_crc32(artifact_path)}};
    manifest["outputs"] = {{"teacher", teacher_ckpt}, {"backend", backend_ckpt}, {"report", report_dir}};
    write_text(out + "/manifest.json", manifest.dump(2) + "\n");
    std::printf("manifest: %s/manifest.json (artifact crc32 %08x)\n", out.c_str(),
                manifest["artifact"]["crc32"].get<uint32_t>());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"d3m: dataset distillation via diffusion prompt inversion"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate the procedural shapes dataset");
    int sy_k = 4, sy_n = 64, sy_h = 16, sy_w = 16;
    uint64_t sy_seed = 1;
    std::string sy_out;
    synth->add_option("--classes", sy_k);
    synth->add_option("--per-class", sy_n);
    synth->add_option("--height", sy_h);
    synth->add_option("--width", sy_w);
    synth->add_option("--seed", sy_seed);
    synth->add_option("--out", sy_out)->required();

    // teacher
    auto* teach = app.add_subcommand("teacher", "train the frozen teacher classifier");
    std::string te_data, te_out;
    int te_width = 12, te_blocks = 2, te_epochs = 20;
    double te_lr = 2e-3;
    uint64_t te_seed = 11;
    teach->add_option("--data", te_data)->required();
    teach->add_option("--width", te_width);
    teach->add_option("--blocks", te_blocks);
    teach->add_option("--epochs", te_epochs);
    teach->add_option("--lr", te_lr);
    teach->add_option("--seed", te_seed);
    teach->add_option("--out", te_out)->required();

    // patches
    auto* patches = app.add_subcommand("patches", "select informative patches with the teacher");
    PatchesArgs pa;
    patches->add_option("--data", pa.data)->required();
    patches->add_option("--teacher", pa.teacher)->required();
    patches->add_option("--patch", pa.patch);
    patches->add_option("--candidates", pa.candidates);
    patches->add_option("--seed", pa.seed);
    patches->add_flag("--exhaustive", pa.exhaustive);
    patches->add_flag("--max-loss", pa.max_loss, "ablation: select the max-CE patch instead");
    patches->add_option("--out", pa.out)->required();

    // collages
    auto* coll = app.add_subcommand("collages", "assemble per-class patch collages");
    CollagesArgs ca;
    std::string ca_grid = "2x2";
    coll->add_option("--patches", ca.patches)->required();
    coll->add_option("--grid", ca_grid, "RxC, e.g. 2x2");
    coll->add_option("--height", ca.height);
    coll->add_option("--width", ca.width);
    coll->add_option("--seed", ca.seed);
    coll->add_option("--out", ca.out)->required();

    // backend
    auto* back = app.add_subcommand("backend", "pretrain the toy diffusion backend on collages");
    BackendTrainArgs ba;
    back->add_option("--collages", ba.collages)->required();
    back->add_option("--epochs", ba.epochs);
    back->add_option("--lr", ba.lr);
    back->add_option("--seed", ba.seed);
    back->add_option("--out", ba.out)->required();

    // invert
    auto* inv = app.add_subcommand("invert", "optimize per-class prompt embeddings");
    InvertArgs ia;
    inv->add_option("--collages", ia.collages)->required();
    inv->add_option("--backend", ia.backend)->required();
    inv->add_option("--class", ia.class_id, "single class id; default all");
    inv->add_option("--steps", ia.cfg.steps);
    inv->add_option("--lr", ia.cfg.lr);
    inv->add_option("--batch", ia.cfg.batch);
    inv->add_option("--seed", ia.cfg.seed);
    inv->add_flag("--engineered", ia.engineered, "skip optimization, use the engineered prompt baseline");
    inv->add_option("--losses", ia.losses_dir, "directory for per-class loss-curve CSVs");
    inv->add_option("--out", ia.out)->required();

    // label
    auto* lab = app.add_subcommand("label", "attach seed-pinned records and teacher labels");
    LabelArgs la;
    std::string la_mode = "soft", la_precision = "f16";
    lab->add_option("--artifact", la.artifact)->required();
    lab->add_option("--teacher", la.teacher)->required();
    lab->add_option("--backend", la.backend)->required();
    lab->add_option("--ipc", la.cfg.ipc);
    lab->add_option("--mode", la_mode, "soft | one_hot");
    lab->add_option("--tau", la.cfg.temperature);
    lab->add_option("--precision", la_precision, "f16 | f32");
    lab->add_option("--seed", la.seed);
    lab->add_option("--out", la.out, "defaults to rewriting --artifact");

    // pack
    auto* pack = app.add_subcommand("pack", "finalize the artifact: replay, hash, validate");
    PackArgs ka;
    pack->add_option("--artifact", ka.artifact)->required();
    pack->add_option("--backend", ka.backend)->required();
    pack->add_option("--out", ka.out, "defaults to rewriting --artifact");

    // inspect
    auto* insp = app.add_subcommand("inspect", "print artifact header and size breakdown as JSON");
    std::string in_path;
    insp->add_option("artifact", in_path)->required();

    // train
    auto* train = app.add_subcommand("train", "train students from a distilled artifact");
    TrainArgs ta;
    std::string ta_loss;
    train->add_option("--artifact", ta.artifact)->required();
    train->add_option("--backend", ta.backend)->required();
    train->add_option("--data", ta.data, "test dataset directory")->required();
    train->add_option("--student", ta.students, "student architectures");
    train->add_option("--ipc", ta.ipc);
    train->add_option("--seeds", ta.seeds);
    train->add_option("--epochs", ta.student.epochs);
    train->add_option("--lr", ta.student.lr);
    train->add_option("--loss", ta_loss, "soft | one_hot; default follows the artifact mode");
    train->add_flag("--augment", ta.student.augment);
    train->add_option("--out", ta.out)->required();

    // report
    auto* rep = app.add_subcommand("report", "aggregate run JSONs into CSVs and plots");
    ReportArgs ra;
    rep->add_option("--runs", ra.runs)->required();
    rep->add_option("--out", ra.out)->required();

    // run
    auto* run = app.add_subcommand("run", "execute the full pipeline from a declarative config");
    std::string run_config, run_out;
    bool run_dry = false;
    run->add_option("--config", run_config, "JSON config (or a previous manifest)");
    run->add_option("--out", run_out, "override the output directory");
    run->add_flag("--dry-run", run_dry, "print the plan and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            auto ds = shapes::make_dataset(sy_k, sy_n, sy_h, sy_w, sy_seed);
            save_dataset(ds, sy_out);
        } else if (*teach) {
            auto ds = load_dataset(te_data);
            ConvNet net(ConvNetConfig{ds.height, ds.width, static_cast<int>(ds.class_names.size()), te_width,
                                      te_blocks});
            net.init(mix_seed(te_seed, 0x7e));
            fit_classifier(net, ds.images, te_epochs, te_lr, te_seed);
            fs::path p(te_out);
            if (p.has_parent_path()) fs::create_directories(p.parent_path());
            net.save(te_out);
        } else if (*patches) {
            stage_patches(pa);
        } else if (*coll) {
            if (std::sscanf(ca_grid.c_str(), "%dx%d", &ca.grid_rows, &ca.grid_cols) != 2)
                throw ConfigInvalid("--grid must look like 2x2");
            stage_collages(ca);
        } else if (*back) {
            stage_backend(ba);
        } else if (*inv) {
            stage_invert(ia);
        } else if (*lab) {
            la.cfg.mode = parse_mode(la_mode);
            la.cfg.precision = parse_precision(la_precision);
            stage_label(la);
        } else if (*pack) {
            stage_pack(ka);
        } else if (*insp) {
            auto art = load_artifact(in_path);
            std::cout << inspect_json(art).dump(2) << "\n";
        } else if (*train) {
            if (!ta_loss.empty()) {
                ta.student.loss = ta_loss == "soft" ? StudentLoss::soft_kd : StudentLoss::one_hot_ce;
                ta.loss_explicit = true;
            }
            stage_train(ta);
        } else if (*rep) {
            stage_report(ra);
        } else if (*run) {
            return cmd_run(run_config, run_out, run_dry);
        }
    } catch (const ConfigInvalid& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
