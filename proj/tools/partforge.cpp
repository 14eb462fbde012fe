// Command-line front end: synth, fit-boxes, train, detect, eval, report.
// Exit codes: 0 success, 1 usage (bad flags or rejected config), 2 data or
// model errors. Every output file goes through write_file_atomic; synth
// stages its whole directory and renames it into place.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "partforge/bundle.hpp"
#include "partforge/detection.hpp"
#include "partforge/evaluation.hpp"
#include "partforge/manifest.hpp"
#include "partforge/mining.hpp"
#include "partforge/pipeline.hpp"
#include "partforge/segmentation.hpp"
#include "partforge/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using namespace partforge;

namespace {

// Problems with the invocation itself (flag combinations, config contents).
// Everything the library throws stays a data/model error.
struct usage_failure : std::runtime_error {
    explicit usage_failure(const std::string& msg) : std::runtime_error(msg) {}
};

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------- config

double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw usage_failure("config: " + where + " must be a number");
    return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw usage_failure("config: " + where + " must be an integer");
    return v.get<int>();
}

bool as_bool(const json& v, const std::string& where) {
    if (!v.is_boolean()) throw usage_failure("config: " + where + " must be a boolean");
    return v.get<bool>();
}

std::uint64_t as_u64(const json& v, const std::string& where) {
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw usage_failure("config: " + where + " must be a non-negative integer");
    const std::int64_t raw = v.get<std::int64_t>();
    if (raw < 0) throw usage_failure("config: " + where + " must be a non-negative integer");
    return static_cast<std::uint64_t>(raw);
}

const json& as_object(const json& v, const std::string& where) {
    if (!v.is_object()) throw usage_failure("config: " + where + " must be an object");
    return v;
}

void apply_train(TrainConfig* t, const json& j) {
    for (const auto& [key, v] : j.items()) {
        const std::string w = "train." + key;
        if (key == "learning_rate") t->learning_rate = as_number(v, w);
        else if (key == "max_iterations") t->max_iterations = as_int(v, w);
        else if (key == "batch_size") t->batch_size = as_int(v, w);
        else if (key == "l2_penalty") t->l2_penalty = as_number(v, w);
        else if (key == "early_stop_patience") t->early_stop_patience = as_int(v, w);
        else throw usage_failure("config: unknown field \"" + w + "\"");
    }
}

void apply_harvest(HarvestConfig* h, const json& j) {
    for (const auto& [key, v] : j.items()) {
        const std::string w = "harvest." + key;
        if (key == "max_per_image") h->max_per_image = as_int(v, w);
        else if (key == "min_confidence") h->min_confidence = as_number(v, w);
        else if (key == "nms_iou") h->nms_iou = as_number(v, w);
        else throw usage_failure("config: unknown field \"" + w + "\"");
    }
}

void apply_mining(MiningConfig* m, const json& j) {
    for (const auto& [key, v] : j.items()) {
        const std::string w = "mining." + key;
        if (key == "max_per_image") m->max_per_image = as_int(v, w);
        else if (key == "nms_iou") m->nms_iou = as_number(v, w);
        else if (key == "min_combined_score") m->min_combined_score = as_number(v, w);
        else if (key == "negative_iou_max") m->negative_iou_max = as_number(v, w);
        else if (key == "appearance_weight") m->appearance_weight = as_number(v, w);
        else if (key == "location_weight") m->location_weight = as_number(v, w);
        else if (key == "max_negatives_per_image_per_part")
            m->max_negatives_per_image_per_part = as_int(v, w);
        else throw usage_failure("config: unknown field \"" + w + "\"");
    }
}

void apply_proposals(ProposalConfig* p, const json& j, const std::string& prefix) {
    for (const auto& [key, v] : j.items()) {
        const std::string w = prefix + key;
        if (key == "base_segmentation_scale") p->base_segmentation_scale = as_number(v, w);
        else if (key == "min_region_size") p->min_region_size = as_int(v, w);
        else if (key == "max_proposals") p->max_proposals = as_int(v, w);
        else if (key == "min_proposal_side") p->min_proposal_side = as_number(v, w);
        else if (key == "merge_similarity_weights") {
            if (!v.is_array() || v.size() != 4)
                throw usage_failure("config: " + w + " must be an array of 4 numbers");
            for (int i = 0; i < 4; ++i)
                p->merge_similarity_weights[static_cast<std::size_t>(i)] =
                    as_number(v[static_cast<std::size_t>(i)], w);
        } else {
            throw usage_failure("config: unknown field \"" + w + "\"");
        }
    }
}

void apply_energy(SegEnergyConfig* e, const json& j) {
    for (const auto& [key, v] : j.items()) {
        const std::string w = "fit.energy." + key;
        if (key == "alpha") e->alpha = as_number(v, w);
        else if (key == "beta_contrast") e->beta_contrast = as_number(v, w);
        else if (key == "epsilon_log") e->epsilon_log = as_number(v, w);
        else if (key == "gmm_components") e->gmm_components = as_int(v, w);
        else if (key == "max_iterations") e->max_iterations = as_int(v, w);
        else if (key == "min_component_area_fraction")
            e->min_component_area_fraction = as_number(v, w);
        else throw usage_failure("config: unknown field \"" + w + "\"");
    }
}

void apply_fit(FitConfig* f, const json& j) {
    for (const auto& [key, v] : j.items()) {
        if (key == "proposals") apply_proposals(&f->proposals, as_object(v, "fit.proposals"),
                                                "fit.proposals.");
        else if (key == "energy") apply_energy(&f->energy, as_object(v, "fit.energy"));
        else throw usage_failure("config: unknown field \"fit." + key + "\"");
    }
}

void apply_stage_config(StageConfig* cfg, const json& j) {
    for (const auto& [key, v] : j.items()) {
        if (key == "seed") cfg->seed = as_u64(v, key);
        else if (key == "objects_per_viewpoint") cfg->objects_per_viewpoint = as_int(v, key);
        else if (key == "images_per_part") cfg->images_per_part = as_int(v, key);
        else if (key == "location_bandwidth") cfg->location_bandwidth = as_number(v, key);
        else if (key == "skip_box_fitting") cfg->skip_box_fitting = as_bool(v, key);
        else if (key == "warm_start_t3") cfg->warm_start_t3 = as_bool(v, key);
        else if (key == "train") apply_train(&cfg->train, as_object(v, key));
        else if (key == "harvest") apply_harvest(&cfg->harvest, as_object(v, key));
        else if (key == "mining") apply_mining(&cfg->mining, as_object(v, key));
        else if (key == "fit") apply_fit(&cfg->fit, as_object(v, key));
        else throw usage_failure("config: unknown field \"" + key + "\"");
    }
}

json parse_json_file(const std::string& path, const char* what) {
    const std::string text = read_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw usage_failure(std::string(what) + ": not valid JSON: " + path);
    if (!j.is_object()) throw usage_failure(std::string(what) + ": top level must be an object");
    return j;
}

StageConfig resolved_stage_config(const std::string& config_path, const CLI::Option* seed_opt,
                                  std::uint64_t seed_flag) {
    StageConfig cfg;
    if (!config_path.empty()) apply_stage_config(&cfg, parse_json_file(config_path, "config"));
    if (seed_opt != nullptr && seed_opt->count() > 0) cfg.seed = seed_flag;
    try {
        cfg.validate();
    } catch (const error& e) {
        throw usage_failure(std::string("config rejected: ") + e.what());
    }
    return cfg;
}

// ---------------------------------------------------------------- shared io

std::vector<std::string> list_ppm_ids(const fs::path& root, const std::string& match) {
    require(fs::is_directory(root), errc::missing_file,
            "not a directory: " + root.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
        std::string id = entry.path().lexically_relative(root).generic_string();
        if (!match.empty() && id.find(match) == std::string::npos) continue;
        ids.push_back(std::move(id));
    }
    std::sort(ids.begin(), ids.end());
    require(!ids.empty(), errc::empty_dataset, "no .ppm images under " + root.string() +
                                                   (match.empty() ? "" : " matching " + match));
    return ids;
}

void report_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
    std::string spec_path;
    std::string out_dir;
};

void run_synth(const SynthOpts& o) {
    const json j = parse_json_file(o.spec_path, "spec");
    SceneSpec scene;
    bool have_archetype = false;
    BenchmarkCounts counts;
    std::uint64_t seed = 0;
    for (const auto& [key, v] : j.items()) {
        if (key == "archetype") {
            const int id = as_int(v, key);
            if (id < 0 || id > 8)
                throw usage_failure("spec: archetype must be in [0, 8]");
            scene = scene_archetype(id);
            have_archetype = true;
        } else if (key == "seed") {
            seed = as_u64(v, key);
        } else if (key == "counts") {
            for (const auto& [ck, cv] : as_object(v, key).items()) {
                const std::string w = "counts." + ck;
                if (ck == "objects_per_viewpoint") counts.objects_per_viewpoint = as_int(cv, w);
                else if (ck == "images_per_part") counts.images_per_part = as_int(cv, w);
                else if (ck == "hard_images") counts.hard_images = as_int(cv, w);
                else if (ck == "eval_easy") counts.eval_easy = as_int(cv, w);
                else if (ck == "eval_hard") counts.eval_hard = as_int(cv, w);
                else throw usage_failure("spec: unknown field \"" + w + "\"");
            }
        } else if (key != "scene") {
            throw usage_failure("spec: unknown field \"" + key + "\"");
        }
    }
    if (!have_archetype) throw usage_failure("spec: missing required field \"archetype\"");
    if (j.contains("scene")) {
        for (const auto& [sk, sv] : as_object(j.at("scene"), "scene").items()) {
            const std::string w = "scene." + sk;
            if (sk == "width") scene.width = as_int(sv, w);
            else if (sk == "height") scene.height = as_int(sv, w);
            else if (sk == "noise") scene.noise = as_number(sv, w);
            else if (sk == "clutter_shapes") scene.clutter_shapes = as_int(sv, w);
            else if (sk == "scale_jitter") scene.scale_jitter = as_number(sv, w);
            else if (sk == "truncation") scene.truncation = as_number(sv, w);
            else if (sk == "occlusion") scene.occlusion = as_number(sv, w);
            else if (sk == "background") {
                const std::string mode = sv.is_string() ? sv.get<std::string>() : "";
                if (mode == "uniform") scene.background = BackgroundMode::uniform;
                else if (mode == "clutter") scene.background = BackgroundMode::clutter;
                else throw usage_failure("spec: scene.background must be \"uniform\" or \"clutter\"");
            } else {
                throw usage_failure("spec: unknown field \"" + w + "\"");
            }
        }
    }
    try {
        scene.validate();
        counts.validate();
    } catch (const error& e) {
        throw usage_failure(std::string("spec rejected: ") + e.what());
    }

    const fs::path out(o.out_dir);
    if (fs::exists(out)) {
        if (!fs::is_directory(out) || !fs::is_empty(out))
            throw usage_failure("output exists and is not an empty directory: " + out.string());
        fs::remove(out);
    }
    const fs::path staging = out.string() + ".staging";
    fs::remove_all(staging);
    const GeneratedBenchmark bench = generate_benchmark(staging, scene, counts, seed);
    fs::rename(staging, out);

    std::size_t images = 0;
    for (const auto& entry : fs::recursive_directory_iterator(out))
        if (entry.is_regular_file() && entry.path().extension() == ".ppm") ++images;
    std::cout << "wrote " << images << " images, manifest " << (out / "manifest.json").string()
              << ", ground truth " << bench.easy_truth_path.filename().string() << " and "
              << bench.hard_truth_path.filename().string() << " under " << out.string() << "\n";
}

// ---------------------------------------------------------------- fit-boxes

struct FitBoxesOpts {
    std::string in_dir;
    std::string out_csv;
    std::string mask_dir;
    std::string config_path;
    int workers = 0;
};

std::string mask_name(std::string id) {
    for (char& c : id)
        if (c == '/' || c == '\\') c = '_';
    const std::size_t dot = id.rfind('.');
    if (dot != std::string::npos) id.resize(dot);
    return id + ".pgm";
}

void run_fit_boxes(const FitBoxesOpts& o) {
    const StageConfig cfg = resolved_stage_config(o.config_path, nullptr, 0);
    const std::vector<std::string> ids = list_ppm_ids(o.in_dir, "");
    std::vector<std::vector<BBox>> boxes(ids.size());
    std::vector<Segmentation> masks(o.mask_dir.empty() ? 0 : ids.size());
    parallel_for(ids.size(), o.workers, [&](std::size_t i) {
        const Raster r = load_image(fs::path(o.in_dir) / ids[i]);
        boxes[i] = fit_instance_boxes(r, cfg.fit, masks.empty() ? nullptr : &masks[i]);
    });

    std::string csv = "image_id,x_min,y_min,x_max,y_max\n";
    std::size_t total = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (const BBox& b : boxes[i]) {
            csv += ids[i] + "," + fmt_num(b.x_min) + "," + fmt_num(b.y_min) + "," +
                   fmt_num(b.x_max) + "," + fmt_num(b.y_max) + "\n";
            ++total;
        }
    }
    write_file_atomic(o.out_csv, csv);

    if (!o.mask_dir.empty()) {
        fs::create_directories(o.mask_dir);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const Segmentation& s = masks[i];
            std::string pgm = "P5\n" + std::to_string(s.width) + " " +
                              std::to_string(s.height) + "\n255\n";
            pgm.reserve(pgm.size() + s.labels.size());
            for (const int label : s.labels) pgm += static_cast<char>(label == 1 ? 255 : 0);
            write_file_atomic(fs::path(o.mask_dir) / mask_name(ids[i]), pgm);
        }
    }
    std::cout << "fitted " << total << " boxes in " << ids.size() << " images -> " << o.out_csv
              << "\n";
}

// ---------------------------------------------------------------- train

struct TrainOpts {
    std::string stage;
    std::string manifest_path;
    std::string bundle_in;
    std::string bundle_out;
    std::string config_path;
    std::string mined_out;
    std::uint64_t seed = 0;
    int workers = 0;
};

void run_train(const TrainOpts& o, const CLI::Option* seed_opt) {
    StageConfig cfg = resolved_stage_config(o.config_path, seed_opt, o.seed);
    const bool wants_input = o.stage == "t2" || o.stage == "t3";
    if (wants_input && o.bundle_in.empty())
        throw usage_failure("train: --stage " + o.stage + " requires --bundle-in");
    if (!wants_input && !o.bundle_in.empty())
        throw usage_failure("train: --stage " + o.stage + " does not take --bundle-in");
    if (!o.mined_out.empty() && !wants_input)
        throw usage_failure("train: --mined-out only applies to stages t2 and t3");

    const DatasetManifest manifest = load_manifest(o.manifest_path);
    ModelBundle bundle;
    MinedSet mined;
    if (o.stage == "t0" || o.stage == "t1") {
        if (o.stage == "t0") cfg.skip_box_fitting = true;
        const CuratedDataset curated = stage_t0(manifest, cfg, o.workers);
        bundle = stage_t1(curated, cfg);
    } else if (o.stage == "t2") {
        const ModelBundle input = load_bundle(o.bundle_in);
        const CuratedDataset curated = stage_t0(manifest, cfg, o.workers);
        StageOutput out = stage_t2(input, curated, cfg, o.workers);
        report_warnings(out.warnings);
        bundle = std::move(out.bundle);
        mined = std::move(out.mined);
    } else {
        const ModelBundle input = load_bundle(o.bundle_in);
        StageOutput out = stage_t3(input, manifest.hard_domain, cfg, o.workers);
        report_warnings(out.warnings);
        bundle = std::move(out.bundle);
        mined = std::move(out.mined);
    }

    save_bundle(bundle, o.bundle_out);
    if (!o.mined_out.empty()) write_file_atomic(o.mined_out, mined_set_to_csv(mined));
    std::cout << "wrote stage " << stage_name(bundle.stage) << " bundle (" << bundle.class_name
              << ", " << bundle.part_names.size() << " parts, "
              << bundle.training_cache.size() << " cached samples) -> " << o.bundle_out << "\n";
}

// ---------------------------------------------------------------- detect

struct DetectOpts {
    std::string bundle_path;
    std::string images_dir;
    std::string out_csv;
    std::string gt_path;
    std::string match;
    std::string viewpoints_out;
    double appearance_weight = 0.0;
    double location_weight = 0.0;
    int workers = 0;
};

void run_detect(const DetectOpts& o, const CLI::Option* aw_opt, const CLI::Option* lw_opt) {
    const ModelBundle bundle = load_bundle(o.bundle_path);
    DetectPartsConfig dcfg;
    if (bundle.stage == Stage::t1) {
        dcfg.appearance_weight = 1.0;
        dcfg.location_weight = 0.0;
    }
    if (aw_opt->count() > 0) dcfg.appearance_weight = o.appearance_weight;
    if (lw_opt->count() > 0) dcfg.location_weight = o.location_weight;

    const bool use_gt = !o.gt_path.empty();
    GroundTruthSet gt;
    if (use_gt) gt = load_ground_truth(o.gt_path);
    if (!o.viewpoints_out.empty())
        require(bundle.has_viewpoint, errc::invalid_state,
                "detect: bundle has no viewpoint model for --viewpoints-out");

    const std::vector<std::string> ids = list_ppm_ids(o.images_dir, o.match);
    std::vector<std::vector<Detection>> dets(ids.size());
    std::vector<int> facing(ids.size(), -1);
    std::vector<char> skipped(ids.size(), 0);
    parallel_for(ids.size(), o.workers, [&](std::size_t i) {
        std::vector<BBox> windows;
        if (use_gt) {
            const auto it = gt.images.find(ids[i]);
            if (it == gt.images.end() || it->second.objects.empty()) {
                skipped[i] = 1;
                return;
            }
            for (const auto& obj : it->second.objects) windows.push_back(obj.box);
        }
        const Raster r = load_image(fs::path(o.images_dir) / ids[i]);
        if (windows.empty()) windows.push_back(r.full_box());
        for (const BBox& w : windows) {
            const auto found = detect_parts(bundle, r, w, dcfg);
            dets[i].insert(dets[i].end(), found.begin(), found.end());
        }
        if (!o.viewpoints_out.empty())
            facing[i] = static_cast<int>(
                predict_viewpoint(bundle.viewpoint, r, windows.front()).first);
    });

    std::vector<EvalDetection> rows;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (skipped[i]) std::cerr << "warning: no ground-truth objects for " << ids[i] << "\n";
        for (const Detection& d : dets[i]) rows.push_back({ids[i], d.part_id, d.box, d.score});
    }
    write_file_atomic(o.out_csv, detections_to_csv(rows));
    if (!o.viewpoints_out.empty()) {
        std::string csv = "image_id,viewpoint\n";
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (!skipped[i]) csv += ids[i] + "," + std::to_string(facing[i]) + "\n";
        write_file_atomic(o.viewpoints_out, csv);
    }
    std::cout << rows.size() << " detections in " << ids.size() << " images -> " << o.out_csv
              << "\n";
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
    std::string detections_path;
    std::string gt_path;
    std::string viewpoints_path;
    std::string report_path;
    double iou = 0.4;
};

ordered_json pr_to_json(const PRCurve& c) {
    ordered_json pr;
    pr["recall"] = c.recall;
    pr["precision"] = c.precision;
    return pr;
}

void run_eval(const EvalOpts& o) {
    const std::vector<EvalDetection> dets = detections_from_csv(read_file(o.detections_path));
    const GroundTruthSet gt = load_ground_truth(o.gt_path);
    const int part_count = static_cast<int>(gt.part_names.size());
    require(part_count >= 1, errc::empty_dataset, "eval: ground truth names no parts");
    const EvalReport report = evaluate_part_detections(dets, gt, part_count, o.iou);

    ordered_json out;
    out["version"] = 1;
    out["iou_threshold"] = o.iou;
    out["mean_ap"] = report.mean_ap;
    out["parts_with_truth"] = report.parts_with_truth;
    out["per_part"] = ordered_json::array();
    for (int p = 0; p < part_count; ++p) {
        const PRCurve& c = report.per_part[static_cast<std::size_t>(p)];
        ordered_json row;
        row["part_id"] = p;
        row["name"] = gt.part_names[static_cast<std::size_t>(p)];
        row["ap"] = c.ap;
        row["ground_truth"] = c.ground_truth_count;
        row["true_positives"] = c.true_positives;
        row["pr"] = pr_to_json(c);
        out["per_part"].push_back(std::move(row));
    }

    if (!o.viewpoints_path.empty()) {
        std::vector<int> truth;
        std::vector<int> predicted;
        const std::string text = read_file(o.viewpoints_path);
        std::size_t start = 0;
        bool first = true;
        while (start < text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string::npos) end = text.size();
            const std::string line = text.substr(start, end - start);
            start = end + 1;
            if (line.empty()) continue;
            if (first) {
                first = false;
                require(line == "image_id,viewpoint", errc::malformed_header,
                        "viewpoints csv: bad header");
                continue;
            }
            const std::size_t comma = line.rfind(',');
            require(comma != std::string::npos, errc::corrupt_file,
                    "viewpoints csv: missing comma");
            const std::string id = line.substr(0, comma);
            const int pred = std::stoi(line.substr(comma + 1));
            const auto it = gt.images.find(id);
            require(it != gt.images.end(), errc::corrupt_file,
                    "viewpoints csv: unknown image " + id);
            int label = -1;
            for (const auto& obj : it->second.objects)
                if (obj.viewpoint >= 0) {
                    label = obj.viewpoint;
                    break;
                }
            if (label < 0) continue;  // unlabeled truth carries no signal
            truth.push_back(label);
            predicted.push_back(pred);
        }
        require(!truth.empty(), errc::empty_dataset,
                "eval: no labeled viewpoints overlap the predictions");
        const ViewpointReport vr = viewpoint_metrics(truth, predicted);
        ordered_json vj;
        vj["names"] = ordered_json::array();
        for (int v = 0; v < kViewpointCount; ++v)
            vj["names"].push_back(viewpoint_name(static_cast<Viewpoint>(v)));
        vj["support"] = vr.support;
        vj["confusion"] = vr.confusion;
        vj["per_class_accuracy"] = vr.per_class_accuracy;
        vj["overall_accuracy"] = vr.overall_accuracy;
        vj["mean_accuracy"] = vr.mean_accuracy;
        vj["total"] = vr.total;
        out["viewpoints"] = std::move(vj);
    }

    write_file_atomic(o.report_path, out.dump(2) + "\n");
    std::printf("mAP %.4f over %d parts -> %s\n", report.mean_ap, report.parts_with_truth,
                o.report_path.c_str());
}

// ---------------------------------------------------------------- report

struct ReportOpts {
    std::vector<std::string> inputs;
    std::string labels;
    std::string out_csv;
};

void run_report(const ReportOpts& o) {
    std::vector<std::string> labels;
    if (!o.labels.empty()) {
        std::size_t start = 0;
        while (start <= o.labels.size()) {
            const std::size_t comma = o.labels.find(',', start);
            const std::size_t end = comma == std::string::npos ? o.labels.size() : comma;
            labels.push_back(o.labels.substr(start, end - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (labels.size() != o.inputs.size())
            throw usage_failure("report: --labels count must match the number of inputs");
    } else {
        for (const auto& path : o.inputs) labels.push_back(fs::path(path).stem().string());
    }

    std::vector<std::string> parts;  // union of part names, first-seen order
    std::vector<std::map<std::string, double>> ap_by_part(o.inputs.size());
    std::vector<double> map_of(o.inputs.size(), 0.0);
    for (std::size_t i = 0; i < o.inputs.size(); ++i) {
        const std::string text = read_file(o.inputs[i]);
        json j = json::parse(text, nullptr, false);
        require(!j.is_discarded() && j.is_object() && j.contains("mean_ap") &&
                    j.contains("per_part") && j["per_part"].is_array(),
                errc::corrupt_file, "report: not an eval report: " + o.inputs[i]);
        map_of[i] = j["mean_ap"].get<double>();
        for (const auto& row : j["per_part"]) {
            require(row.contains("name") && row.contains("ap"), errc::corrupt_file,
                    "report: malformed per_part entry in " + o.inputs[i]);
            const std::string name = row["name"].get<std::string>();
            ap_by_part[i][name] = row["ap"].get<double>();
            if (std::find(parts.begin(), parts.end(), name) == parts.end())
                parts.push_back(name);
        }
    }

    auto cell = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };

    std::string csv = "stage";
    for (const auto& p : parts) csv += "," + p;
    csv += ",mAP\n";
    for (std::size_t i = 0; i < o.inputs.size(); ++i) {
        csv += labels[i];
        for (const auto& p : parts) {
            const auto it = ap_by_part[i].find(p);
            csv += it == ap_by_part[i].end() ? "," : "," + cell(it->second);
        }
        csv += "," + cell(map_of[i]) + "\n";
    }
    if (!o.out_csv.empty()) write_file_atomic(o.out_csv, csv);

    std::size_t label_w = 5;
    for (const auto& l : labels) label_w = std::max(label_w, l.size());
    auto pad_left = [](const std::string& s, std::size_t w) {
        return std::string(w > s.size() ? w - s.size() : 0, ' ') + s;
    };
    std::string table = std::string("stage") + std::string(label_w - 5, ' ');
    for (const auto& p : parts) table += "  " + pad_left(p, 8);
    table += "  " + pad_left("mAP", 8) + "\n";
    for (std::size_t i = 0; i < o.inputs.size(); ++i) {
        table += labels[i] + std::string(label_w - labels[i].size(), ' ');
        for (const auto& p : parts) {
            const auto it = ap_by_part[i].find(p);
            table += "  " + pad_left(it == ap_by_part[i].end() ? "-" : cell(it->second), 8);
        }
        table += "  " + pad_left(cell(map_of[i]), 8) + "\n";
    }
    std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"part-based object models: synthesize data, train in stages, detect, evaluate"};
    app.require_subcommand(1);

    SynthOpts synth;
    CLI::App* synth_cmd =
        app.add_subcommand("synth", "render a synthetic benchmark from a JSON spec");
    synth_cmd->add_option("--spec", synth.spec_path, "spec JSON (archetype, seed, counts, scene)")
        ->required();
    synth_cmd->add_option("--out", synth.out_dir, "output directory (created)")->required();

    FitBoxesOpts fit;
    CLI::App* fit_cmd =
        app.add_subcommand("fit-boxes", "fit instance boxes to every image in a directory");
    fit_cmd->add_option("--in", fit.in_dir, "image directory (.ppm, recursive)")->required();
    fit_cmd->add_option("--out", fit.out_csv, "output CSV")->required();
    fit_cmd->add_option("--masks", fit.mask_dir, "also dump segmentation masks (PGM) here");
    fit_cmd->add_option("--config", fit.config_path, "config JSON (fit section applies)");
    fit_cmd->add_option("--workers", fit.workers, "worker threads (0 = all cores)");

    TrainOpts train;
    CLI::App* train_cmd = app.add_subcommand("train", "run one training stage");
    train_cmd->add_option("--stage", train.stage, "t0 (uncropped baseline), t1, t2, or t3")
        ->required()
        ->check(CLI::IsMember({"t0", "t1", "t2", "t3"}));
    train_cmd->add_option("--manifest", train.manifest_path, "dataset manifest JSON")->required();
    train_cmd->add_option("--bundle-in", train.bundle_in, "input bundle (t2: a t1 bundle; t3: a t2 bundle)");
    train_cmd->add_option("--bundle-out", train.bundle_out, "output bundle path")->required();
    train_cmd->add_option("--config", train.config_path, "config JSON");
    const CLI::Option* train_seed =
        train_cmd->add_option("--seed", train.seed, "seed (overrides the config file)");
    train_cmd->add_option("--mined-out", train.mined_out, "dump mined boxes CSV (t2/t3)");
    train_cmd->add_option("--workers", train.workers, "worker threads (0 = all cores)");

    DetectOpts detect;
    CLI::App* detect_cmd = app.add_subcommand("detect", "detect parts in a directory of images");
    detect_cmd->add_option("--bundle", detect.bundle_path, "model bundle")->required();
    detect_cmd->add_option("--images", detect.images_dir, "image directory (.ppm, recursive)")
        ->required();
    detect_cmd->add_option("--out", detect.out_csv, "detections CSV")->required();
    detect_cmd->add_option("--gt", detect.gt_path,
                           "ground-truth JSON; detect inside its object boxes (default: image-wide)");
    detect_cmd->add_option("--match", detect.match, "only images whose id contains this substring");
    const CLI::Option* detect_aw = detect_cmd->add_option(
        "--appearance-weight", detect.appearance_weight, "appearance weight (default 0.5; t1: 1)");
    const CLI::Option* detect_lw = detect_cmd->add_option(
        "--location-weight", detect.location_weight, "location weight (default 0.5; t1: 0)");
    detect_cmd->add_option("--viewpoints-out", detect.viewpoints_out,
                           "also write predicted viewpoints CSV");
    detect_cmd->add_option("--workers", detect.workers, "worker threads (0 = all cores)");

    EvalOpts eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score detections against ground truth");
    eval_cmd->add_option("--detections", eval.detections_path, "detections CSV")->required();
    eval_cmd->add_option("--gt", eval.gt_path, "ground-truth JSON")->required();
    eval_cmd->add_option("--iou", eval.iou, "match threshold")->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_option("--report", eval.report_path, "report JSON out")->required();
    eval_cmd->add_option("--viewpoints", eval.viewpoints_path,
                         "predicted viewpoints CSV; adds the viewpoint table");

    ReportOpts report;
    CLI::App* report_cmd =
        app.add_subcommand("report", "stage-comparison table from eval reports");
    report_cmd->add_option("--in", report.inputs, "eval report JSON (repeatable, in stage order)")
        ->required();
    report_cmd->add_option("--labels", report.labels, "comma-separated row labels");
    report_cmd->add_option("--out", report.out_csv, "also write the table as CSV");

    synth_cmd->callback([&] { run_synth(synth); });
    fit_cmd->callback([&] { run_fit_boxes(fit); });
    train_cmd->callback([&] { run_train(train, train_seed); });
    detect_cmd->callback([&] { run_detect(detect, detect_aw, detect_lw); });
    eval_cmd->callback([&] { run_eval(eval); });
    report_cmd->callback([&] { run_report(report); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const usage_failure& e) {
        std::cerr << "partforge: " << e.what() << "\n";
        return 1;
    } catch (const error& e) {
        std::cerr << "partforge: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "partforge: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
