#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "partforge/common.hpp"
#include "partforge/geometry.hpp"
#include "partforge/viewpoint.hpp"

namespace partforge {

struct EvalDetection {
    std::string image_id;
    int part_id = 0;
    BBox box;
    double score = 0.0;
};

struct GtObject {
    BBox box;
    int viewpoint = -1;  // -1 when unlabeled, else a Viewpoint index
};

struct GtPart {
    int part_id = 0;
    BBox box;
};

struct GtImage {
    std::vector<GtObject> objects;
    std::vector<GtPart> parts;
};

struct GroundTruthSet {
    std::vector<std::string> part_names;
    std::map<std::string, GtImage> images;
};

// Ranked precision/recall trace. `recall` and `precision` are the raw
// cumulative values after each ranked detection, so recall never decreases;
// `ap` integrates the right-monotonized precision over recall (all-point
// interpolation).
struct PRCurve {
    std::vector<double> recall;
    std::vector<double> precision;
    double ap = 0.0;
    bool empty_ground_truth = false;
    int true_positives = 0;
    int ground_truth_count = 0;
};

namespace detail {

// Shared by box AP and one-vs-rest classification AP: detections reduced to
// a ranked hit/miss sequence against a fixed positive count.
inline PRCurve curve_from_ranked_hits(const std::vector<char>& hit, int ground_truth) {
    PRCurve out;
    out.ground_truth_count = ground_truth;
    out.empty_ground_truth = ground_truth == 0;
    int tp = 0;
    for (std::size_t k = 0; k < hit.size(); ++k) {
        if (hit[k]) ++tp;
        out.recall.push_back(ground_truth == 0 ? 0.0 : static_cast<double>(tp) / ground_truth);
        out.precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    }
    out.true_positives = tp;
    if (ground_truth == 0) return out;

    std::vector<double> mono = out.precision;
    for (std::size_t k = mono.size(); k-- > 1;) mono[k - 1] = std::max(mono[k - 1], mono[k]);
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < mono.size(); ++k) {
        out.ap += (out.recall[k] - prev_recall) * mono[k];
        prev_recall = out.recall[k];
    }
    return out;
}

inline std::vector<std::size_t> rank_by_score_desc(const std::vector<EvalDetection>& dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&dets](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });
    return order;
}

}  // namespace detail

// Single-category AP: every detection and ground-truth box belongs to the
// same class, keyed by image id. Detections are ranked by descending score
// (ties keep input order); each one greedily claims the unmatched ground
// truth of its image with the highest overlap, counting as a true positive
// at IoU >= threshold and a false positive otherwise, duplicates included.
inline PRCurve average_precision(const std::vector<EvalDetection>& dets,
                                 const std::map<std::string, std::vector<BBox>>& gt,
                                 double iou_threshold = 0.4) {
    require(iou_threshold > 0.0 && iou_threshold <= 1.0, errc::invalid_argument,
            "average_precision: iou_threshold out of (0, 1]");
    int total_gt = 0;
    std::map<std::string, std::vector<bool>> claimed;
    for (const auto& [image, boxes] : gt) {
        for (const auto& b : boxes) {
            require(b.valid(), errc::invalid_argument, "average_precision: bad gt box");
        }
        total_gt += static_cast<int>(boxes.size());
        claimed[image].assign(boxes.size(), false);
    }
    for (const auto& d : dets) {
        require(std::isfinite(d.score), errc::invalid_argument,
                "average_precision: non-finite score");
        require(d.box.valid(), errc::invalid_argument, "average_precision: bad detection box");
    }

    const std::vector<std::size_t> order = detail::rank_by_score_desc(dets);
    std::vector<char> hit(dets.size(), 0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const EvalDetection& d = dets[order[k]];
        const auto it = gt.find(d.image_id);
        if (it == gt.end()) continue;
        auto& used = claimed[d.image_id];
        double best = 0.0;
        int best_idx = -1;
        for (std::size_t g = 0; g < it->second.size(); ++g) {
            if (used[g]) continue;
            const double v = iou(d.box, it->second[g]);
            if (v > best) {
                best = v;
                best_idx = static_cast<int>(g);
            }
        }
        if (best_idx >= 0 && best >= iou_threshold) {
            used[static_cast<std::size_t>(best_idx)] = true;
            hit[k] = 1;
        }
    }
    return detail::curve_from_ranked_hits(hit, total_gt);
}

struct EvalReport {
    std::vector<PRCurve> per_part;  // indexed by part id
    double mean_ap = 0.0;           // over parts that have ground truth
    int parts_with_truth = 0;
};

// Splits detections and truth by part id and averages AP over the parts
// that actually have ground truth; parts without truth keep their flagged
// zero curve but stay out of the mean.
inline EvalReport evaluate_part_detections(const std::vector<EvalDetection>& dets,
                                           const GroundTruthSet& gt, int part_count,
                                           double iou_threshold = 0.4) {
    require(part_count >= 1, errc::invalid_argument, "evaluate_part_detections: part_count");
    std::vector<std::vector<EvalDetection>> by_part(static_cast<std::size_t>(part_count));
    for (const auto& d : dets) {
        require(d.part_id >= 0 && d.part_id < part_count, errc::invalid_argument,
                "evaluate_part_detections: detection part id out of range");
        by_part[static_cast<std::size_t>(d.part_id)].push_back(d);
    }
    std::vector<std::map<std::string, std::vector<BBox>>> truth(
        static_cast<std::size_t>(part_count));
    for (const auto& [image, entry] : gt.images) {
        for (const auto& p : entry.parts) {
            require(p.part_id >= 0 && p.part_id < part_count, errc::invalid_argument,
                    "evaluate_part_detections: gt part id out of range");
            truth[static_cast<std::size_t>(p.part_id)][image].push_back(p.box);
        }
    }

    EvalReport out;
    double sum = 0.0;
    for (int p = 0; p < part_count; ++p) {
        out.per_part.push_back(average_precision(by_part[static_cast<std::size_t>(p)],
                                                 truth[static_cast<std::size_t>(p)],
                                                 iou_threshold));
        if (!out.per_part.back().empty_ground_truth) {
            sum += out.per_part.back().ap;
            ++out.parts_with_truth;
        }
    }
    out.mean_ap = out.parts_with_truth == 0 ? 0.0 : sum / out.parts_with_truth;
    return out;
}

struct ViewpointReport {
    std::array<std::array<int, kViewpointCount>, kViewpointCount> confusion{};  // [true][pred]
    std::array<int, kViewpointCount> support{};
    std::array<double, kViewpointCount> per_class_accuracy{};
    std::array<double, kViewpointCount> one_vs_rest_ap{};
    double overall_accuracy = 0.0;  // trace / total
    double mean_accuracy = 0.0;     // over classes with support
    int total = 0;
};

// `probs` may be empty (one-vs-rest AP left at zero) but when present must
// be parallel to `truth` with one row per sample.
inline ViewpointReport viewpoint_metrics(
    const std::vector<int>& truth, const std::vector<int>& predicted,
    const std::vector<std::array<double, kViewpointCount>>& probs = {}) {
    require(truth.size() == predicted.size(), errc::invalid_argument,
            "viewpoint_metrics: truth/prediction size mismatch");
    require(!truth.empty(), errc::invalid_argument, "viewpoint_metrics: no samples");
    require(probs.empty() || probs.size() == truth.size(), errc::invalid_argument,
            "viewpoint_metrics: probability rows");

    ViewpointReport out;
    out.total = static_cast<int>(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require(truth[i] >= 0 && truth[i] < kViewpointCount && predicted[i] >= 0 &&
                    predicted[i] < kViewpointCount,
                errc::invalid_argument, "viewpoint_metrics: label out of range");
        ++out.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    int trace = 0;
    int classes_seen = 0;
    double acc_sum = 0.0;
    for (int c = 0; c < kViewpointCount; ++c) {
        const auto& row = out.confusion[static_cast<std::size_t>(c)];
        out.support[static_cast<std::size_t>(c)] =
            std::accumulate(row.begin(), row.end(), 0);
        trace += row[static_cast<std::size_t>(c)];
        if (out.support[static_cast<std::size_t>(c)] > 0) {
            out.per_class_accuracy[static_cast<std::size_t>(c)] =
                static_cast<double>(row[static_cast<std::size_t>(c)]) /
                out.support[static_cast<std::size_t>(c)];
            acc_sum += out.per_class_accuracy[static_cast<std::size_t>(c)];
            ++classes_seen;
        }
    }
    out.overall_accuracy = static_cast<double>(trace) / out.total;
    out.mean_accuracy = classes_seen == 0 ? 0.0 : acc_sum / classes_seen;

    if (!probs.empty()) {
        for (int c = 0; c < kViewpointCount; ++c) {
            std::vector<std::size_t> order(truth.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&probs, c](std::size_t a, std::size_t b) {
                                 return probs[a][static_cast<std::size_t>(c)] >
                                        probs[b][static_cast<std::size_t>(c)];
                             });
            std::vector<char> hit(order.size(), 0);
            for (std::size_t k = 0; k < order.size(); ++k) hit[k] = truth[order[k]] == c;
            out.one_vs_rest_ap[static_cast<std::size_t>(c)] =
                detail::curve_from_ranked_hits(hit, out.support[static_cast<std::size_t>(c)]).ap;
        }
    }
    return out;
}

// Runs the classifier over whole labeled crops and scores the predictions.
inline ViewpointReport evaluate_viewpoints(
    const ViewpointClassifier& vc,
    const std::vector<std::pair<const Raster*, Viewpoint>>& samples) {
    require(!samples.empty(), errc::invalid_argument, "evaluate_viewpoints: no samples");
    std::vector<int> truth;
    std::vector<int> predicted;
    std::vector<std::array<double, kViewpointCount>> probs;
    for (const auto& [image, label] : samples) {
        require(image != nullptr, errc::invalid_argument, "evaluate_viewpoints: null image");
        const auto [pred, p] = predict_viewpoint(vc, *image, image->full_box());
        truth.push_back(static_cast<int>(label));
        predicted.push_back(static_cast<int>(pred));
        std::array<double, kViewpointCount> row{};
        for (int c = 0; c < kViewpointCount; ++c) {
            row[static_cast<std::size_t>(c)] = p[static_cast<std::size_t>(c)];
        }
        probs.push_back(row);
    }
    return viewpoint_metrics(truth, predicted, probs);
}

// --- detection CSV ---------------------------------------------------------

inline constexpr const char* kDetectionCsvHeader =
    "image_id,part_id,x_min,y_min,x_max,y_max,score";

namespace detail {

inline std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(std::string_view s, const char* what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v),
            errc::corrupt_file, std::string(what) + ": bad number \"" + std::string(s) + "\"");
    return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace detail

inline std::string detections_to_csv(const std::vector<EvalDetection>& dets) {
    std::string out = std::string(kDetectionCsvHeader) + "\n";
    for (const auto& d : dets) {
        require(d.image_id.find(',') == std::string::npos &&
                    d.image_id.find('\n') == std::string::npos,
                errc::invalid_argument, "detections_to_csv: image id contains a delimiter");
        out += d.image_id;
        out += ',' + std::to_string(d.part_id);
        out += ',' + detail::g17(d.box.x_min) + ',' + detail::g17(d.box.y_min);
        out += ',' + detail::g17(d.box.x_max) + ',' + detail::g17(d.box.y_max);
        out += ',' + detail::g17(d.score) + '\n';
    }
    return out;
}

inline std::vector<EvalDetection> detections_from_csv(const std::string& text) {
    std::vector<EvalDetection> out;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line_no == 1) {
            require(line == kDetectionCsvHeader, errc::corrupt_file,
                    "detections csv: bad header");
            continue;
        }
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        require(fields.size() == 7, errc::corrupt_file,
                "detections csv: wrong field count on line " + std::to_string(line_no));
        EvalDetection d;
        d.image_id = std::string(fields[0]);
        require(!d.image_id.empty(), errc::corrupt_file, "detections csv: empty image id");
        int part = 0;
        const auto [ptr, ec] =
            std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), part);
        require(ec == std::errc() && ptr == fields[1].data() + fields[1].size(),
                errc::corrupt_file, "detections csv: bad part id");
        d.part_id = part;
        d.box.x_min = detail::parse_double(fields[2], "detections csv");
        d.box.y_min = detail::parse_double(fields[3], "detections csv");
        d.box.x_max = detail::parse_double(fields[4], "detections csv");
        d.box.y_max = detail::parse_double(fields[5], "detections csv");
        d.score = detail::parse_double(fields[6], "detections csv");
        require(d.box.valid(), errc::corrupt_file, "detections csv: degenerate box");
        out.push_back(std::move(d));
    }
    return out;
}

// --- ground truth JSON ------------------------------------------------------

inline constexpr int kGroundTruthVersion = 1;

inline void validate_ground_truth(const GroundTruthSet& gt) {
    require(!gt.part_names.empty(), errc::invalid_argument, "ground truth: no parts");
    for (const auto& [image, entry] : gt.images) {
        require(!image.empty(), errc::invalid_argument, "ground truth: empty image id");
        for (const auto& o : entry.objects) {
            require(o.box.valid(), errc::invalid_argument, "ground truth: bad object box");
            require(o.viewpoint >= -1 && o.viewpoint < kViewpointCount, errc::invalid_argument,
                    "ground truth: bad viewpoint");
        }
        for (const auto& p : entry.parts) {
            require(p.part_id >= 0 && p.part_id < static_cast<int>(gt.part_names.size()),
                    errc::invalid_argument, "ground truth: part id out of range");
            require(p.box.valid(), errc::invalid_argument, "ground truth: bad part box");
        }
    }
}

inline std::string ground_truth_to_json(const GroundTruthSet& gt) {
    validate_ground_truth(gt);
    nlohmann::json j;
    j["gt_version"] = kGroundTruthVersion;
    j["parts"] = gt.part_names;
    nlohmann::json images = nlohmann::json::object();
    for (const auto& [image, entry] : gt.images) {
        nlohmann::json je;
        je["objects"] = nlohmann::json::array();
        for (const auto& o : entry.objects) {
            nlohmann::json jo;
            jo["box"] = nlohmann::json::array({o.box.x_min, o.box.y_min, o.box.x_max,
                                               o.box.y_max});
            if (o.viewpoint >= 0) jo["viewpoint"] = viewpoint_name(static_cast<Viewpoint>(o.viewpoint));
            je["objects"].push_back(jo);
        }
        je["parts"] = nlohmann::json::array();
        for (const auto& p : entry.parts) {
            je["parts"].push_back(
                {{"part", gt.part_names[static_cast<std::size_t>(p.part_id)]},
                 {"box", nlohmann::json::array(
                             {p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max})}});
        }
        images[image] = je;
    }
    j["images"] = images;
    return j.dump(2) + "\n";
}

inline GroundTruthSet ground_truth_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(errc::corrupt_file, "ground truth: " + std::string(e.what()));
    }
    if (!j.is_object() || !j.contains("gt_version") || !j["gt_version"].is_number_integer()) {
        raise(errc::corrupt_file, "ground truth: missing gt_version");
    }
    require(j["gt_version"].get<int>() == kGroundTruthVersion, errc::version_mismatch,
            "ground truth: unsupported gt_version");

    GroundTruthSet gt;
    const auto box_of = [](const nlohmann::json& jb) {
        if (!jb.is_array() || jb.size() != 4 || !jb[0].is_number() || !jb[1].is_number() ||
            !jb[2].is_number() || !jb[3].is_number()) {
            raise(errc::corrupt_file, "ground truth: box must be [x_min,y_min,x_max,y_max]");
        }
        const BBox b{jb[0].get<double>(), jb[1].get<double>(), jb[2].get<double>(),
                     jb[3].get<double>()};
        require(b.valid(), errc::corrupt_file, "ground truth: degenerate box");
        return b;
    };
    try {
        gt.part_names = j.at("parts").get<std::vector<std::string>>();
        require(!gt.part_names.empty(), errc::corrupt_file, "ground truth: no parts");
        const auto& images = j.at("images");
        require(images.is_object(), errc::corrupt_file, "ground truth: images");
        for (const auto& [image, je] : images.items()) {
            GtImage entry;
            if (je.contains("objects")) {
                for (const auto& jo : je["objects"]) {
                    GtObject o;
                    o.box = box_of(jo.contains("box") ? jo["box"] : nlohmann::json());
                    if (jo.contains("viewpoint")) {
                        require(jo["viewpoint"].is_string(), errc::corrupt_file,
                                "ground truth: viewpoint must be a name");
                        try {
                            o.viewpoint = static_cast<int>(
                                viewpoint_from_name(jo["viewpoint"].get<std::string>()));
                        } catch (const error&) {
                            raise(errc::corrupt_file, "ground truth: unknown viewpoint name");
                        }
                    }
                    entry.objects.push_back(o);
                }
            }
            if (je.contains("parts")) {
                for (const auto& jp : je["parts"]) {
                    GtPart p;
                    const std::string name = jp.at("part").get<std::string>();
                    const auto it =
                        std::find(gt.part_names.begin(), gt.part_names.end(), name);
                    require(it != gt.part_names.end(), errc::corrupt_file,
                            "ground truth: part not in parts list");
                    p.part_id = static_cast<int>(it - gt.part_names.begin());
                    p.box = box_of(jp.contains("box") ? jp["box"] : nlohmann::json());
                    entry.parts.push_back(p);
                }
            }
            gt.images[image] = std::move(entry);
        }
    } catch (const nlohmann::json::exception& e) {
        raise(errc::corrupt_file, "ground truth: " + std::string(e.what()));
    }
    return gt;
}

inline void save_ground_truth(const GroundTruthSet& gt, const std::string& path) {
    write_file_atomic(path, ground_truth_to_json(gt));
}

inline GroundTruthSet load_ground_truth(const std::string& path) {
    return ground_truth_from_json(read_file(path));
}

}  // namespace partforge
