#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "partforge/common.hpp"
#include "partforge/geometry.hpp"
#include "partforge/viewpoint.hpp"

namespace partforge {

inline constexpr int kManifestVersion = 1;

// Object-set key for images of unknown left/right facing; stage T0 splits
// such a set into the two side viewpoints.
inline constexpr const char* kSideSetKey = "side";

struct HardPartTruth {
    int part_id = 0;
    BBox box;
};

// One annotated image from the difficult target domain: the object box is
// given, the viewpoint and part boxes are optional evaluation extras.
struct HardExample {
    std::string image_path;
    BBox object_box;
    int viewpoint = -1;  // -1 when unlabeled, else a Viewpoint index
    std::vector<HardPartTruth> parts;
};

struct DatasetManifest {
    std::string class_name;
    std::vector<std::string> parts;
    std::map<std::string, std::vector<std::string>> object_sets;
    std::map<std::string, std::vector<std::string>> part_sets;
    std::vector<HardExample> hard_domain;

    int part_count() const { return static_cast<int>(parts.size()); }

    int part_index(std::string_view name) const {
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (parts[i] == name) return static_cast<int>(i);
        }
        raise(errc::invalid_argument, "manifest: unknown part \"" + std::string(name) + "\"");
    }
};

namespace detail {

inline bool is_object_set_key(const std::string& key) {
    if (key == kSideSetKey) return true;
    for (int i = 0; i < kViewpointCount; ++i) {
        if (key == viewpoint_name(static_cast<Viewpoint>(i))) return true;
    }
    return false;
}

inline nlohmann::json box_to_json(const BBox& b) {
    return nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

inline BBox box_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 4 || !j[0].is_number() || !j[1].is_number() ||
        !j[2].is_number() || !j[3].is_number()) {
        raise(errc::corrupt_file, std::string(what) + ": box must be [x_min,y_min,x_max,y_max]");
    }
    const BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    require(b.valid(), errc::corrupt_file, std::string(what) + ": degenerate box");
    return b;
}

}  // namespace detail

inline void validate_manifest(const DatasetManifest& m) {
    require(!m.class_name.empty(), errc::invalid_argument, "manifest: empty class_name");
    require(!m.parts.empty(), errc::invalid_argument, "manifest: no parts");
    for (std::size_t i = 0; i < m.parts.size(); ++i) {
        require(!m.parts[i].empty(), errc::invalid_argument, "manifest: empty part name");
        for (std::size_t j = i + 1; j < m.parts.size(); ++j) {
            require(m.parts[i] != m.parts[j], errc::invalid_argument,
                    "manifest: duplicate part \"" + m.parts[i] + "\"");
        }
    }
    for (const auto& [key, paths] : m.object_sets) {
        require(detail::is_object_set_key(key), errc::invalid_argument,
                "manifest: bad object set key \"" + key + "\"");
        (void)paths;
    }
    for (const auto& [key, paths] : m.part_sets) {
        m.part_index(key);
        (void)paths;
    }
    for (const auto& h : m.hard_domain) {
        require(!h.image_path.empty(), errc::invalid_argument, "manifest: empty hard path");
        require(h.object_box.valid(), errc::invalid_argument, "manifest: bad hard object box");
        require(h.viewpoint >= -1 && h.viewpoint < kViewpointCount, errc::invalid_argument,
                "manifest: bad hard viewpoint");
        for (const auto& p : h.parts) {
            require(p.part_id >= 0 && p.part_id < m.part_count(), errc::invalid_argument,
                    "manifest: bad hard part id");
            require(p.box.valid(), errc::invalid_argument, "manifest: bad hard part box");
        }
    }
}

// Paths inside the document are kept as written; loading resolves relative
// ones against the manifest's own directory and checks they exist.
inline DatasetManifest load_manifest(const std::string& path) {
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(errc::corrupt_file, "manifest: " + std::string(e.what()));
    }
    if (!j.is_object() || !j.contains("manifest_version") ||
        !j["manifest_version"].is_number_integer()) {
        raise(errc::corrupt_file, "manifest: missing manifest_version");
    }
    require(j["manifest_version"].get<int>() == kManifestVersion, errc::version_mismatch,
            "manifest: unsupported manifest_version");

    DatasetManifest m;
    try {
        m.class_name = j.at("class_name").get<std::string>();
        m.parts = j.at("parts").get<std::vector<std::string>>();
        if (j.contains("object_sets")) {
            m.object_sets =
                j["object_sets"].get<std::map<std::string, std::vector<std::string>>>();
        }
        if (j.contains("part_sets")) {
            m.part_sets = j["part_sets"].get<std::map<std::string, std::vector<std::string>>>();
        }
    } catch (const nlohmann::json::exception& e) {
        raise(errc::corrupt_file, "manifest: " + std::string(e.what()));
    }
    if (j.contains("hard_domain")) {
        require(j["hard_domain"].is_array(), errc::corrupt_file, "manifest: hard_domain");
        for (const auto& hj : j["hard_domain"]) {
            HardExample h;
            try {
                h.image_path = hj.at("image").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                raise(errc::corrupt_file, "manifest: " + std::string(e.what()));
            }
            h.object_box = detail::box_from_json(
                hj.contains("object_box") ? hj["object_box"] : nlohmann::json(),
                "manifest hard_domain");
            if (hj.contains("viewpoint")) {
                require(hj["viewpoint"].is_string(), errc::corrupt_file,
                        "manifest: hard viewpoint must be a name");
                try {
                    h.viewpoint =
                        static_cast<int>(viewpoint_from_name(hj["viewpoint"].get<std::string>()));
                } catch (const error&) {
                    raise(errc::corrupt_file, "manifest: unknown viewpoint \"" +
                                                  hj["viewpoint"].get<std::string>() + "\"");
                }
            }
            if (hj.contains("parts")) {
                for (const auto& pj : hj["parts"]) {
                    HardPartTruth t;
                    try {
                        t.part_id = m.part_index(pj.at("part").get<std::string>());
                    } catch (const nlohmann::json::exception& e) {
                        raise(errc::corrupt_file, "manifest: " + std::string(e.what()));
                    } catch (const error&) {
                        raise(errc::corrupt_file, "manifest: hard part not in parts list");
                    }
                    t.box = detail::box_from_json(
                        pj.contains("box") ? pj["box"] : nlohmann::json(), "manifest hard part");
                    h.parts.push_back(t);
                }
            }
            m.hard_domain.push_back(std::move(h));
        }
    }
    validate_manifest(m);

    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    const auto resolve = [&base](std::string& p) {
        std::filesystem::path fp(p);
        if (fp.is_relative()) fp = base / fp;
        require(std::filesystem::exists(fp), errc::missing_file,
                "manifest references missing file: " + fp.string());
        p = fp.string();
    };
    for (auto& [key, paths] : m.object_sets) {
        for (auto& p : paths) resolve(p);
    }
    for (auto& [key, paths] : m.part_sets) {
        for (auto& p : paths) resolve(p);
    }
    for (auto& h : m.hard_domain) resolve(h.image_path);
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    validate_manifest(m);
    nlohmann::json j;
    j["manifest_version"] = kManifestVersion;
    j["class_name"] = m.class_name;
    j["parts"] = m.parts;
    j["object_sets"] = m.object_sets;
    j["part_sets"] = m.part_sets;
    j["hard_domain"] = nlohmann::json::array();
    for (const auto& h : m.hard_domain) {
        nlohmann::json hj;
        hj["image"] = h.image_path;
        hj["object_box"] = detail::box_to_json(h.object_box);
        if (h.viewpoint >= 0) {
            hj["viewpoint"] = viewpoint_name(static_cast<Viewpoint>(h.viewpoint));
        }
        if (!h.parts.empty()) {
            nlohmann::json parts = nlohmann::json::array();
            for (const auto& p : h.parts) {
                parts.push_back({{"part", m.parts[static_cast<std::size_t>(p.part_id)]},
                                 {"box", detail::box_to_json(p.box)}});
            }
            hj["parts"] = parts;
        }
        j["hard_domain"].push_back(hj);
    }
    write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace partforge
