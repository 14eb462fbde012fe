#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "partforge/manifest.hpp"

using namespace partforge;
namespace fs = std::filesystem;

namespace {

errc thrown_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return errc::invalid_argument;
}

struct TempDir {
    std::string path;
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "partforge-test-XXXXXX").string();
        REQUIRE(mkdtemp(tmpl.data()) != nullptr);
        path = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& rel, const std::string& content = "x") const {
        const fs::path p = fs::path(path) / rel;
        fs::create_directories(p.parent_path());
        std::ofstream out(p);
        out << content;
        return p.string();
    }
};

DatasetManifest sample_manifest() {
    DatasetManifest m;
    m.class_name = "cart";
    m.parts = {"wheel", "lamp"};
    m.object_sets["front"] = {"imgs/f0.ppm"};
    m.object_sets["side"] = {"imgs/s0.ppm", "imgs/s1.ppm"};
    m.part_sets["wheel"] = {"imgs/w0.ppm"};
    HardExample h;
    h.image_path = "hard/h0.ppm";
    h.object_box = {4, 6, 40, 30};
    h.viewpoint = static_cast<int>(Viewpoint::left);
    h.parts.push_back({1, BBox{10, 10, 14, 14}});
    m.hard_domain.push_back(h);
    return m;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace

TEST_CASE("manifest round trip resolves relative paths") {
    TempDir dir;
    for (const char* rel : {"imgs/f0.ppm", "imgs/s0.ppm", "imgs/s1.ppm", "imgs/w0.ppm",
                            "hard/h0.ppm"}) {
        dir.file(rel);
    }
    const std::string mpath = (fs::path(dir.path) / "data.json").string();
    save_manifest(sample_manifest(), mpath);

    const DatasetManifest m = load_manifest(mpath);
    CHECK(m.class_name == "cart");
    REQUIRE(m.parts == std::vector<std::string>{"wheel", "lamp"});
    CHECK(m.part_count() == 2);
    REQUIRE(m.object_sets.size() == 2);
    REQUIRE(m.object_sets.at("side").size() == 2);
    CHECK(m.object_sets.at("front")[0] == (fs::path(dir.path) / "imgs/f0.ppm").string());
    CHECK(m.object_sets.at("side")[1] == (fs::path(dir.path) / "imgs/s1.ppm").string());
    CHECK(m.part_sets.at("wheel")[0] == (fs::path(dir.path) / "imgs/w0.ppm").string());

    REQUIRE(m.hard_domain.size() == 1);
    CHECK(m.hard_domain[0].image_path == (fs::path(dir.path) / "hard/h0.ppm").string());
    CHECK(m.hard_domain[0].object_box == BBox{4, 6, 40, 30});
    CHECK(m.hard_domain[0].viewpoint == static_cast<int>(Viewpoint::left));
    REQUIRE(m.hard_domain[0].parts.size() == 1);
    CHECK(m.hard_domain[0].parts[0].part_id == 1);
    CHECK(m.hard_domain[0].parts[0].box == BBox{10, 10, 14, 14});

    // Re-saving the loaded (now absolute) manifest loads identically again.
    const std::string mpath2 = (fs::path(dir.path) / "data2.json").string();
    save_manifest(m, mpath2);
    const DatasetManifest m2 = load_manifest(mpath2);
    CHECK(m2.object_sets == m.object_sets);
    CHECK(m2.part_sets == m.part_sets);
    CHECK(m2.hard_domain.size() == m.hard_domain.size());
}

TEST_CASE("manifest load error taxonomy") {
    TempDir dir;
    const std::string mpath = (fs::path(dir.path) / "m.json").string();

    CHECK(thrown_code([&] { load_manifest((fs::path(dir.path) / "nope.json").string()); }) ==
          errc::missing_file);

    write_text(mpath, "{ not json");
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, R"({"class_name":"c","parts":["p"]})");
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, R"({"manifest_version":"1","class_name":"c","parts":["p"]})");
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, R"({"manifest_version":7,"class_name":"c","parts":["p"]})");
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::version_mismatch);

    write_text(mpath, R"({"manifest_version":1,"parts":["p"]})");
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, R"({"manifest_version":1,"class_name":"c","parts":"p"})");
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);
}

TEST_CASE("manifest hard-domain parsing errors") {
    TempDir dir;
    dir.file("h.ppm");
    const std::string mpath = (fs::path(dir.path) / "m.json").string();
    const auto doc = [](const std::string& hard) {
        return R"({"manifest_version":1,"class_name":"c","parts":["p"],"hard_domain":)" + hard +
               "}";
    };

    write_text(mpath, doc(R"([{"object_box":[0,0,1,1]}])"));  // no image key
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, doc(R"([{"image":"h.ppm","object_box":[0,0,1]}])"));
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, doc(R"([{"image":"h.ppm","object_box":[5,5,1,1]}])"));  // inverted
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, doc(R"([{"image":"h.ppm","object_box":[0,0,1,1],"viewpoint":"northish"}])"));
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, doc(R"([{"image":"h.ppm","object_box":[0,0,1,1],"viewpoint":3}])"));
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath,
               doc(R"([{"image":"h.ppm","object_box":[0,0,1,1],)"
                   R"("parts":[{"part":"axle","box":[0,0,1,1]}]}])"));
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath,
               doc(R"([{"image":"h.ppm","object_box":[0,0,1,1],)"
                   R"("parts":[{"part":"p"}]}])"));  // missing box
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::corrupt_file);

    write_text(mpath, doc(R"([{"image":"gone.ppm","object_box":[0,0,1,1]}])"));
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::missing_file);

    write_text(mpath, doc(R"([{"image":"h.ppm","object_box":[0,0,1,1],"viewpoint":"back"}])"));
    const DatasetManifest ok = load_manifest(mpath);
    REQUIRE(ok.hard_domain.size() == 1);
    CHECK(ok.hard_domain[0].viewpoint == static_cast<int>(Viewpoint::back));
    CHECK(ok.hard_domain[0].parts.empty());
}

TEST_CASE("manifest referenced image must exist") {
    TempDir dir;
    DatasetManifest m;
    m.class_name = "c";
    m.parts = {"p"};
    m.object_sets["front"] = {"missing.ppm"};
    const std::string mpath = (fs::path(dir.path) / "m.json").string();
    save_manifest(m, mpath);  // saving does not touch referenced paths
    CHECK(thrown_code([&] { load_manifest(mpath); }) == errc::missing_file);
}

TEST_CASE("manifest validation rules") {
    DatasetManifest m = sample_manifest();
    validate_manifest(m);

    DatasetManifest bad = m;
    bad.class_name.clear();
    CHECK(thrown_code([&] { validate_manifest(bad); }) == errc::invalid_argument);

    bad = m;
    bad.parts = {"wheel", "wheel"};
    CHECK(thrown_code([&] { validate_manifest(bad); }) == errc::invalid_argument);

    bad = m;
    bad.parts.clear();
    CHECK(thrown_code([&] { validate_manifest(bad); }) == errc::invalid_argument);

    bad = m;
    bad.object_sets["topdown"] = {"a.ppm"};
    CHECK(thrown_code([&] { validate_manifest(bad); }) == errc::invalid_argument);

    bad = m;
    bad.part_sets["axle"] = {"a.ppm"};
    CHECK(thrown_code([&] { validate_manifest(bad); }) == errc::invalid_argument);

    bad = m;
    bad.hard_domain[0].viewpoint = 4;
    CHECK(thrown_code([&] { validate_manifest(bad); }) == errc::invalid_argument);

    bad = m;
    bad.hard_domain[0].parts[0].part_id = 2;
    CHECK(thrown_code([&] { validate_manifest(bad); }) == errc::invalid_argument);

    CHECK(m.part_index("lamp") == 1);
    CHECK(thrown_code([&] { (void)m.part_index("axle"); }) == errc::invalid_argument);

    // save_manifest validates before writing
    TempDir dir;
    bad = m;
    bad.object_sets["topdown"] = {"a.ppm"};
    CHECK(thrown_code([&] {
              save_manifest(bad, (fs::path(dir.path) / "m.json").string());
          }) == errc::invalid_argument);
    CHECK_FALSE(fs::exists(fs::path(dir.path) / "m.json"));
}
