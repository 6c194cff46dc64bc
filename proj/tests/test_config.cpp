#include "glued/config.hpp"
#include "glued/error.hpp"
#include "glued/experiment.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace glued;
namespace fs = std::filesystem;

namespace {

const fs::path config_dir = GLUED_CONFIG_DIR;

const char* segment_cfg = R"(# two pieces
[piece a]
kind = segment
length = 2
cells = 8
origin = -1 0 0

[piece b]
kind = segment
length = 2
cells = 8
origin = 0 -1 0
direction = 0 1 0

[task]
name = build
seed = 3
)";

RawConfig parse(const std::string& text)
{
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

std::string config_error_of(const std::string& text)
{
    try {
        load_experiment(parse(text));
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config) << e.what();
        return e.what();
    }
    ADD_FAILURE() << "config accepted";
    return {};
}

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("glued_test_config_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const fs::path& cfg, const fs::path& out)
{
    std::ostringstream o, e;
    RunOptions opts;
    opts.out_dir = out;
    return run_config_file(cfg, opts, o, e);
}

nlohmann::json report(const fs::path& file)
{
    std::ifstream in(file);
    return nlohmann::json::parse(in)["report"];
}

std::string slurp(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

int cli(const std::string& args)
{
    const int status = std::system((std::string(GLUED_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Parse, SectionsAndEntries)
{
    const auto raw = parse(segment_cfg);
    ASSERT_EQ(raw.sections.size(), 3u);
    EXPECT_EQ(raw.sections[0].type, "piece");
    EXPECT_EQ(raw.sections[0].name, "a");
    EXPECT_EQ(raw.sections[0].entries.at("cells").value, "8");
    EXPECT_EQ(raw.sections[0].entries.at("cells").line, 5u);
    EXPECT_EQ(raw.sections[2].name, "");
}

TEST(Parse, MalformedLineHasLineNumber)
{
    try {
        parse("[piece a]\nkind = segment\nlength\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        EXPECT_NE(std::string(e.what()).find("test.cfg:3"), std::string::npos) << e.what();
    }
}

TEST(Parse, DuplicatesRejected)
{
    EXPECT_THROW(parse("[piece a]\nkind = segment\nkind = disk\n"), Error);
    EXPECT_THROW(parse("[piece a]\nkind = segment\n[piece a]\nkind = disk\n"), Error);
}

TEST(Schema, UnknownKeyNamesLine)
{
    std::string text = segment_cfg;
    text.insert(text.find("cells = 8"), "radiuss = 2\n");
    const auto msg = config_error_of(text);
    EXPECT_NE(msg.find("radiuss"), std::string::npos) << msg;
    EXPECT_NE(msg.find("test.cfg:5"), std::string::npos) << msg;
}

TEST(Schema, UnknownSectionAndTask)
{
    config_error_of(std::string(segment_cfg) + "[widget w]\nsize = 1\n");
    std::string text = segment_cfg;
    text.replace(text.find("name = build"), 12, "name = bake");
    config_error_of(text);
}

TEST(Schema, MissingKeyRejected)
{
    std::string text = segment_cfg;
    text.erase(text.find("kind = segment\n"), 15);
    EXPECT_NE(config_error_of(text).find("kind"), std::string::npos);
}

TEST(Schema, BadValuesRejected)
{
    for (const auto& [from, to] : std::vector<std::pair<std::string, std::string>>{
             {"cells = 8", "cells = eight"},
             {"length = 2", "length = 2 3"},
             {"origin = -1 0 0", "origin = -1 0"},
             {"seed = 3", "seed = -3"},
             {"length = 2", "length = nan"}}) {
        std::string text = segment_cfg;
        text.replace(text.find(from), from.size(), to);
        config_error_of(text);
    }
}

TEST(Schema, WeightMustNameAPiece)
{
    config_error_of(std::string(segment_cfg) + "[weight c]\nkind = constant\nvalue = 2\n");
}

TEST(Schema, ExactlyOneTask)
{
    std::string text = segment_cfg;
    config_error_of(text.substr(0, text.find("[task]")));
}

TEST(Canonical, HashIgnoresLayoutAndComments)
{
    const auto a = load_experiment(parse(segment_cfg));
    std::string text = segment_cfg;
    text.replace(text.find("cells = 8"), 9, "cells   =   8   # fine enough");
    text.insert(0, "\n\n# leading comment\n");
    EXPECT_EQ(load_experiment(parse(text)).hash, a.hash);
    EXPECT_EQ(load_experiment(parse(segment_cfg)).canonical, a.canonical);
}

TEST(Canonical, HashTracksValuesAndSeed)
{
    const auto a = load_experiment(parse(segment_cfg));
    std::string text = segment_cfg;
    text.replace(text.find("cells = 8"), 9, "cells = 9");
    EXPECT_NE(load_experiment(parse(text)).hash, a.hash);
    const auto b = load_experiment(parse(segment_cfg), 4);
    EXPECT_EQ(b.seed, 4u);
    EXPECT_NE(b.hash, a.hash);
    EXPECT_EQ(load_experiment(parse(segment_cfg), 3).hash, a.hash);
}

TEST(Canonical, Fnv1aReferenceValues)
{
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

TEST(ExitCode, Mapping)
{
    EXPECT_EQ(exit_code(ErrorKind::config), 2);
    EXPECT_EQ(exit_code(ErrorKind::invalid_parameter), 2);
    EXPECT_EQ(exit_code(ErrorKind::ambiguity), 3);
    EXPECT_EQ(exit_code(ErrorKind::hypothesis_violation), 3);
    EXPECT_EQ(exit_code(ErrorKind::non_integrable_weight), 3);
    EXPECT_EQ(exit_code(ErrorKind::non_compliant_mesh), 3);
    EXPECT_EQ(exit_code(ErrorKind::numeric), 4);
}

TEST(Run, BuildReportsOnePointJunction)
{
    const auto out = scratch("build");
    ASSERT_EQ(run(config_dir / "disk_segment_build.cfg", out), 0);
    const auto r = report(out / "build.json");
    EXPECT_EQ(r["pieces"].size(), 2u);
    ASSERT_EQ(r["intersections"].size(), 1u);
    EXPECT_EQ(r["intersections"][0]["k"], 0);
    EXPECT_TRUE(fs::exists(out / "meta.json"));
}

TEST(Run, NonIntegrableWeightExitsThree)
{
    EXPECT_EQ(run(config_dir / "disk_alpha2_weights.cfg", scratch("alpha2")), 3);
}

TEST(Run, WeightedExampleIsErgodic)
{
    const auto out = scratch("ergodicity");
    ASSERT_EQ(run(config_dir / "disk_segment_ergodicity.cfg", out), 0);
    EXPECT_EQ(report(out / "ergodicity.json")["verdict"], "ergodic");
    EXPECT_TRUE(fs::exists(out / "gap_curve.csv"));
}

TEST(Run, WalkOnObtuseMeshExitsThree)
{
    const auto dir = scratch("sliver");
    std::ofstream(dir / "sliver.mesh") << "dim 2\nvertices 4\n0 0 0\n2 0 0\n1 0.1 0\n1 -0.1 0\ncells 2\n0 1 2\n0 3 1\n";
    std::ofstream(dir / "walk.cfg") << "[piece s]\nkind = mesh\nfile = sliver.mesh\n\n[task]\nname = walk\nhorizon = 1\n";
    EXPECT_EQ(run(dir / "walk.cfg", dir / "out"), 3);
}

TEST(Run, MissingConfigExitsTwo)
{
    EXPECT_EQ(run(config_dir / "does_not_exist.cfg", scratch("missing")), 2);
}

TEST(Run, RerunIsByteIdentical)
{
    const auto a = scratch("rerun_a"), b = scratch("rerun_b");
    ASSERT_EQ(run(config_dir / "disk_segment_walk.cfg", a), 0);
    ASSERT_EQ(run(config_dir / "disk_segment_walk.cfg", b), 0);
    std::size_t compared = 0;
    for (const auto& f : fs::directory_iterator(a)) {
        if (f.path().filename() == "meta.json") continue;
        EXPECT_EQ(slurp(f.path()), slurp(b / f.path().filename())) << f.path().filename();
        ++compared;
    }
    EXPECT_GE(compared, 2u);
}

TEST(Cli, ExitCodes)
{
    const auto out = scratch("cli");
    EXPECT_EQ(cli("--config " + (config_dir / "disk_segment_build.cfg").string() + " --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "build.json"));
    EXPECT_EQ(cli("--config " + (config_dir / "disk_alpha2_weights.cfg").string() + " --out " + out.string()), 3);
    EXPECT_EQ(cli("--out " + out.string()), 2);
    EXPECT_EQ(cli("--config " + (config_dir / "disk_segment_build.cfg").string() + " --threads x"), 2);
}

TEST(Cli, SeedOverrideChangesTrace)
{
    const auto a = scratch("cli_seed_a"), b = scratch("cli_seed_b");
    const std::string cfg = "--config " + (config_dir / "disk_segment_walk.cfg").string();
    ASSERT_EQ(cli(cfg + " --out " + a.string()), 0);
    ASSERT_EQ(cli(cfg + " --seed 8 --out " + b.string()), 0);
    EXPECT_NE(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
    EXPECT_EQ(report(b / "walk.json").is_object(), true);
}
