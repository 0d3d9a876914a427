#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "rvescope/image_io.hpp"

using namespace rvescope;

namespace {

namespace fs = std::filesystem;

std::string binary() {
    const char* bin = std::getenv("RVE_SCOPE_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "RVE_SCOPE_BIN must point at the rve-scope binary");
    return bin;
}

int run_cli(const std::string& args) {
    const std::string cmd = binary() + " " + args + " > /dev/null 2>&1";
    const int ret = std::system(cmd.c_str());
    REQUIRE(ret != -1);
    return WEXITSTATUS(ret);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct TempDir {
    fs::path dir;
    TempDir() {
        dir = fs::temp_directory_path() / ("rvescope_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

} // namespace

TEST_CASE("generate writes a reloadable micrograph and prints the realized vf") {
    TempDir tmp;
    const std::string img = tmp.path("disks.pgm");
    const int code = run_cli("generate --kind boolean-disks --vf 0.10 --radius 6 --height 256 "
                             "--width 256 --seed 42 --scale 0.25 --out " + img);
    CHECK(code == 0);
    const Micrograph m = load_micrograph(img);
    CHECK(m.volume_fraction() >= 0.09);
    CHECK(m.volume_fraction() <= 0.11);
    CHECK(m.scale_um_per_px == 0.25);
}

TEST_CASE("two identical generate invocations produce byte-identical files") {
    TempDir tmp;
    const std::string a = tmp.path("a.pgm");
    const std::string b = tmp.path("b.pgm");
    const std::string args = "generate --kind boolean-disks --vf 0.08 --radius 4 --height 128 "
                             "--width 128 --seed 7 --out ";
    REQUIRE(run_cli(args + a) == 0);
    REQUIRE(run_cli(args + b) == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a + ".meta") == slurp(b + ".meta"));
}

TEST_CASE("run produces deterministic CSV bytes and a report") {
    TempDir tmp;
    const std::string img = tmp.path("input.pgm");
    REQUIRE(run_cli("generate --kind boolean-disks --vf 0.15 --radius 3 --height 96 --width 96 "
                    "--seed 5 --out " + img) == 0);
    const std::string base = "run --input " + img +
                             " --ls 5 --model logistic --a diag --sizes 6,12,24,44 --folds 0 "
                             "--seed 9 ";
    const std::string csv1 = tmp.path("c1.csv");
    const std::string csv2 = tmp.path("c2.csv");
    const std::string rep = tmp.path("report.txt");
    const std::string svg = tmp.path("plot.svg");
    REQUIRE(run_cli(base + "--csv " + csv1 + " --report " + rep + " --svg " + svg) == 0);
    REQUIRE(run_cli(base + "--csv " + csv2 + " --report /dev/null") == 0);

    CHECK(slurp(csv1) == slurp(csv2));
    const std::string csv_text = slurp(csv1);
    CHECK(std::count(csv_text.begin(), csv_text.end(), '\n') == 5); // header + 4 sizes

    const std::string report = slurp(rep);
    CHECK(report.find("Resolved configuration") != std::string::npos);
    CHECK(report.find("Selected RVE size") != std::string::npos);
    CHECK(report.find("seed = 9") != std::string::npos);

    CHECK(slurp(svg).find("id=\"rve-marker\"") != std::string::npos);
}

TEST_CASE("sizes range expansion lo:hi:step") {
    TempDir tmp;
    const std::string img = tmp.path("input.pgm");
    REQUIRE(run_cli("generate --kind boolean-disks --vf 0.15 --radius 3 --height 96 --width 96 "
                    "--seed 5 --out " + img) == 0);
    const std::string csv = tmp.path("c.csv");
    REQUIRE(run_cli("run --input " + img + " --ls 5 --sizes 8:40:8 --folds 0 --csv " + csv +
                    " --report /dev/null") == 0);
    const std::string text = slurp(csv);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6); // header + 5 sizes (8..40 step 8)
}

TEST_CASE("exit code contract") {
    TempDir tmp;
    const std::string img = tmp.path("input.pgm");
    REQUIRE(run_cli("generate --kind boolean-disks --vf 0.15 --radius 3 --height 64 --width 64 "
                    "--seed 5 --out " + img) == 0);

    SUBCASE("config error: even l_s") {
        CHECK(run_cli("run --input " + img + " --ls 20") == 2);
    }
    SUBCASE("config error: unknown flag") {
        CHECK(run_cli("run --input " + img + " --no-such-flag 1") == 2);
    }
    SUBCASE("config error: bad sizes spec") {
        CHECK(run_cli("run --input " + img + " --ls 5 --sizes 40:8:20") == 2);
    }
    SUBCASE("io error: missing input") {
        CHECK(run_cli("run --input " + tmp.path("missing.pgm") + " --ls 5") == 3);
    }
    SUBCASE("io error: unwritable csv") {
        CHECK(run_cli("run --input " + img +
                      " --ls 5 --sizes 6,12,24,30 --folds 0 --csv /nonexistent_dir_zzz/x.csv") == 3);
    }
    SUBCASE("generation error: infeasible target") {
        CHECK(run_cli("generate --kind boolean-disks --vf 0.95 --radius 40 --height 256 "
                      "--width 256 --out " + tmp.path("x.pgm")) == 4);
    }
    SUBCASE("numerical error: single-class input") {
        IntensityGrid g;
        g.height = 64;
        g.width = 64;
        g.values.assign(64 * 64, 0);
        const std::string blank = tmp.path("blank.pgm");
        write_pgm(blank, g);
        CHECK(run_cli("run --input " + blank + " --ls 5 --sizes 6,12,24,30 --folds 0") == 5);
    }
}

TEST_CASE("curve subcommand re-runs elbow detection on an existing CSV") {
    TempDir tmp;
    const std::string img = tmp.path("input.pgm");
    REQUIRE(run_cli("generate --kind boolean-disks --vf 0.15 --radius 3 --height 96 --width 96 "
                    "--seed 5 --out " + img) == 0);
    const std::string csv = tmp.path("c.csv");
    const std::string rep1 = tmp.path("r1.txt");
    const std::string rep2 = tmp.path("r2.txt");
    REQUIRE(run_cli("run --input " + img + " --ls 5 --sizes 6,12,24,44 --folds 0 --csv " + csv +
                    " --report " + rep1) == 0);
    REQUIRE(run_cli("curve --csv " + csv + " --report " + rep2) == 0);

    // both reports agree on the selected size
    const std::string r1 = slurp(rep1);
    const std::string r2 = slurp(rep2);
    const auto pick = [](const std::string& text) {
        const auto at = text.find("Selected RVE size");
        return text.substr(at, text.find('\n', at) - at);
    };
    CHECK(pick(r1) == pick(r2));

    SUBCASE("missing csv is an io error") {
        CHECK(run_cli("curve --csv " + tmp.path("nope.csv")) == 3);
    }
}

TEST_CASE("run honors the score dump and model checkpoint flags") {
    TempDir tmp;
    const std::string img = tmp.path("input.pgm");
    REQUIRE(run_cli("generate --kind boolean-disks --vf 0.15 --radius 3 --height 64 --width 64 "
                    "--seed 5 --out " + img) == 0);
    const std::string dump = tmp.path("scores.bin");
    const std::string ckpt = tmp.path("model.txt");
    REQUIRE(run_cli("run --input " + img + " --ls 5 --sizes 6,12,24,30 --folds 0 --dump-scores " +
                    dump + " --save-model " + ckpt + " --report /dev/null") == 0);
    const std::string blob = slurp(dump);
    REQUIRE(blob.size() > 24);
    CHECK(blob.substr(0, 4) == "RVSF");
    CHECK(slurp(ckpt).rfind("rvescope-model v1", 0) == 0);
}

TEST_CASE("config file supplies defaults and flags override it") {
    TempDir tmp;
    const std::string img = tmp.path("input.pgm");
    REQUIRE(run_cli("generate --kind boolean-disks --vf 0.15 --radius 3 --height 96 --width 96 "
                    "--seed 5 --out " + img) == 0);
    const std::string conf = tmp.path("run.conf");
    {
        std::ofstream out(conf);
        out << "ls = 7\n";
        out << "sizes = 6,12,24,44\n";
        out << "folds = 0\n";
        out << "seed = 4\n";
    }
    const std::string rep1 = tmp.path("r1.txt");
    REQUIRE(run_cli("run --config " + conf + " --input " + img + " --report " + rep1) == 0);
    CHECK(slurp(rep1).find("ls = 7") != std::string::npos);

    // a command-line flag overrides the config file value
    const std::string rep2 = tmp.path("r2.txt");
    REQUIRE(run_cli("run --config " + conf + " --input " + img + " --ls 5 --report " + rep2) == 0);
    CHECK(slurp(rep2).find("ls = 5") != std::string::npos);
}

TEST_CASE("mlp model runs end to end with cross-validated accuracy in the report") {
    TempDir tmp;
    const std::string img = tmp.path("input.pgm");
    REQUIRE(run_cli("generate --kind boolean-disks --vf 0.2 --radius 3 --height 64 --width 64 "
                    "--seed 6 --out " + img) == 0);
    const std::string rep = tmp.path("r.txt");
    REQUIRE(run_cli("run --input " + img +
                    " --ls 5 --model mlp --learning-rate 0.05 --sgd-epochs 3 --sizes 6,12,24,30 "
                    "--folds 2 --report " + rep) == 0);
    const std::string text = slurp(rep);
    CHECK(text.find("model = mlp") != std::string::npos);
    CHECK(text.find("CV balanced accuracy: 0") != std::string::npos);
}

TEST_CASE("RVE_SCOPE_THREADS is the fallback for --threads") {
    TempDir tmp;
    const std::string img = tmp.path("input.pgm");
    REQUIRE(run_cli("generate --kind boolean-disks --vf 0.15 --radius 3 --height 64 --width 64 "
                    "--seed 5 --out " + img) == 0);
    const std::string rep = tmp.path("r.txt");
    const std::string cmd = "RVE_SCOPE_THREADS=2 " + binary() + " run --input " + img +
                            " --ls 5 --sizes 6,12,24,30 --folds 0 --report " + rep +
                            " > /dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(slurp(rep).find("threads = 2") != std::string::npos);
}
