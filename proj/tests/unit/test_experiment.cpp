#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fixtures.hpp"
#include "gradflow/config.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/experiment.hpp"
#include "gradflow/svg.hpp"

using namespace gradflow;
namespace fs = std::filesystem;

namespace {

Config parse(const std::string& text) {
    std::istringstream in(text);
    return Config::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("gradflow_exp_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config parsing") {
    const auto cfg = parse("# comment\n depths = 1, 2 ,4\nlr=0.01\n\nflag = yes\n");
    CHECK(cfg.list("depths") == std::vector<std::string>{"1", "2", "4"});
    CHECK(cfg.real("lr", 0.0) == 0.01);
    CHECK(cfg.boolean("flag", false));
    CHECK(cfg.count("missing", 7) == 7);
    CHECK_THROWS_AS(parse("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(parse("bad key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("x = abc\n").real("x", 0.0), ConfigError);
    CHECK_THROWS_AS(parse("x = -3\n").count("x", 0), ConfigError);
    CHECK_THROWS_AS(parse("x = ,\n").list("x"), ConfigError);
    CHECK_THROWS_AS(Config::load("/nonexistent/gradflow.cfg"), ConfigError);
}

TEST_CASE("command names round trip") {
    for (auto c : {Command::GradProfile, Command::DepthSweep, Command::TrainCurves, Command::Scatter,
                   Command::BoundCheck, Command::OracleTest}) {
        CHECK(parse_command(to_string(c)) == c);
    }
    CHECK_FALSE(parse_command("train"));
}

TEST_CASE("spec defaults per command") {
    const Config empty;
    const auto sweep = ExperimentSpec::from_config(Command::DepthSweep, empty);
    CHECK(sweep.depths == std::vector<std::size_t>{1, 2, 4, 8, 16, 32, 64, 128});
    CHECK(sweep.c_values.size() == 4);
    CHECK_FALSE(sweep.c_values[0]);
    CHECK(sweep.repeats == 5);
    CHECK(sweep.lrs.size() == 3);
    CHECK(ExperimentSpec::from_config(Command::DepthSweep, empty, true).depths.back() == 512);

    const auto curves = ExperimentSpec::from_config(Command::TrainCurves, empty);
    CHECK(curves.lrs == std::vector<double>{0.001});
    CHECK(curves.max_epochs == 1000);
    CHECK_FALSE(curves.early_stop);

    const auto grad = ExperimentSpec::from_config(Command::GradProfile, empty);
    CHECK(grad.activations.size() == 3);
    CHECK(ExperimentSpec::from_config(Command::OracleTest, empty).instances == 100);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(ExperimentSpec::from_config(Command::Scatter, parse("repeats = 0\n")), ConfigError);
    CHECK_THROWS_AS(ExperimentSpec::from_config(Command::Scatter, parse("c = none, -1\n")), ConfigError);
    CHECK_THROWS_AS(ExperimentSpec::from_config(Command::Scatter, parse("depths = 0\n")), ConfigError);
    CHECK_THROWS_AS(ExperimentSpec::from_config(Command::Scatter, parse("activations = tanh\n")), ConfigError);
    CHECK_THROWS_AS(ExperimentSpec::from_config(Command::Scatter, parse("typo = 1\n")), ConfigError);
    CHECK_THROWS_AS(ExperimentSpec::from_config(Command::OracleTest, parse("instances = 0\n")), ConfigError);
}

TEST_CASE("grid expansion") {
    const auto spec = ExperimentSpec::from_config(
        Command::DepthSweep, parse("depths = 2,4\nc = none,0.5\nlr = 0.01\nrepeats = 2\nseed_base = 7\n"));
    const auto cells = expand_grid(spec);
    REQUIRE(cells.size() == 8);
    CHECK(cells[0].id == "L2-res-relu-cnone-lr0.01-s0");
    CHECK(cells[1].seed == 8);
    CHECK(cells[2].c == 0.5);
    CHECK(cells[7].id == "L4-res-relu-c0.5-lr0.01-s1");
}

TEST_CASE("grad-profile writes the output tree and a manifest") {
    const auto out = scratch("gp");
    auto spec = ExperimentSpec::from_config(
        Command::GradProfile,
        parse("depths = 2,6\nactivations = relu,gelu\nhidden_dim = 8\nmax_epochs = 30\nsbm.per_block = 15\n"
              "out_dir = " +
              out.string() + "\n"));
    spec.jobs = 2;
    const auto res = run_experiment(spec);
    CHECK(res.exit_code == kExitOk);
    REQUIRE(res.profiles.size() == 4);
    for (const auto& row : res.profiles) {
        const auto dir = out / "grad-profile" / row.cell.id;
        for (const char* f : {"log.csv", "summary.txt", "profile.csv", "plot.svg"}) CHECK(fs::exists(dir / f));
        CHECK(row.profile.values.size() == row.cell.depth + 1);
    }
    CHECK(fs::exists(out / "grad-profile" / "profiles.svg"));
    const auto manifest = slurp(out / "manifest.txt");
    CHECK(manifest.find("command = grad-profile") != std::string::npos);
    CHECK(manifest.find("seeds = 0,0,0,0") != std::string::npos);
    CHECK(manifest.find("grad-profile/fits.csv sha256:") != std::string::npos);
    CHECK(res.artifacts.size() == 4 * 4 + 3);

    SUBCASE("rerunning reproduces every artifact byte for byte") {
        const auto before = slurp(out / "manifest.txt");
        spec.jobs = 1;
        run_experiment(spec);
        CHECK(slurp(out / "manifest.txt") == before);
    }
}

TEST_CASE("scatter, sweep and curves run on a tiny grid") {
    const auto out = scratch("small");
    const std::string common = "hidden_dim = 6\nmax_epochs = 15\nsbm.per_block = 12\nout_dir = " + out.string() + "\n";

    const auto sc = run_experiment(ExperimentSpec::from_config(Command::Scatter, parse(common + "depths = 2,4\n")));
    CHECK(sc.scatter.size() == 4);
    CHECK(fs::exists(out / "scatter" / "scatter_rep_vs_grad.svg"));
    CHECK(fs::exists(out / "scatter" / "scatter_acc_vs_grad.svg"));
    CHECK(fs::exists(out / "scatter" / "scatter_acc_vs_rep.svg"));

    const auto sw = run_experiment(ExperimentSpec::from_config(
        Command::DepthSweep, parse(common + "depths = 1,2\nc = none,1\nlr = 0.01,0.05\nrepeats = 2\n")));
    REQUIRE(sw.sweep.size() == 4);
    for (const auto& row : sw.sweep) {
        CHECK((row.best_lr == 0.01 || row.best_lr == 0.05));
        CHECK(row.test.min <= row.test.mean);
    }
    CHECK(fs::exists(out / "depth-sweep" / "sweep.csv"));

    const auto tc = run_experiment(ExperimentSpec::from_config(Command::TrainCurves, parse(common + "depths = 2\n")));
    REQUIRE(tc.curves.size() == 4);
    for (const auto& row : tc.curves) CHECK(row.epochs.size() == 15);
    const auto curves = slurp(out / "train-curves" / "curves.csv");
    CHECK(curves.rfind("epoch,L2-res-relu-cnone-lr0.001-s0,", 0) == 0);
}

TEST_CASE("dataset load failures surface as data errors") {
    const auto out = scratch("data");
    const auto dir = out / "cora";
    fs::create_directories(dir);
    auto spec = ExperimentSpec::from_config(Command::Scatter, parse("dataset = " + dir.string() + "\n"));
    spec.out_dir = out;
    CHECK_THROWS_AS(run_experiment(spec), ParseError);

    write_dataset(sbm_generate({2, 5, 0.5, 0.1, 2, 0}), DatasetFiles::in_directory(dir));
    CHECK_THROWS_AS(run_experiment(spec), IntegrityError);
    spec.no_validate = true;
    spec.depths = {1};
    spec.residual = {false};
    spec.max_epochs = 2;
    CHECK(run_experiment(spec).scatter.size() == 1);
}

TEST_CASE("oracle-test and bound-check suites pass and are reproducible") {
    const auto out = scratch("oracle");
    const std::string out_line = "out_dir = " + out.string() + "\n";
    auto spec = ExperimentSpec::from_config(Command::OracleTest, parse("instances = 20\n" + out_line));
    const auto res = run_experiment(spec);
    CHECK(res.exit_code == kExitOk);
    for (const auto& row : res.oracle) {
        CHECK_FALSE(row.refused);
        CHECK(row.input_grad_error <= 1e-8);
        CHECK(row.weight_grad_error <= 1e-8);
        if (row.residual) CHECK(row.monomials == (std::size_t{1} << (row.depth - row.layer)));
    }
    const auto first = slurp(out / "oracle-test" / "oracle.csv");
    run_experiment(spec);
    CHECK(slurp(out / "oracle-test" / "oracle.csv") == first);

    auto bounds = ExperimentSpec::from_config(Command::BoundCheck, parse("instances = 10\n" + out_line));
    const auto br = run_experiment(bounds);
    CHECK(br.exit_code == kExitOk);
    for (const auto& row : br.bounds) CHECK(row.report.satisfied);
    CHECK(fs::exists(out / "bound-check" / "inst-000" / "plain.csv"));
    CHECK(fs::exists(out / "bound-check" / "bound_summary.csv"));
}

TEST_CASE("depth-cap requests are refused per instance") {
    const auto out = scratch("cap");
    const auto spec = ExperimentSpec::from_config(
        Command::OracleTest,
        parse("instances = 2\nresidual_depths = 13\ninstance_width = 2\nout_dir = " + out.string() + "\n"));
    const auto res = run_experiment(spec);
    std::size_t refused = 0;
    for (const auto& row : res.oracle) {
        if (row.refused) {
            ++refused;
            CHECK(row.layer == 0);
            CHECK(row.message.find("refused") == 0);
        }
    }
    CHECK(refused == 1);
    CHECK(res.exit_code == kExitOk);
}

TEST_CASE("svg output is deterministic and skips unusable points") {
    const std::vector<PlotSeries> s{{"a & b", {1, 2, 3, 4}, {1e-3, 0.0, NAN, 10.0}}, {"c", {1, 2}, {1, 2}}};
    const PlotSpec spec{"title <x>", "layer", "value", false, true, false};
    const auto a = render_svg(spec, s);
    CHECK(a == render_svg(spec, s));
    CHECK(a.find("a &amp; b") != std::string::npos);
    CHECK(a.find("title &lt;x&gt;") != std::string::npos);
    CHECK(a.find("nan") == std::string::npos);
    CHECK(a.rfind("<svg", 0) == 0);

    const PlotSpec scatter{"t", "x", "y", true, true, true};
    const auto b = render_svg(scatter, s);
    CHECK(b.find("<circle") != std::string::npos);
    CHECK(render_svg(scatter, {}).find("</svg>") != std::string::npos);
}

TEST_CASE("sha256 of a known file") {
    const auto p = fs::temp_directory_path() / "gradflow_sha.txt";
    {
        std::ofstream out(p, std::ios::binary);
        out << "abc";
    }
    CHECK(sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}
