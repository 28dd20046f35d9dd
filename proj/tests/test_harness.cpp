#include "usf/capture.hpp"
#include "usf/errors.hpp"
#include "usf/experiment.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace usf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
    {
        std::random_device rd;
        path = fs::temp_directory_path() / ("usf_test_" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void write(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig synthetic_config()
{
    ExperimentConfig cfg;
    cfg.synthetic = SyntheticSource{};
    cfg.synthetic->bandwidth = 4;
    cfg.synthetic->amplitude = 4.0;
    cfg.synthetic->seed = 5;
    cfg.K = 120;
    cfg.lambda = 1.0;
    cfg.lambda_grid = LambdaGrid{0.8, 1.2, 0.05};
    return cfg;
}

} // namespace

TEST_SUITE("harness")
{
    TEST_CASE("load_capture with both channels")
    {
        TempDir d;
        write(d.path / "c.csv", "# tau = 0.004\n# probe: CH1\ntime,truth,modulo\n"
                                "0,1.5,-0.5\n0.001,2.5,0.5\n0.002,0.5,0.5\n0.003,-1.5,0.5\n");
        const auto c = load_capture(d.path / "c.csv");
        CHECK(c.size() == 4);
        REQUIRE(c.truth);
        CHECK((*c.truth)[1] == 2.5);
        CHECK(c.step == doctest::Approx(0.001));
        CHECK(c.tau == doctest::Approx(0.004));
        CHECK(c.metadata.at("probe") == "CH1");
        CHECK(c.modulo_samples().grid.count == 4);
    }

    TEST_CASE("load_capture with the modulo channel only")
    {
        TempDir d;
        write(d.path / "c.csv", "time,modulo\n0,0.1\n0.5,0.2\n1.0,0.3\n");
        const auto c = load_capture(d.path / "c.csv");
        CHECK_FALSE(c.truth);
        CHECK_FALSE(c.truth_samples());
        CHECK(c.tau == doctest::Approx(1.5));
    }

    TEST_CASE("load_capture subtracts the DC offset")
    {
        TempDir d;
        write(d.path / "c.csv", "# dc_offset = 0.25\ntime,modulo\n0,1.25\n1,0.25\n");
        const auto c = load_capture(d.path / "c.csv");
        CHECK(c.modulo[0] == doctest::Approx(1.0));
        CHECK(c.modulo[1] == doctest::Approx(0.0));
        CHECK(c.dc_offset == 0.25);
    }

    TEST_CASE("load_capture rejects bad input")
    {
        TempDir d;
        SUBCASE("jittered timestamps")
        {
            std::ostringstream os;
            os << "time,modulo\n";
            for (int k = 0; k < 20; ++k)
                os << (k + (k == 7 ? 1e-3 : 0.0)) << ",0\n";
            write(d.path / "c.csv", os.str());
            CHECK_THROWS_AS(load_capture(d.path / "c.csv"), ParseError);
        }
        SUBCASE("parse errors carry the line number")
        {
            write(d.path / "c.csv", "# x = 1\ntime,modulo\n0,1\n1,oops\n");
            try {
                load_capture(d.path / "c.csv");
                FAIL("expected a parse error");
            } catch (const ParseError& e) {
                CHECK(e.line() == 4);
            }
        }
        SUBCASE("missing columns")
        {
            write(d.path / "c.csv", "time,truth\n0,1\n1,2\n");
            CHECK_THROWS_AS(load_capture(d.path / "c.csv"), ParseError);
            write(d.path / "d.csv", "time,modulo,extra\n0,1,2\n");
            CHECK_THROWS_AS(load_capture(d.path / "d.csv"), ParseError);
            write(d.path / "e.csv", "time,modulo\n0,1,2\n1,2\n");
            CHECK_THROWS_AS(load_capture(d.path / "e.csv"), ParseError);
        }
        SUBCASE("missing file")
        {
            CHECK_THROWS_AS(load_capture(d.path / "absent.csv"), IoError);
        }
    }

    TEST_CASE("write_capture round-trips")
    {
        TempDir d;
        auto cfg = synthetic_config();
        const auto cap = simulate_capture(cfg);
        write_capture(d.path / "s.csv", cap);
        const auto back = load_capture(d.path / "s.csv");
        CHECK(back.modulo == cap.modulo);
        CHECK(*back.truth == *cap.truth);
        CHECK(back.step == cap.step);
        CHECK(back.metadata.at("P") == "4");
    }

    TEST_CASE("config key/value round trip")
    {
        auto cfg = synthetic_config();
        cfg.M = 7;
        cfg.estimator = Estimator::pencil;
        cfg.pencil = PencilParam::fixed(9);
        cfg.bits = 8;
        cfg.beta_g = 6.0;
        cfg.synthetic->nonideality.threshold_jitter = 0.2;
        const auto kv = cfg.to_kv();
        const auto back = ExperimentConfig::from_kv(kv);
        CHECK(back.to_kv() == kv);
        CHECK(parse_kv(format_kv(kv)) == kv);

        CHECK_THROWS_AS(ExperimentConfig::from_kv({{"bogus", "1"}}), ArgumentError);
        CHECK_THROWS_AS(ExperimentConfig::from_kv({{"K", "x"}}), ArgumentError);
        CHECK_THROWS_AS(ExperimentConfig::from_kv({{"K", "50"}, {"lambda", "-1"}}), ArgumentError);
        CHECK_THROWS_AS(ExperimentConfig::from_kv({{"input", "a.csv"}, {"tau", "1"}}),
                        ArgumentError);
        CHECK_THROWS_AS(ExperimentConfig::from_kv({{"K", "50"}, {"lambda_grid", "1:2"}}),
                        ArgumentError);
        CHECK(format_double(0.1) == "0.1");
    }

    TEST_CASE("estimator defaults")
    {
        auto cfg = synthetic_config();
        CHECK(cfg.effective_estimator() == Estimator::prony);
        cfg.bits = 8;
        CHECK(cfg.effective_estimator() == Estimator::pencil);
        cfg.estimator = Estimator::prony;
        CHECK(cfg.effective_estimator() == Estimator::prony);
    }

    TEST_CASE("run_experiment on a synthetic source")
    {
        TempDir d;
        auto cfg = synthetic_config();
        cfg.output_dir = d.path / "a";
        const auto m = run_experiment(cfg);
        CHECK(std::stod(m.at("MSE_FD")) <= 1e-10);
        CHECK(m.at("M_source") == "exact");
        for (const char* key : {"T", "T_FD", "T_US", "K", "tau", "P", "DR_gamma", "DR_y", "M",
                                "MSE_US", "MSE_USopt", "lambda_opt", "DR_ratio"})
            CHECK(m.count(key) == 1);
        CHECK(fs::exists(cfg.output_dir / "metrics.txt"));
        CHECK(fs::exists(cfg.output_dir / "reconstruction.csv"));
        CHECK(fs::exists(cfg.output_dir / "spectrum.csv"));

        SUBCASE("metrics echo the config and rerun identically")
        {
            const auto metrics = read_kv_file(cfg.output_dir / "metrics.txt");
            KeyValues echo;
            for (const auto& [k, v] : metrics)
                if (k.rfind("config.", 0) == 0)
                    echo[k.substr(7)] = v;
            auto again = ExperimentConfig::from_kv(echo);
            again.output_dir = d.path / "b";
            run_experiment(again);
            for (const char* f : {"metrics.txt", "reconstruction.csv", "spectrum.csv"})
                CHECK(slurp(cfg.output_dir / f) == slurp(again.output_dir / f));
        }
    }

    TEST_CASE("run_experiment on a capture without ground truth")
    {
        TempDir d;
        auto cfg = synthetic_config();
        auto cap = simulate_capture(cfg);
        cap.truth.reset();
        write_capture(d.path / "c.csv", cap);

        ExperimentConfig rc;
        rc.input = d.path / "c.csv";
        rc.lambda = 1.0;
        rc.M = std::stoul(cap.metadata.at("M"));
        rc.output_dir = d.path / "out";
        const auto m = run_experiment(rc);
        CHECK(m.count("MSE_FD") == 0);
        CHECK(m.count("MSE_US") == 0);
        CHECK(m.count("DR_ratio") == 1);
        CHECK(m.at("P_base") == "4");
        CHECK(m.at("P") == "5");
        CHECK(m.at("estimator") == "pencil");
    }

    TEST_CASE("fold count from the truth channel of a faulty capture")
    {
        TempDir d;
        auto cfg = synthetic_config();
        cfg.K = 200;
        cfg.synthetic->nonideality.threshold_jitter = 0.2;
        cfg.synthetic->nonideality.delay_max_samples = 2;
        const auto cap = simulate_capture(cfg);
        write_capture(d.path / "c.csv", cap);

        ExperimentConfig rc;
        rc.input = d.path / "c.csv";
        rc.lambda = 1.0;
        rc.p_inflation = 0.0;
        rc.estimator = Estimator::prony;
        rc.method = MethodChoice::fp;
        const auto m = run_experiment(rc);
        CHECK(m.at("M_source") == "truth");
        CHECK(m.at("M") == cap.metadata.at("M"));
        CHECK(std::stod(m.at("MSE_FD")) <= 1e-10);
    }

    TEST_CASE("run_experiment failure leaves no outputs")
    {
        TempDir d;
        auto cfg = synthetic_config();
        cfg.output_dir = d.path / "x";
        run_experiment(cfg);
        REQUIRE(fs::exists(cfg.output_dir / "metrics.txt"));
        cfg.K = 12;
        CHECK_THROWS_AS(run_experiment(cfg), UndersampledError);
        CHECK_FALSE(fs::exists(cfg.output_dir / "metrics.txt"));
        CHECK_FALSE(fs::exists(cfg.output_dir / "reconstruction.csv"));
        CHECK_FALSE(fs::exists(cfg.output_dir / "spectrum.csv"));
    }

    TEST_CASE("sweep")
    {
        TempDir d;
        auto cfg = synthetic_config();
        cfg.method = MethodChoice::fp;
        const auto rows = sweep(cfg, "K", {120, 16, 60}, d.path / "sw");
        REQUIRE(rows.size() == 3);
        CHECK(rows[0].value == 16);
        CHECK_FALSE(rows[0].ok);
        CHECK_FALSE(rows[0].error.empty());
        CHECK(rows[1].ok);
        CHECK(rows[2].ok);
        CHECK(fs::exists(d.path / "sw" / "K=60" / "metrics.txt"));
        const auto table = slurp(d.path / "sw" / "sweep.csv");
        CHECK(table.find("K,status") == 0);
        CHECK(table.find("\n16,error") != std::string::npos);

        const auto empty = sweep(cfg, "bits", {}, d.path / "empty");
        CHECK(empty.empty());
        const auto t = slurp(d.path / "empty" / "sweep.csv");
        CHECK(std::count(t.begin(), t.end(), '\n') == 1);

        CHECK_THROWS_AS(sweep(cfg, "method", {1}), ArgumentError);
        CHECK_THROWS_AS(sweep(cfg, "K", {10.5}), ArgumentError);
    }

    TEST_CASE("simulate_trial")
    {
        SyntheticSource src;
        src.bandwidth = 3;
        src.amplitude = 5.0;
        const auto t = simulate_trial(src, 100, 1.0);
        for (std::size_t k = 0; k < 100; ++k)
            CHECK(t.folded[k] + t.residue[k] == doctest::Approx(t.gamma[k]));
        CHECK(t.folds == count_spikes(t.residue.values));
        src.nonideality.threshold_jitter = 0.2;
        const auto n = simulate_trial(src, 100, 1.0);
        CHECK(n.gamma.values == t.gamma.values);
        CHECK(n.folded.values != t.folded.values);
    }
}
