// SPDX-License-Identifier: Apache-2.0
//
// rischan - RIS channel modelling toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------


#include "rischan/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace rischan::experiment;
namespace fs = std::filesystem;

namespace
{
    std::string slurp(const fs::path &p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    fs::path config_path(const std::string &name) { return fs::path(RISCHAN_SOURCE_DIR) / "configs" / name; }

    ExperimentConfig load(const std::string &name) { return parse_config(slurp(config_path(name))); }

    std::string error_of(std::string_view text)
    {
        try
        {
            parse_config(text);
        }
        catch (const ConfigError &e)
        {
            return e.what();
        }
        return {};
    }

    int exit_code(int status)
    {
#ifdef WEXITSTATUS
        return WEXITSTATUS(status);
#else
        return status;
#endif
    }

    int run_cli(const std::string &args)
    {
        const std::string cmd = std::string("\"") + RISCHAN_CLI + "\" " + args + " >/dev/null 2>&1";
        return exit_code(std::system(cmd.c_str()));
    }

    constexpr const char *minimal = R"({"experiment": "pathloss", "scene": {"frequency_hz": 1e10},
                                        "model": {"models": ["FREE_SPACE"], "distance_m": 100}})";
}

TEST_SUITE("experiment")
{
    TEST_CASE("a minimal free-space config is valid and evaluates")
    {
        const ExperimentConfig c = parse_config(minimal);
        CHECK(c.kind == Kind::pathloss);
        CHECK(c.seed == 1);
        const ResultTable t = run_experiment(c);
        REQUIRE(t.rows.size() == 1);
        const double expected = 20.0 * std::log10(4.0 * M_PI * 100.0 * 1e10 / 299792458.0);
        CHECK(t.number(0, "path_loss_db") == doctest::Approx(expected));
        CHECK(t.number(0, "received_power_dbm") == doctest::Approx(-expected));
    }

    TEST_CASE("element-sum models without a panel name the missing block")
    {
        const std::string e = error_of(R"({"experiment": "pathloss", "scene": {"frequency_hz": 1e10,
            "tx": {"position_m": [-5, 0, 5]}, "rx": {"position_m": [5, 0, 5]}}, "model": {"models": ["TANG_GENERAL"]}})");
        CHECK(e.find("panel") != std::string::npos);
    }

    TEST_CASE("duplicate and unknown keys are rejected with a path")
    {
        const std::string dup = error_of(R"({"experiment": "pathloss", "seed": 1, "seed": 2,
            "scene": {"frequency_hz": 1e10}, "model": {"models": ["FREE_SPACE"], "distance_m": 1}})");
        CHECK(dup.find("seed") != std::string::npos);

        const std::string unknown = error_of(R"({"experiment": "pathloss", "scene": {"frequency_hz": 1e10, "freq": 3},
            "model": {"models": ["FREE_SPACE"], "distance_m": 1}})");
        CHECK(unknown.find("scene.freq") != std::string::npos);

        const std::string type = error_of(R"({"experiment": "pathloss", "scene": {"frequency_hz": "ten"},
            "model": {"models": ["FREE_SPACE"], "distance_m": 1}})");
        CHECK(type.find("scene.frequency_hz") != std::string::npos);

        CHECK_FALSE(error_of(R"({"experiment": "nope"})").empty());
        CHECK_FALSE(error_of("{not json").empty());
        CHECK_FALSE(error_of(R"({"experiment": "pathloss", "scene": {"frequency_hz": 1e10},
            "model": {"models": ["WARP_DRIVE"], "distance_m": 1}})").empty());
        CHECK_FALSE(error_of(R"({"experiment": "hardening", "scene": {"frequency_hz": 1e10}})").empty());
    }

    TEST_CASE("every shipped config round-trips through its canonical form")
    {
        int seen = 0;
        for (const auto &entry : fs::directory_iterator(fs::path(RISCHAN_SOURCE_DIR) / "configs"))
        {
            if (entry.path().extension() != ".json")
                continue;
            ++seen;
            CAPTURE(entry.path().string());
            const ExperimentConfig a = parse_config(slurp(entry.path()));
            const ExperimentConfig b = parse_config(serialize_config(a));
            CHECK(a == b);
            CHECK(serialize_config(a) == serialize_config(b));
            CHECK(config_hash(a) == config_hash(b));
            CHECK(config_hash(a).size() == 16);
        }
        CHECK(seen >= 7);
    }

    TEST_CASE("the config hash tracks content")
    {
        ExperimentConfig a = parse_config(minimal);
        ExperimentConfig b = a;
        b.seed = 2;
        CHECK(config_hash(a) != config_hash(b));
    }

    TEST_CASE("an empty table still carries its header and provenance")
    {
        ResultTable t;
        t.columns = {{"x", "m"}, {"label", "-"}};
        t.provenance = {"pathloss", "0123456789abcdef", 7, std::string(version)};
        const std::string csv = to_csv(t);
        CHECK(csv == "x[m],label[-]\n# experiment=pathloss\n# config_hash=0123456789abcdef\n# seed=7\n# version=1.0.0\n");
        const ResultTable back = table_from_json(to_json(t));
        CHECK(back.columns == t.columns);
        CHECK(back.rows.empty());
        CHECK(back.provenance == t.provenance);
    }

    TEST_CASE("CSV quoting and special values")
    {
        ResultTable t;
        t.columns = {{"label", "-"}, {"v", "dB"}};
        t.rows = {{std::string("a,b"), 1.5},
                  {std::string("say \"hi\""), std::numeric_limits<double>::quiet_NaN()},
                  {std::string("line\nbreak"), std::numeric_limits<double>::infinity()},
                  {std::string("plain"), -std::numeric_limits<double>::infinity()}};
        const std::string csv = to_csv(t);
        CHECK(csv.find("\"a,b\",1.5\n") != std::string::npos);
        CHECK(csv.find("\"say \"\"hi\"\"\",NaN\n") != std::string::npos);
        CHECK(csv.find("\"line\nbreak\",inf\n") != std::string::npos);
        CHECK(csv.find("plain,-inf\n") != std::string::npos);
        CHECK(csv.find('\r') == std::string::npos);

        const ResultTable back = table_from_json(to_json(t));
        REQUIRE(back.rows.size() == 4);
        CHECK(std::isnan(std::get<double>(back.rows[1][1])));
        CHECK(std::get<double>(back.rows[2][1]) == std::numeric_limits<double>::infinity());
        CHECK(std::get<double>(back.rows[3][1]) == -std::numeric_limits<double>::infinity());
        CHECK(std::get<std::string>(back.rows[1][0]) == "say \"hi\"");

        t.rows.push_back({1.0, 2.0});
        CHECK_THROWS_AS(t.validate(), std::logic_error);
    }

    TEST_CASE("runs are deterministic and carry unit-tagged columns")
    {
        for (const char *name : {"pathloss_models.json", "phase_gain.json", "hardening.json", "metrics.json"})
        {
            CAPTURE(name);
            const ExperimentConfig c = load(name);
            const ResultTable a = run_experiment(c);
            const ResultTable b = run_experiment(c);
            CHECK(to_csv(a) == to_csv(b));
            CHECK(a.provenance.config_hash == config_hash(c));
            CHECK(a.provenance.seed == c.seed);
            CHECK(a.provenance.version == version);
            for (const Column &col : a.columns)
                CHECK_FALSE(col.unit.empty());

            const ResultTable j = table_from_json(to_json(a));
            CHECK(to_csv(j) == to_csv(a));
        }
    }

    TEST_CASE("the seed changes random profiles")
    {
        ExperimentConfig c = load("phase_gain.json");
        const ResultTable a = run_experiment(c);
        c.seed = 99;
        const ResultTable b = run_experiment(c);
        const std::size_t last = a.rows.size() - 1;
        REQUIRE(std::get<std::string>(a.rows[last][0]) == "RANDOM");
        CHECK(a.number(last, "received_power_dbm") != b.number(last, "received_power_dbm"));
        CHECK(a.number(0, "received_power_dbm") == b.number(0, "received_power_dbm"));
    }

    TEST_CASE("ellipse sweep: 61 rows, monotone, about 4 dB over the sweep")
    {
        const ResultTable t = run_experiment(load("sweep_ellipse.json"));
        REQUIRE(t.rows.size() == 61);
        CHECK(t.number(0, "d1_m") == doctest::Approx(140.0));
        CHECK(t.number(60, "d1_m") == doctest::Approx(200.0));
        for (std::size_t i = 0; i < t.rows.size(); ++i)
            CHECK(t.number(i, "d1_m") + t.number(i, "d2_m") == doctest::Approx(400.0));
        for (std::size_t i = 1; i < t.rows.size(); ++i)
            CHECK(t.number(i, "path_loss_db_TANG_NEAR_BF") < t.number(i - 1, "path_loss_db_TANG_NEAR_BF"));
        const double drop = t.number(0, "path_loss_db_TANG_NEAR_BF") - t.number(60, "path_loss_db_TANG_NEAR_BF");
        CHECK(drop == doctest::Approx(4.0).epsilon(0.25));
    }

    TEST_CASE("phase gain: designed profiles beat the uniform one by 15 dB")
    {
        const ResultTable t = run_experiment(load("phase_gain.json"));
        REQUIRE(std::get<std::string>(t.rows[0][0]) == "UNIFORM");
        const double uniform = t.number(0, "received_power_dbm");
        for (std::size_t i = 1; i < t.rows.size(); ++i)
        {
            const std::string &label = std::get<std::string>(t.rows[i][0]);
            if (label == "FAR_FIELD_BEAM" || label == "NEAR_FIELD_FOCUS")
                CHECK(t.number(i, "received_power_dbm") - uniform >= 15.0);
        }
    }

    TEST_CASE("estimate: table layout on a short study")
    {
        const ResultTable t = run_experiment(load("estimate_quick.json"));
        CHECK(t.rows.size() == 4);
        for (std::size_t i = 0; i < t.rows.size(); ++i)
        {
            CHECK(t.number(i, "rmsee") >= 0.0);
            CHECK(t.number(i, "ris_detection_rate") <= 1.0);
        }
        CHECK(t.columns[t.column("rmsee_delay_s")].unit == "s");
    }

    TEST_CASE("emit writes the file atomically and in the requested format")
    {
        const ResultTable t = run_experiment(parse_config(minimal));
        const fs::path dir = fs::temp_directory_path() / "rischan_emit_test";
        fs::create_directories(dir);
        emit(t, Format::csv, (dir / "out.csv").string());
        emit(t, Format::json, (dir / "out.json").string());
        CHECK(slurp(dir / "out.csv") == to_csv(t));
        CHECK(slurp(dir / "out.json") == to_json(t));
        int files = 0;
        for ([[maybe_unused]] const auto &e : fs::directory_iterator(dir))
            ++files;
        CHECK(files == 2);
        fs::remove_all(dir);
        CHECK(format_from_string("json") == Format::json);
        CHECK_FALSE(format_from_string("xml").has_value());
    }

    TEST_CASE("command line exit codes")
    {
        const fs::path dir = fs::temp_directory_path() / "rischan_cli_test";
        fs::create_directories(dir);
        const std::string out = (dir / "fs.csv").string();
        CHECK(run_cli("pathloss --config \"" + config_path("pathloss_free_space.json").string() + "\" --out \"" + out + "\"") == 0);
        CHECK(slurp(out) == to_csv(run_experiment(load("pathloss_free_space.json"))));

        // configuration problems exit with 2
        CHECK(run_cli("hardening --config \"" + config_path("pathloss_free_space.json").string() + "\"") == 2);
        {
            std::ofstream bad(dir / "bad.json");
            bad << R"({"experiment": "pathloss", "bogus": 1})";
        }
        CHECK(run_cli("pathloss --config \"" + (dir / "bad.json").string() + "\"") == 2);
        CHECK(run_cli("pathloss") == 2);

        // a config that parses but cannot run exits with 1
        {
            std::ofstream behind(dir / "behind.json");
            behind << R"({"experiment": "pathloss", "scene": {"frequency_hz": 1e10,
                "tx": {"position_m": [0, 0, -5]}, "rx": {"position_m": [1, 0, 5]}},
                "panel": {"m": 4, "n": 4, "dx_m": 0.01, "dy_m": 0.01}, "model": {"models": ["TANG_GENERAL"]}})";
        }
        CHECK(run_cli("pathloss --config \"" + (dir / "behind.json").string() + "\"") == 1);
        CHECK(run_cli("pathloss --config \"" + (dir / "missing.json").string() + "\"") != 0);
        fs::remove_all(dir);
    }
}
