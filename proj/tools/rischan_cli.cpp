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


// Command-line runner: one subcommand per experiment kind.
// Exit codes: 0 success, 2 configuration error, 1 runtime error.

#include "rischan/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace
{
    namespace ex = rischan::experiment;

    struct Options
    {
        std::string config;
        std::string out;
        std::optional<std::uint64_t> seed;
        std::string format;
    };

    std::string read_file(const std::string &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw ex::ConfigError(path + ": cannot open configuration file");
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    int run(ex::Kind kind, const Options &opt)
    {
        ex::ExperimentConfig config;
        ex::Format format = ex::Format::csv;
        try
        {
            config = ex::parse_config(read_file(opt.config));
            if (config.kind != kind)
                throw ex::ConfigError("experiment: config is for \"" + std::string(ex::to_string(config.kind)) +
                                      "\" but the subcommand is \"" + std::string(ex::to_string(kind)) + "\"");
            if (opt.seed)
                config.seed = *opt.seed;
            const std::string fmt = opt.format.empty() ? config.output.format : opt.format;
            const auto f = ex::format_from_string(fmt);
            if (!f)
                throw ex::ConfigError("--format: must be csv or json");
            format = *f;
        }
        catch (const ex::ConfigError &e)
        {
            std::cerr << "config error: " << e.what() << "\n";
            return 2;
        }

        try
        {
            const ex::ResultTable table = ex::run_experiment(config);
            const std::string out = opt.out.empty() ? config.output.path.value_or("") : opt.out;
            if (out.empty() || out == "-")
                std::cout << (format == ex::Format::csv ? ex::to_csv(table) : ex::to_json(table));
            else
                ex::emit(table, format, out);
        }
        catch (const ex::ConfigError &e)
        {
            std::cerr << "config error: " << e.what() << "\n";
            return 2;
        }
        catch (const std::exception &e)
        {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
        return 0;
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"rischan: RIS channel modelling experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ex::version));

    Options opt;
    std::optional<ex::Kind> chosen;
    const std::pair<ex::Kind, const char *> commands[] = {
        {ex::Kind::pathloss, "Path loss of one scene under one or more models"},
        {ex::Kind::sweep_ellipse, "Path loss while the RIS moves along an ellipse around Tx and Rx"},
        {ex::Kind::phase_gain, "Received power for a list of RIS phase profiles"},
        {ex::Kind::acf, "Temporal ACF with and without RIS phase tracking"},
        {ex::Kind::hardening, "Channel hardening statistics versus element count"},
        {ex::Kind::estimate, "RMSEE of the mode-aided estimator versus SNR and mode count"},
        {ex::Kind::metrics, "Doppler spread, delay spread, rank and condition number"},
    };
    for (const auto &[kind, help] : commands)
    {
        CLI::App *sub = app.add_subcommand(std::string(ex::to_string(kind)), help);
        sub->add_option("--config", opt.config, "JSON configuration file")->required();
        sub->add_option("--out", opt.out, "Output file (default: config output.path, else stdout)");
        sub->add_option("--seed", opt.seed, "Override the configuration seed");
        sub->add_option("--format", opt.format, "csv or json (default: config output.format)");
        sub->callback([&chosen, kind = kind] { chosen = kind; });
    }

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return run(*chosen, opt);
}
