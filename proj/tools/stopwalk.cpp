// Command-line runner for the stopwalk experiments.

#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "stopwalk/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"stopwalk: randomized stopping times on F2 and the lamplighter group"};
    app.require_subcommand(1);
    std::string config_file;
    app.add_option("--config", config_file, "flat key=value config file");
    std::map<std::string, std::string> flags;
    std::map<std::string, CLI::Option*> opts;
    for (const auto& key : stopwalk::config_schema()) {
        std::string help = key.doc;
        if (!key.fallback.empty()) help += " [default " + key.fallback + "]";
        opts[key.name] = app.add_option("--" + key.name, flags[key.name], help);
    }
    app.fallthrough();
    for (const auto& [name, fn] : stopwalk::experiments()) app.add_subcommand(name, "run the " + name + " experiment");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        stopwalk::Config cfg = config_file.empty() ? stopwalk::Config{} : stopwalk::Config::from_file(config_file);
        for (const auto& [name, opt] : opts)
            if (opt->count() > 0) cfg.set(name, flags[name]);
        const std::string cmd = app.get_subcommands().front()->get_name();
        nlohmann::json report;
        int code = stopwalk::run_experiment(cmd, cfg, &report);
        for (const auto& v : report["verdicts"])
            std::printf("%-40s %-4s %s %s %s\n", v["name"].get<std::string>().c_str(),
                        v["pass"].get<bool>() ? "PASS" : "FAIL", v["value"].dump().c_str(),
                        v["op"].get<std::string>().c_str(), v["threshold"].dump().c_str());
        std::printf("%s: %s (%s)\n", cmd.c_str(), code == 0 ? "pass" : "statistical fail",
                    (cfg.out_dir() / (cmd + ".report.json")).string().c_str());
        return code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "stopwalk: error: %s\n", e.what());
        return 1;
    }
}
