#pragma once

// Flat key=value experiment configuration and the JSON run report.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace stopwalk {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigKey {
    std::string name;
    std::string fallback;
    std::string doc;
};

/// Every key the runner understands, with its default.
inline const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> keys = {
        {"seed", "1", "master seed"},
        {"workers", "1", "worker threads; results do not depend on it"},
        {"out", "", "output directory (default $STOPWALK_OUT or ./stopwalk-out)"},
        {"calibration", "", "calibration file (default <out>/calibration.txt)"},
        {"trials", "10000", "record traces / gauge trials"},
        {"horizon", "10000", "record trace length"},
        {"quantile", "0.999", "gauge quantile"},
        {"paths", "100000", "paths per ensemble"},
        {"steps", "2000", "mu steps per path"},
        {"margin", "500", "mu steps without prefix change before a cylinder resolves"},
        {"mutau_steps", "200", "mu_tau steps per path"},
        {"mutau_margin", "50", "mu_tau steps without prefix change before a cylinder resolves"},
        {"depth", "3", "cylinder depth"},
        {"k_max", "2", "calibrated levels"},
        {"sequences", "256", "random index sequences per calibration level"},
        {"trials_per_sequence", "64", "calibration trials per random sequence"},
        {"homogeneous_trials", "2048", "calibration trials for the homogeneous sequence"},
        {"safety", "2", "calibration safety factor"},
        {"horizon_cap", "1000000", "base-step cap per stopped run"},
        {"walk_horizon", "100000", "base-step cap per stopped increment inside walks"},
        {"mixture_kmax", "1", "largest component index used by mu_tau"},
        {"truncation_runs", "10000", "runs per level for the truncation check"},
        {"group", "free", "walk: free | lamp"},
        {"measure", "mutau", "walk: mu | mutau"},
        {"walk_paths", "4", "walk: paths written out"},
        {"lamp_steps", "256", "lamp-stability: mu_tau steps"},
        {"lamp_paths", "10000", "lamp-stability: paths"},
        {"window", "0", "lamp-stability: half-width W"},
        {"stability_checkpoint", "0.5", "lamp-stability: checkpoint (fraction of steps) used for verdicts"},
        {"limit_paths", "100000", "limit functional: paths"},
        {"limit_steps", "64", "limit functional: mu_tau steps"},
        {"limit_margin", "16", "limit functional: censoring margin"},
        {"harmonic_paths", "20000", "harmonicity: paths per test point"},
        {"entropy_n", "1,2,4,8,16", "entropy: convolution powers"},
        {"n_list", "10,20,40", "switching-freq / coset-decay: walk lengths"},
        {"radius", "1", "F = ball of this radius"},
        {"subgroup", "cyclic-a", "coset-decay: cyclic-a | kernel | trivial | whole"},
        {"samples", "500", "switch-stop: stopped endpoints"},
        {"K", "1", "ladder levels"},
        {"lambda", "1", "ladder: lambda(n)"},
        {"switching_exponent", "2", "ladder: tau_k switches against Delta_k^(exponent * lambda)"},
        {"a0_radius", "1", "ladder: A_0 = ball of this radius"},
        {"s_samples", "400", "ladder: draws per S set"},
        {"validation_samples", "200", "ladder: fresh draws per S set"},
        {"budget", "2000000", "ladder: product-set / query budget"},
        {"chain_paths", "64", "forest: ladder walks"},
        {"chain_steps", "40", "forest: steps per ladder walk"},
        {"retention_paths", "50", "retention: paths"},
        {"retention_horizon", "16", "retention: mu_tau steps"},
        {"n", "1", "os-gap / retention: level n"},
        {"bootstrap", "400", "os-gap: bootstrap replicates"},
        {"min_count", "5", "os-gap: nu cells below this are pooled"},
        {"control", "0", "os-gap: 1 runs the Fixed(1) control"},
        {"alpha", "0.01", "threshold: chi-square level"},
        {"max_truncation", "0.001", "threshold: truncation fraction"},
        {"gauge_max_exceed", "0.002", "threshold: gauge exceedance"},
        {"stable_min", "0.95", "threshold: mu_tau lamp stability"},
        {"control_stable_max", "0.9", "threshold: plain-walk lamp stability"},
        {"limit_sigma", "6", "threshold: limit functional separation in stderr"},
        {"harmonic_sigma", "3", "threshold: mean-value test in stderr"},
        {"switching_min", "0.99", "threshold: switching frequency at the largest n"},
        {"record_sigma", "3", "threshold: non-simple record comparison in sigma"},
        {"diag_tail_max", "0.0001", "threshold: growth of sum p(i,i)^2 from 1e4 to 1e5"},
    };
    return keys;
}

class Config {
public:
    Config() {
        for (const auto& k : config_schema()) values_[k.name] = k.fallback;
    }

    static Config from_text(std::istream& in) {
        Config c;
        std::vector<CLI::ConfigItem> items;
        try {
            items = CLI::ConfigBase{}.from_config(in);
        } catch (const CLI::Error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        for (const auto& item : items) {
            if (item.name == "++" || item.name == "--") continue;
            if (!item.parents.empty()) throw ConfigError("config: sections are not supported ('" + item.name + "')");
            std::string v;
            for (std::size_t i = 0; i < item.inputs.size(); ++i) v += (i ? "," : "") + item.inputs[i];
            c.set(item.name, v);
        }
        return c;
    }

    static Config from_file(const std::filesystem::path& p) {
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot read config " + p.string());
        return from_text(in);
    }

    void set(const std::string& key, const std::string& value) {
        if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = value;
    }

    [[nodiscard]] const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    [[nodiscard]] std::uint64_t u64(const std::string& key) const {
        const auto& s = str(key);
        try {
            std::size_t pos = 0;
            auto v = std::stoull(s, &pos, 0);
            if (pos != s.size() || s.front() == '-') throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + s + "'");
        }
    }

    [[nodiscard]] double f64(const std::string& key) const {
        const auto& s = str(key);
        try {
            std::size_t pos = 0;
            auto v = std::stod(s, &pos);
            if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected a number, got '" + s + "'");
        }
    }

    [[nodiscard]] std::vector<std::uint64_t> list(const std::string& key) const {
        std::vector<std::uint64_t> out;
        std::stringstream ss(str(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                out.push_back(std::stoull(item));
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "': bad list item '" + item + "'");
            }
        }
        if (out.empty()) throw ConfigError("key '" + key + "': empty list");
        return out;
    }

    [[nodiscard]] std::filesystem::path out_dir() const {
        if (!str("out").empty()) return str("out");
        if (const char* env = std::getenv("STOPWALK_OUT"); env && *env) return env;
        return "stopwalk-out";
    }

    [[nodiscard]] std::filesystem::path calibration_path() const {
        if (!str("calibration").empty()) return str("calibration");
        return out_dir() / "calibration.txt";
    }

    [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

struct Verdict {
    std::string name;
    double value = 0;
    double threshold = 0;
    std::string op;  // "<", "<=", ">", ">="
    bool pass = false;
};

class Report {
public:
    Report(std::string subcommand, const Config& cfg)
        : subcommand_(std::move(subcommand)), config_(cfg), start_(std::chrono::steady_clock::now()) {}

    void metric(const std::string& name, double value) { metrics_[name] = {{"value", value}}; }
    void metric(const std::string& name, double value, double lo, double hi) {
        metrics_[name] = {{"value", value}, {"ci_lo", lo}, {"ci_hi", hi}};
    }
    void censoring(const std::string& name, double fraction) { censoring_[name] = fraction; }

    bool check(const std::string& name, double value, const std::string& op, double threshold) {
        bool pass = false;
        if (op == "<") pass = value < threshold;
        else if (op == "<=") pass = value <= threshold;
        else if (op == ">") pass = value > threshold;
        else if (op == ">=") pass = value >= threshold;
        else throw std::invalid_argument("Report::check: bad operator " + op);
        verdicts_.push_back({name, value, threshold, op, pass});
        return pass;
    }

    [[nodiscard]] bool pass() const {
        for (const auto& v : verdicts_)
            if (!v.pass) return false;
        return true;
    }
    [[nodiscard]] const std::vector<Verdict>& verdicts() const noexcept { return verdicts_; }
    [[nodiscard]] const std::string& subcommand() const noexcept { return subcommand_; }
    void artifact(const std::string& file) { artifacts_.push_back(file); }

    [[nodiscard]] nlohmann::json json() const {
        nlohmann::json j;
        j["schema"] = "stopwalk.report/1";
        j["subcommand"] = subcommand_;
        j["config"] = config_.values();
        j["metrics"] = metrics_;
        j["censoring"] = censoring_;
        auto& vs = j["verdicts"] = nlohmann::json::array();
        for (const auto& v : verdicts_)
            vs.push_back({{"name", v.name}, {"value", v.value}, {"op", v.op}, {"threshold", v.threshold}, {"pass", v.pass}});
        j["artifacts"] = artifacts_;
        j["pass"] = pass();
        j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return j;
    }

private:
    std::string subcommand_;
    Config config_;
    std::chrono::steady_clock::time_point start_;
    nlohmann::json metrics_ = nlohmann::json::object();
    nlohmann::json censoring_ = nlohmann::json::object();
    std::vector<Verdict> verdicts_;
    std::vector<std::string> artifacts_;
};

/// CSV with a fixed header; numbers are written with a fixed format so the
/// bytes depend only on the values.
class Csv {
public:
    explicit Csv(std::vector<std::string> header) : cols_(header.size()) { row_strings(header); }

    template <class... Ts>
    void row(const Ts&... xs) {
        static_assert(sizeof...(Ts) > 0);
        std::vector<std::string> cells{cell(xs)...};
        row_strings(cells);
    }

    [[nodiscard]] const std::string& text() const noexcept { return text_; }

    void write(const std::filesystem::path& p) const {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + p.string());
        out << text_;
    }

    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(bool b) { return b ? "1" : "0"; }
    static std::string cell(double x) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", x);
        return buf;
    }
    template <class I, std::enable_if_t<std::is_integral_v<I> && !std::is_same_v<I, bool>, int> = 0>
    static std::string cell(I x) {
        return std::to_string(x);
    }

private:
    void row_strings(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw std::logic_error("Csv: row width differs from header");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }
    std::size_t cols_;
    std::string text_;
};

}  // namespace stopwalk
