#include "qns/harness.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"quantum noise spectroscopy: simulate, reconstruct, predict, validate"};
    app.require_subcommand(1);
    std::string config_path, out, shots;
    long long seed = -1;
    int threads = 0;
    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "experiment configuration (JSON)");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "seed for shot noise and trajectories")->check(CLI::NonNegativeNumber);
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--shots", shots, "shots per expectation, or 'exact'");
    };
    auto* sim = app.add_subcommand("simulate", "dynamics over a sequence or the measurement plan");
    auto* rec = app.add_subcommand("reconstruct", "spectra, temperature and spectral density from the plan");
    auto* pre = app.add_subcommand("predict", "fidelity and phase under the spectra sets S, S_r, S_c");
    auto* val = app.add_subcommand("validate", "oracle suite; nonzero exit on any failure");
    common(sim, true);
    common(rec, true);
    common(pre, true);
    common(val, false);
    CLI11_PARSE(app, argc, argv);

    try {
        qns::ExperimentConfig c = config_path.empty() ? qns::parse_config("{}") : qns::load_config(config_path);
        if (!out.empty()) c.out = out;
        if (seed >= 0) c.seed = static_cast<uint64_t>(seed);
        if (threads > 0) c.threads = threads;
        if (!shots.empty()) {
            if (shots == "exact") {
                c.shots = 0;
            } else {
                size_t used = 0;
                long n = -1;
                try {
                    n = std::stol(shots, &used);
                } catch (const std::exception&) {
                }
                if (n < 1 || used != shots.size()) throw qns::ConfigError("--shots: expected a positive integer or 'exact'");
                c.shots = n;
            }
        }
        if (*sim) return qns::cmd_simulate(c, std::cout);
        if (*rec) return qns::cmd_reconstruct(c, std::cout);
        if (*pre) return qns::cmd_predict(c, std::cout);
        return qns::cmd_validate(c, std::cout);
    } catch (const qns::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
