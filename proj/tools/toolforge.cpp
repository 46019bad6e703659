#include <CLI11.hpp>

#include <iostream>

#include "toolforge/error.hpp"
#include "toolforge/pipeline.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

void print_result(const toolforge::StageResult& r) {
    std::cout << r.stage << ": " << (r.skipped ? "up to date " : "") << r.counts.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tool-use training data synthesis pipeline"};
    app.require_subcommand(1, 1);

    std::string config_path;
    bool resume = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> limit;
    std::string work_dir;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Pipeline config (JSON)")->required();
        cmd->add_flag("--resume", resume, "Skip finished stages and items");
        cmd->add_option("--seed", seed, "Override the config seed");
        cmd->add_option("--limit", limit, "Process at most N items per stage");
        cmd->add_option("--work-dir", work_dir, "Override the artifact directory");
    };
    for (auto stage : toolforge::kStages) {
        add_common(app.add_subcommand(std::string(stage), "Run the " + std::string(stage) + " stage"));
    }
    add_common(app.add_subcommand("run-all", "Run every stage in order"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }
    const std::string stage = app.get_subcommands().front()->get_name();

    std::optional<toolforge::Pipeline> pipeline;
    try {
        auto cfg = toolforge::load_pipeline_config(config_path);
        if (seed) cfg.set_seed(*seed);
        if (limit) cfg.limit = *limit;
        if (!work_dir.empty()) cfg.work_dir = work_dir;
        pipeline.emplace(std::move(cfg));
    } catch (const toolforge::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }

    try {
        if (stage == "run-all") {
            for (const auto& r : pipeline->run_all(resume)) print_result(r);
        } else {
            print_result(pipeline->run_stage(stage, resume));
        }
    } catch (const toolforge::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << stage << " failed: " << e.what() << '\n';
        return kStageFailure;
    }
    return 0;
}
