#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "conceal/commands.hpp"
#include "conceal/config.hpp"
#include "conceal/error.hpp"

namespace {

std::string single_line(std::string text) {
    for (auto& ch : text)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concealment attacks against reconstruction-based anomaly detectors"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    for (auto name : conceal::cli::command_names()) {
        auto* sub = app.add_subcommand(std::string(name));
        sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "Override the config's top-level seed");
        sub->add_option("--out", out_dir, "Override the config's output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << single_line(e.what()) << '\n';
        return 2;
    }

    const auto* chosen = app.get_subcommands().front();
    try {
        std::optional<std::filesystem::path> out;
        if (out_dir) out = *out_dir;
        const auto cfg = conceal::cli::load_config(config_path, seed, out);
        conceal::cli::run_command(chosen->get_name(), cfg, std::cout);
        std::cout << "run " << cfg.run_dir().string() << '\n';
    } catch (const conceal::Error& e) {
        std::cerr << "error: " << conceal::to_string(e.kind()) << ": " << single_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << single_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}
