// dsl: command-line driver for the stochastic-localization lab.

#include "commands.hpp"

#include "dsl/error.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

namespace {

bool is_config_error(dsl::Errc code) {
    switch (code) {
    case dsl::Errc::invalid_config:
    case dsl::Errc::invalid_budget:
    case dsl::Errc::invalid_path:
    case dsl::Errc::invalid_quadrature:
        return true;
    default:
        return false;
    }
}

} // namespace

int main(int argc, char** argv) {
    using namespace dsl::cli;

    CLI::App app{"Discrete stochastic localization lab (version " DSL_VERSION ")"};
    app.require_subcommand(1);
    app.set_version_flag("--version", DSL_VERSION);

    struct Slot {
        const Command* command;
        CLI::App* sub;
        std::map<std::string, std::string> flags;
    };
    std::vector<Slot> slots;
    slots.reserve(commands().size());

    std::uint64_t seed = 0;
    std::string out, config;
    unsigned threads = 1;
    bool force = false;

    for (const auto& cmd : commands()) {
        auto* sub = app.add_subcommand(cmd.name, cmd.description);
        sub->add_option("--seed", seed, "master seed")->required();
        sub->add_option("--out", out, "output directory")->required();
        sub->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--threads", threads, "worker threads (results do not depend on it)")
            ->check(CLI::PositiveNumber);
        sub->add_flag("--force", force, "replace an existing output directory");
        slots.push_back({&cmd, sub, {}});
    }
    for (auto& slot : slots)
        for (const auto& key : slot.command->schema())
            slot.sub->add_option("--" + key.name, slot.flags[key.name], key.help + " [" + key.value + "]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const Slot* chosen = nullptr;
    for (const auto& slot : slots)
        if (slot.sub->parsed()) chosen = &slot;

    try {
        Params params(chosen->command->schema());
        std::string config_text;
        if (!config.empty()) {
            std::ifstream in(config, std::ios::binary);
            config_text.assign(std::istreambuf_iterator<char>(in), {});
            std::istringstream lines(config_text);
            params.merge_file(lines, config);
        }
        for (const auto& key : chosen->command->schema())
            if (chosen->sub->count("--" + key.name) > 0) params.set(key.name, chosen->flags.at(key.name));
        if (chosen->command->apply_preset) chosen->command->apply_preset(params);

        OutputDir dir(out, force);
        dir.write("config.txt", [&](std::ostream& o) {
            o << "subcommand=" << chosen->command->name << "\nseed=" << seed << '\n';
            params.write(o);
        });
        if (!config.empty()) dir.write("config.input.txt", [&](std::ostream& o) { o << config_text; });
        dir.write("VERSION", [](std::ostream& o) { o << DSL_VERSION << '\n'; });

        Context ctx{seed, threads, &dir};
        chosen->command->run(params, ctx);
        dir.commit();
    } catch (const UsageError& e) {
        std::cerr << "dsl " << chosen->command->name << ": " << e.what() << '\n';
        return 1;
    } catch (const dsl::Error& e) {
        std::cerr << "dsl " << chosen->command->name << ": " << e.what() << '\n';
        return is_config_error(e.code()) ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "dsl " << chosen->command->name << ": " << e.what() << '\n';
        return 2;
    }
    return 0;
}
