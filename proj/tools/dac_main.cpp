// dac: simulate fleets, train keys, evaluate K-S matrices, build and authenticate messages.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dac/errors.hpp"
#include "dac/experiment.hpp"
#include "dac/util.hpp"

namespace fs = std::filesystem;
using namespace dac;
using namespace dac::experiment;

namespace {

struct CommonOptions {
    std::string config;
    std::string preset;
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--config", config, "Experiment configuration (JSON)");
        app->add_option("--preset", preset, "Base preset")->check(CLI::IsMember(preset_names()));
        app->add_option("--out", out, "Output directory (default: the config's output_dir)");
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg = preset.empty() ? ExperimentConfig{} : experiment::preset(preset);
        if (!config.empty()) cfg = load_config(config, cfg);
        cfg.validate();
        return cfg;
    }

    fs::path out_dir(const ExperimentConfig& cfg) const { return out.empty() ? fs::path(cfg.output_dir) : fs::path(out); }
};

int report_error(const char* kind, const std::exception& e, int code) {
    std::cerr << "dac: " << kind << ": " << e.what() << "\n";
    return code;
}

// Maps library exceptions onto the tool's exit codes.
template <typename F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const InsufficientSamples& e) {
        return report_error("insufficient samples", e, kExitInsufficientSamples);
    } catch (const IncompatibleKey& e) {
        return report_error("key mismatch", e, kExitKeyMismatch);
    } catch (const CorruptKey& e) {
        return report_error("corrupt key", e, kExitInputError);
    } catch (const IntegrityError& e) {
        return report_error("integrity", e, kExitInputError);
    } catch (const IoError& e) {
        return report_error("i/o", e, kExitInputError);
    } catch (const std::invalid_argument& e) {
        return report_error("input", e, kExitInputError);
    } catch (const TrainingDiverged& e) {
        return report_error("training", e, kExitRuntimeError);
    } catch (const std::exception& e) {
        return report_error("runtime", e, kExitRuntimeError);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Device Authentication Codes: RF fingerprint keys and K-S verification"};
    app.require_subcommand(1);

    CommonOptions sim_opts, train_opts, eval_opts, auth_opts, send_opts, cfg_opts;

    auto* sim = app.add_subcommand("simulate", "Simulate the fleet and write traces plus a manifest");
    sim_opts.add(sim);

    std::string train_manifest;
    auto* tr = app.add_subcommand("train", "Train a key on the manifest's training split");
    train_opts.add(tr);
    tr->add_option("--manifest", train_manifest, "Manifest (default: <out>/manifest.json)");

    std::string eval_manifest, eval_key;
    auto* ev = app.add_subcommand("evaluate", "K-S matrices and intruder detection on the test split");
    eval_opts.add(ev);
    ev->add_option("--manifest", eval_manifest, "Manifest (default: <out>/manifest.json)");
    ev->add_option("--key", eval_key, "Key file (default: <out>/key.dacw)");

    std::string auth_key, auth_message, auth_mode;
    auto* au = app.add_subcommand("authenticate", "Verify a message against a key; exit 0 authorized, 2 intruder");
    auth_opts.add(au);
    au->add_option("--key", auth_key, "Key file")->required();
    au->add_option("--message", auth_message, "Message file")->required();
    au->add_option("--mode", auth_mode, "Override the policy mode")->check(CLI::IsMember({"exact", "statistical"}));

    std::string send_manifest, send_key, send_message;
    int send_device = 0;
    std::size_t send_snr = 0;
    bool send_confidential = false;
    std::optional<std::uint64_t> send_rekey;
    auto* se = app.add_subcommand("send", "Build a message from one simulated (device, SNR) cell");
    send_opts.add(se);
    se->add_option("--manifest", send_manifest, "Manifest (default: <out>/manifest.json)");
    se->add_option("--key", send_key, "Sender key file")->required();
    se->add_option("--device", send_device, "Device id")->required();
    se->add_option("--snr-index", send_snr, "Index into the SNR list");
    se->add_flag("--confidential", send_confidential, "Send latent codes instead of raw IQ");
    se->add_option("--rekey", send_rekey, "Replace the key with fresh weights from this seed (impersonator)");
    se->add_option("--message", send_message, "Output message file")->required();

    auto* cf = app.add_subcommand("config", "Print the resolved configuration as JSON");
    cfg_opts.add(cf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitInputError;
    }

    if (*sim) {
        return guarded([&] {
            const auto cfg = sim_opts.resolve();
            const auto s = cmd_simulate(cfg, sim_opts.out_dir(cfg));
            std::cout << "manifest " << s.manifest.string() << "\nwindows: train " << s.train << ", validation " << s.validation
                      << ", test " << s.test << "\n";
            return 0;
        });
    }
    if (*tr) {
        return guarded([&] {
            const auto cfg = train_opts.resolve();
            const fs::path out = train_opts.out_dir(cfg);
            const fs::path manifest = train_manifest.empty() ? out / kManifestName : fs::path(train_manifest);
            const auto r = cmd_train(cfg, manifest, out);
            std::cout << "key " << (out / kKeyName).string() << "\nvalidation loss " << r.report.initial_validation_loss << " -> "
                      << r.report.final_validation_loss() << " (best epoch " << r.report.best_epoch << ")\n";
            return 0;
        });
    }
    if (*ev) {
        return guarded([&] {
            const auto cfg = eval_opts.resolve();
            const fs::path out = eval_opts.out_dir(cfg);
            const fs::path manifest = eval_manifest.empty() ? out / kManifestName : fs::path(eval_manifest);
            const fs::path key = eval_key.empty() ? out / kKeyName : fs::path(eval_key);
            const auto m = cmd_evaluate(cfg, manifest, key, out);
            std::cout << matrix_text(m);
            return 0;
        });
    }
    if (*au) {
        return guarded([&] {
            auto cfg = auth_opts.resolve();
            if (!auth_mode.empty()) cfg.policy.mode = auth_mode == "exact" ? protocol::AuthMode::exact : protocol::AuthMode::statistical;
            const auto r = cmd_authenticate(auth_key, auth_message, cfg.policy);
            std::cout << r.json;
            return r.exit_code;
        });
    }
    if (*se) {
        return guarded([&] {
            const auto cfg = send_opts.resolve();
            const fs::path manifest = send_manifest.empty() ? send_opts.out_dir(cfg) / kManifestName : fs::path(send_manifest);
            const auto bytes = cmd_send(cfg, manifest, send_key, send_device, send_snr, send_confidential, send_rekey);
            write_file(send_message, bytes);
            std::cout << "message " << send_message << " (" << bytes.size() << " bytes)\n";
            return 0;
        });
    }
    if (*cf) {
        return guarded([&] {
            std::cout << to_json(cfg_opts.resolve());
            return 0;
        });
    }
    return kExitInputError;
}
