#pragma once

// End-to-end driver: experiment configuration, dataset files on disk, training, evaluation
// reports and message authentication. Every subcommand of the `dac` tool maps onto one function.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dac/autoencoder.hpp"
#include "dac/dac_protocol.hpp"
#include "dac/signal_sim.hpp"

namespace dac::experiment {

struct FleetConfig {
    int n_devices = 6;
    int intruder_id = 5;
    double spread = 0.3;
    std::uint64_t seed = 1;  // master seed; every other seed is derived from it
};

struct SignalConfig {
    std::size_t window_len = 1024;
    std::size_t windows_per_frame = 8;
    int frames_per_cell = 160;
    std::vector<double> snr_list{0.0, -1.0, -5.0, -10.0, -15.0};
    bool mobility = false;
    std::uint32_t payload_id = 1;
    bool vary_payload = false;
};

struct ExperimentConfig {
    FleetConfig fleet;
    SignalConfig signal;
    cae::Architecture model;
    cae::TrainConfig train;  // train.seed is overwritten from the master seed
    protocol::AuthPolicy policy;
    std::string output_dir = "out";

    /// Checks every nested invariant; throws std::invalid_argument.
    void validate() const;
    signal::DatasetSpec dataset_spec() const;
    std::uint64_t key_init_seed() const;
    cae::TrainConfig train_config() const;  // with the derived seed
};

/// "zigbee6": 6 devices, intruder 5, SNR {0,-1,-5,-10,-15} dB.
/// "usrp5": 5 devices, intruder 2, SNR -10..10 dB in 2 dB steps, mobile frames.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::string to_json(const ExperimentConfig& cfg);
/// Missing keys keep the values of `base`. Throws std::invalid_argument on malformed input.
ExperimentConfig from_json(const std::string& text, const ExperimentConfig& base = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base = {});

// ---------------------------------------------------------------------------------------------
// Files

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kKeyName = "key.dacw";
inline constexpr const char* kTrainReportName = "train_report.json";
inline constexpr const char* kMatrixJsonName = "matrix.json";
inline constexpr const char* kMatrixTextName = "matrix.txt";

struct SimulateSummary {
    std::filesystem::path manifest;
    std::size_t train = 0, validation = 0, test = 0;
};

/// Writes one little-endian f32 I,Q file plus a JSON sidecar per (device, snr) cell and a manifest
/// recording the configuration and every window's split. Deterministic for a fixed config.
SimulateSummary cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Rebuilds the dataset from a manifest and its trace files; verifies the recorded splits.
/// Throws IoError on missing or inconsistent files.
signal::Dataset load_dataset(const std::filesystem::path& manifest, ExperimentConfig* cfg_out = nullptr);

struct TrainOutput {
    cae::CaeModel key;
    cae::TrainReport report;
};

TrainOutput train_key(const ExperimentConfig& cfg, const signal::Dataset& data);
/// Trains on the manifest's training split and writes key.dacw and train_report.json.
TrainOutput cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

std::string train_report_json(const cae::TrainReport& report, const cae::CaeModel& key);

/// DAC and raw-trace matrices, per SNR level and mixed, with the intruder detection summary.
std::string matrix_json(const protocol::KsMatrix& m);
std::string matrix_text(const protocol::KsMatrix& m);

protocol::KsMatrix cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& manifest,
                                const std::filesystem::path& key, const std::filesystem::path& out_dir);

/// Reads one cell's trace file back as a single IqTrace.
signal::IqTrace load_cell_trace(const std::filesystem::path& manifest, int device, std::size_t snr_index);

/// Builds and encodes a message from one simulated cell; `rekey_seed` replaces the key with a
/// freshly initialized one (an impersonator that knows everything except the weights).
std::vector<std::uint8_t> cmd_send(const ExperimentConfig& cfg, const std::filesystem::path& manifest,
                                   const std::filesystem::path& key, int device, std::size_t snr_index,
                                   bool confidential, std::optional<std::uint64_t> rekey_seed);

std::string decision_json(const protocol::AuthDecision& d);

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitIntruder = 2,
    kExitInputError = 3,  // unreadable or malformed config, message or key
    kExitRuntimeError = 4,
    kExitKeyMismatch = 5,  // key does not fit the message
    kExitInsufficientSamples = 6,
};

struct AuthenticateOutcome {
    int exit_code = kExitRuntimeError;
    std::string json;  // decision, or {"error": ...}
};

/// Never throws: every failure is mapped to an exit code and an error document.
AuthenticateOutcome cmd_authenticate(const std::filesystem::path& key, const std::filesystem::path& message,
                                     const protocol::AuthPolicy& policy);

}  // namespace dac::experiment
