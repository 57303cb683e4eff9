#pragma once

// Device Authentication Codes: per-window reconstruction errors under a shared autoencoder key,
// the signal+DAC message format, receiver-side verification and the device-pair K-S matrix.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dac/autoencoder.hpp"
#include "dac/kstest.hpp"
#include "dac/signal_sim.hpp"

namespace dac::protocol {

inline constexpr std::size_t kDefaultMinWindows = 200;

struct Dac {
    std::vector<double> errors;  // one MSE per window, f32-representable
    std::size_t window_len = 0;
    cae::Fingerprint model_fingerprint{};

    bool operator==(const Dac&) const = default;
};

enum class AuthMode { exact, statistical };

struct AuthPolicy {
    AuthMode mode = AuthMode::statistical;
    double d_max = 0.1;
    double p_min = 0.9;
    std::size_t min_windows = kDefaultMinWindows;

    void validate() const;
    /// The match rule: exact needs D == 0 and p == 1; statistical needs D <= d_max and p >= p_min.
    bool accepts(const ks::KsResult& ks) const;
};

/// MSE of one window after per-channel standardization, rounded to f32.
double window_error(const cae::CaeModel& model, std::span<const float> iq);
/// Round-trip error available from a latent code alone: decode, re-encode, re-decode, and take
/// the MSE between the two reconstructions. Rounded to f32.
double latent_roundtrip_error(const cae::CaeModel& model, std::span<const float> latent);
/// f32 latent code of one standardized window.
std::vector<float> window_latent(const cae::CaeModel& model, std::span<const float> iq);

enum class DacSource { raw, latent };

/// Splits the trace into non-overlapping windows (samples rounded to f32 first) and records one
/// error per window. Throws InsufficientSamples when fewer than min_windows windows fit.
Dac compute_dac(const cae::CaeModel& model, const signal::IqTrace& trace, std::size_t window_len,
                std::size_t min_windows = kDefaultMinWindows, DacSource source = DacSource::raw);
/// DAC over already-windowed data, in the given order.
Dac compute_dac(const cae::CaeModel& model, std::span<const signal::Window> windows, DacSource source = DacSource::raw);

inline constexpr std::uint16_t kMessageVersion = 1;

struct DacMessage {
    std::uint16_t version = kMessageVersion;
    std::uint32_t payload_id = 0;
    std::uint16_t window_len = 0;
    bool confidential = false;
    cae::Fingerprint model_fingerprint{};
    /// Raw mode: interleaved I,Q of the windowed samples. Confidential mode: per-window latent codes.
    std::vector<float> body;
    std::vector<float> dac;

    std::size_t dac_length() const { return dac.size(); }
    bool operator==(const DacMessage&) const = default;
};

/// Frames the windowed part of `trace` (raw) or its latent codes (confidential) with `dac`.
/// In confidential mode `dac` must be the DacSource::latent DAC of the same trace.
/// Throws std::invalid_argument when the dac does not cover the trace's windows.
DacMessage build_message(const signal::IqTrace& trace, const Dac& dac, bool confidential, const cae::CaeModel& model);

/// Wire format: "DACM", u16 version, u32 payload_id, u16 window_len, u32 dac_length, u8 flags
/// (bit0 confidential), 16-byte fingerprint, f32 body, f32 dac, u64 FNV-1a of all preceding bytes.
std::vector<std::uint8_t> encode_message(const DacMessage& msg);
/// Throws IntegrityError on truncation, bad magic, inconsistent lengths or checksum mismatch.
DacMessage parse_message(std::span<const std::uint8_t> bytes);

enum class Verdict { authorized, intruder };

struct AuthDecision {
    Verdict verdict = Verdict::intruder;
    ks::KsResult ks;
    AuthPolicy policy_used;
    bool fingerprint_match = false;  // advisory only; never changes the verdict
};

/// Regenerates the DAC from the message body with `key` and matches it against the transmitted one.
/// Throws std::invalid_argument when the window length or latent size disagrees with the key, and
/// InsufficientSamples when a statistical policy gets fewer than min_windows DAC entries.
AuthDecision authenticate(const DacMessage& msg, const cae::CaeModel& key, const AuthPolicy& policy);

// ---------------------------------------------------------------------------------------------
// Device-pair matrices

struct KsCell {
    ks::KsResult ks;
    bool accepted = false;  // policy.accepts(ks)
};

/// One block of the report: all ordered device pairs at one SNR level (or the mixed set).
struct MatrixRow {
    std::string label;               // "0 dB" or "[0,-1,-5]dB"
    std::optional<double> snr_db;    // absent for the mixed row
    std::vector<std::vector<KsCell>> cells;  // [device of interest][device]; diagonal = honest halves
    std::vector<KsCell> exact_diagonal;      // same windows on both sides
    std::vector<std::size_t> window_counts;  // test windows per device
};

struct MatrixReport {
    std::string mode;  // "dac" or "raw"
    std::vector<MatrixRow> rows;  // per SNR level, then mixed
};

struct DeviceDetection {
    int device = 0;
    bool enrolled = false;   // appeared in training
    bool flagged_intruder = false;
    bool correct = false;
};

struct DetectionRow {
    std::string label;
    std::vector<DeviceDetection> devices;
    double accuracy = 0.0;
};

struct KsMatrix {
    int n_devices = 0;
    int intruder_id = -1;
    AuthPolicy policy;
    MatrixReport dac;
    MatrixReport raw;
    std::vector<DetectionRow> detection;  // per SNR level, then mixed
    double overall_accuracy = 0.0;        // on the mixed row
};

/// Splits one device's windows into two halves that each cover every SNR level (and, within a level,
/// alternate in original order). Returns indices into `windows`.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_halves(std::span<const signal::Window> windows);

/// Raw-mode values of one window: every kRawDecimation-th standardized I and Q value.
inline constexpr std::size_t kRawDecimation = 8;
std::vector<double> raw_window_values(std::span<const float> iq);

/// DAC matrix (model reconstruction errors) and raw matrix (pooled standardized I/Q sample values)
/// for every ordered device pair, per SNR level and on the mixed set, plus intruder detection.
/// A device is classified authorized when its row accepts some enrolled device under `policy`;
/// its own column uses the exact (receiver-recomputed) comparison.
/// Throws InsufficientSamples if a device has fewer than policy.min_windows test windows.
KsMatrix evaluate_matrix(const cae::CaeModel& model, const signal::Dataset& dataset, const AuthPolicy& policy);

std::string mixed_label(std::span<const double> snr_list);

}  // namespace dac::protocol
