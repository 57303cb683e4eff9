#pragma once

// Baseband IQ simulation: a shared payload waveform, per-device transmitter impairments,
// an AWGN/Rician channel, and windowed train/validation/test datasets.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace dac::signal {

using Complex = std::complex<double>;

inline constexpr double kCarrierHz = 2.405e9;   // 802.15.4 channel 11
inline constexpr double kSampleRateHz = 8.0e6;
inline constexpr int kSamplesPerChip = 8;       // half-sine pulse length per I or Q chip
inline constexpr std::size_t kMinBasebandSamples = 64;
inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// Transmitter impairments of one physical device. Default-constructed = ideal hardware.
struct DeviceProfile {
    std::int64_t device_id = 0;  // also seeds the phase-noise walk
    double iq_gain_imbalance = 1.0;
    double iq_phase_skew = 0.0;  // rad
    double dc_offset_i = 0.0;
    double dc_offset_q = 0.0;
    double cfo_ppm = 0.0;
    double phase_noise_std = 0.0;  // rad per sample step
    double pa_coeff_3rd = 0.0;

    /// Throws std::invalid_argument if any field is outside its physical range.
    void validate() const;
    bool operator==(const DeviceProfile&) const = default;
};

struct ChannelConfig {
    double snr_db = kInfiniteSnr;
    std::optional<double> rician_k_db;  // absent: no fading
    double doppler_norm = 0.0;          // Doppler frequency in cycles per sample

    void validate() const;
};

struct IqTrace {
    std::vector<Complex> samples;
    std::optional<std::int64_t> device_id;
    double snr_db = kInfiniteSnr;
    std::uint32_t payload_id = 0;

    std::size_t sample_count() const { return samples.size(); }
};

double mean_power(std::span<const Complex> x);

/// Scales to unit mean power. A zero-power trace is returned unchanged.
IqTrace normalize_power(IqTrace t);

/// Half-sine O-QPSK waveform from a PRBS seeded by payload_id, unit power.
IqTrace generate_baseband(std::uint32_t payload_id, std::size_t n_samples);

/// Draws a device with every impairment uniform in a band whose half-width is spread times
/// the field's maximum. `seed` becomes the device_id.
DeviceProfile sample_device_profile(std::uint64_t seed, double spread);

/// Impairment chain without the final power normalization:
/// DC offset, IQ gain/phase imbalance, x + c3 x|x|^2, CFO rotation, phase-noise walk.
/// `frame_seed` is mixed with profile.device_id to seed the phase-noise walk.
IqTrace apply_impairments(const IqTrace& trace, const DeviceProfile& profile, std::uint64_t frame_seed = 0);

/// apply_impairments followed by unit-power normalization.
IqTrace apply_device(const IqTrace& trace, const DeviceProfile& profile, std::uint64_t frame_seed = 0);

/// Optional Rician fading, then complex AWGN scaled so the empirical SNR over the trace equals
/// ch.snr_db exactly. The output is not renormalized.
IqTrace apply_channel(const IqTrace& trace, const ChannelConfig& ch, std::uint64_t seed);

/// 10 log10(P(clean) / P(received - clean)).
double measured_snr_db(std::span<const Complex> clean, std::span<const Complex> received);

/// One 2 x W model input: I row followed by Q row, stored as f32.
struct Window {
    std::vector<float> iq;
    std::int64_t device_id = -1;
    double snr_db = kInfiniteSnr;
    std::uint32_t frame = 0;
    std::uint32_t index = 0;  // position within the frame
    bool mobile = false;

    std::size_t window_len() const { return iq.size() / 2; }
};

/// Non-overlapping windows; a trailing partial window is dropped.
std::vector<Window> windowize(const IqTrace& trace, std::size_t window_len);

/// Rebuilds the interleaved-sample trace covered by `windows` (inverse of windowize).
std::vector<Complex> unwindowize(std::span<const Window> windows);

struct DatasetSpec {
    int n_devices = 6;
    int intruder_id = 5;
    std::vector<double> snr_list{0.0};
    int frames_per_cell = 40;
    std::size_t window_len = 1024;
    std::size_t windows_per_frame = 8;
    double spread = 0.3;
    std::uint64_t seed = 1;
    std::uint32_t payload_id = 1;
    bool vary_payload = false;  // payload_id + frame instead of one shared payload
    bool mobility = false;      // odd frames see a time-varying Rician channel

    void validate() const;
    std::size_t frame_len() const { return window_len * windows_per_frame; }
};

/// Channel used for mobile frames.
inline constexpr double kMobileRicianKdB = 6.0;
inline constexpr double kMobileDopplerNorm = 2.0e-4;

/// The frames of one (device, snr) cell, before windowing.
struct Cell {
    int device = 0;
    std::size_t snr_index = 0;
    double snr_db = 0.0;
    std::vector<IqTrace> frames;
};

DeviceProfile fleet_profile(const DatasetSpec& spec, int device);
Cell simulate_cell(const DatasetSpec& spec, int device, std::size_t snr_index);

enum class Split : std::uint8_t { train, validation, test };

/// Split of one authorized cell's windows. `authorized_before` counts authorized windows in
/// earlier cells so that the totals over all cells are exactly round(0.90 A) / round(0.95 A).
std::vector<Split> assign_split(const DatasetSpec& spec, int device, std::size_t snr_index,
                                std::size_t n_windows, std::size_t authorized_before);

struct Dataset {
    std::vector<Window> train;
    std::vector<Window> validation;
    std::vector<Window> test;
    std::size_t window_len = 0;
    int n_devices = 0;
    int intruder_id = -1;
    std::vector<double> snr_list;
};

/// Incremental assembly in cell order (device-major, then snr). build_dataset uses this;
/// the CLI uses it when reloading trace files.
class DatasetBuilder {
public:
    explicit DatasetBuilder(const DatasetSpec& spec);
    /// Windows the cell's frames and distributes them; returns the per-window split.
    std::vector<Split> add_cell(const Cell& cell);
    std::vector<Split> add_cell_windows(int device, std::size_t snr_index, std::vector<Window> windows);
    Dataset finish() &&;

private:
    DatasetSpec spec_;
    Dataset data_;
    std::size_t authorized_seen_ = 0;
};

Dataset build_dataset(const DatasetSpec& spec);
Dataset build_dataset(int n_devices, int intruder_id, const std::vector<double>& snr_list,
                      int frames_per_cell, std::size_t window_len, std::uint64_t seed);

}  // namespace dac::signal
