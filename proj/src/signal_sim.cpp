#include "dac/signal_sim.hpp"

#include <algorithm>
#include <array>
#include <iterator>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "dac/util.hpp"

namespace dac::signal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Half-widths of the impairment bands at spread = 1. Each sits inside the DeviceProfile bounds.
constexpr double kMaxGainDev = 0.45;
constexpr double kMaxPhaseSkew = 0.19;
constexpr double kMaxDcOffset = 0.09;
constexpr double kMaxCfoPpm = 95.0;
constexpr double kMaxPhaseNoise = 0.1;
constexpr double kMaxPaCoeff = 0.28;

constexpr int kSinusoids = 16;  // sum-of-sinusoids Rayleigh component

}  // namespace

void DeviceProfile::validate() const {
    auto check = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("DeviceProfile: ") + what);
    };
    check(iq_gain_imbalance > 0.5 && iq_gain_imbalance < 2.0, "iq_gain_imbalance outside (0.5, 2.0)");
    check(std::abs(iq_phase_skew) < 0.2, "|iq_phase_skew| >= 0.2 rad");
    check(std::abs(dc_offset_i) < 0.1 && std::abs(dc_offset_q) < 0.1, "|dc_offset| >= 0.1");
    check(std::abs(cfo_ppm) < 100.0, "|cfo_ppm| >= 100");
    check(phase_noise_std >= 0.0 && std::isfinite(phase_noise_std), "phase_noise_std must be >= 0");
    check(std::abs(pa_coeff_3rd) < 0.3, "|pa_coeff_3rd| >= 0.3");
}

void ChannelConfig::validate() const {
    if (std::isnan(snr_db) || snr_db < -20.0) throw std::invalid_argument("ChannelConfig: snr_db must be in [-20, +inf]");
    if (!(doppler_norm >= 0.0 && doppler_norm <= 0.01))
        throw std::invalid_argument("ChannelConfig: doppler_norm must be in [0, 0.01]");
    if (rician_k_db && !std::isfinite(*rician_k_db)) throw std::invalid_argument("ChannelConfig: rician_k_db not finite");
}

double mean_power(std::span<const Complex> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const Complex& c : x) acc += std::norm(c);
    return acc / static_cast<double>(x.size());
}

IqTrace normalize_power(IqTrace t) {
    const double p = mean_power(t.samples);
    if (p > 0.0) {
        const double g = 1.0 / std::sqrt(p);
        for (Complex& c : t.samples) c *= g;
    }
    return t;
}

IqTrace generate_baseband(std::uint32_t payload_id, std::size_t n_samples) {
    if (n_samples < kMinBasebandSamples)
        throw std::invalid_argument("generate_baseband: n_samples must be >= " + std::to_string(kMinBasebandSamples));

    constexpr std::size_t T = kSamplesPerChip;
    const std::size_t n_chips = n_samples / T + 2;
    std::mt19937_64 rng(derive_seed(payload_id, "payload"));
    std::vector<double> chip_i(n_chips), chip_q(n_chips);
    for (std::size_t k = 0; k < n_chips; ++k) {
        const auto bits = rng();
        chip_i[k] = (bits & 1U) ? 1.0 : -1.0;
        chip_q[k] = (bits & 2U) ? 1.0 : -1.0;
    }

    IqTrace out;
    out.payload_id = payload_id;
    out.samples.resize(n_samples);
    for (std::size_t t = 0; t < n_samples; ++t) {
        // Q runs half a chip ahead of I, so sin^2 + cos^2 keeps the envelope constant.
        const std::size_t tq = t + T / 2;
        const double pi = std::sin(std::numbers::pi * (static_cast<double>(t % T) + 0.5) / T);
        const double pq = std::sin(std::numbers::pi * (static_cast<double>(tq % T) + 0.5) / T);
        out.samples[t] = {chip_i[t / T] * pi, chip_q[tq / T] * pq};
    }
    return normalize_power(std::move(out));
}

DeviceProfile sample_device_profile(std::uint64_t seed, double spread) {
    if (!(spread > 0.0 && spread <= 1.0)) throw std::invalid_argument("sample_device_profile: spread must be in (0, 1]");
    std::mt19937_64 rng(derive_seed(seed, "device-profile"));
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    DeviceProfile p;
    p.device_id = static_cast<std::int64_t>(seed);
    p.iq_gain_imbalance = 1.0 + kMaxGainDev * spread * sym(rng);
    p.iq_phase_skew = kMaxPhaseSkew * spread * sym(rng);
    p.dc_offset_i = kMaxDcOffset * spread * sym(rng);
    p.dc_offset_q = kMaxDcOffset * spread * sym(rng);
    p.cfo_ppm = kMaxCfoPpm * spread * sym(rng);
    p.phase_noise_std = kMaxPhaseNoise * spread * unit(rng);
    p.pa_coeff_3rd = kMaxPaCoeff * spread * sym(rng);
    return p;
}

IqTrace apply_impairments(const IqTrace& trace, const DeviceProfile& profile, std::uint64_t frame_seed) {
    if (trace.samples.empty()) throw std::invalid_argument("apply_device: empty trace");
    profile.validate();

    IqTrace out = trace;
    out.device_id = profile.device_id;

    const double cos_skew = std::cos(profile.iq_phase_skew);
    const double sin_skew = std::sin(profile.iq_phase_skew);
    const double cfo_step = kTwoPi * profile.cfo_ppm * 1e-6 * kCarrierHz / kSampleRateHz;

    std::mt19937_64 rng(derive_seed(frame_seed, "phase-noise", profile.device_id));
    std::normal_distribution<double> gauss(0.0, 1.0);
    double walk = 0.0;

    for (std::size_t n = 0; n < out.samples.size(); ++n) {
        double i = out.samples[n].real() + profile.dc_offset_i;
        double q = out.samples[n].imag() + profile.dc_offset_q;
        const double q_imb = profile.iq_gain_imbalance * (sin_skew * i + cos_skew * q);
        Complex x{i, q_imb};
        x += profile.pa_coeff_3rd * x * std::norm(x);
        double phase = cfo_step * static_cast<double>(n);
        if (profile.phase_noise_std > 0.0) {
            walk += profile.phase_noise_std * gauss(rng);
            phase += walk;
        }
        if (phase != 0.0) x *= std::polar(1.0, phase);
        out.samples[n] = x;
    }
    return out;
}

IqTrace apply_device(const IqTrace& trace, const DeviceProfile& profile, std::uint64_t frame_seed) {
    return normalize_power(apply_impairments(trace, profile, frame_seed));
}

IqTrace apply_channel(const IqTrace& trace, const ChannelConfig& ch, std::uint64_t seed) {
    if (trace.samples.empty()) throw std::invalid_argument("apply_channel: empty trace");
    ch.validate();

    IqTrace out = trace;
    out.snr_db = ch.snr_db;
    std::mt19937_64 rng(derive_seed(seed, "channel"));
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    std::normal_distribution<double> gauss(0.0, 1.0);

    if (ch.rician_k_db) {
        const double k = std::pow(10.0, *ch.rician_k_db / 10.0);
        const double los_amp = std::sqrt(k / (k + 1.0));
        const double scatter_amp = std::sqrt(1.0 / (k + 1.0));
        const Complex los = std::polar(los_amp, angle(rng));
        std::array<double, kSinusoids> freq{}, phase0{};
        for (int m = 0; m < kSinusoids; ++m) {
            freq[m] = kTwoPi * ch.doppler_norm * std::cos(angle(rng));
            phase0[m] = angle(rng);
        }
        const double norm = scatter_amp / std::sqrt(static_cast<double>(kSinusoids));
        for (std::size_t n = 0; n < out.samples.size(); ++n) {
            Complex g{0.0, 0.0};
            for (int m = 0; m < kSinusoids; ++m) g += std::polar(1.0, freq[m] * static_cast<double>(n) + phase0[m]);
            out.samples[n] *= los + norm * g;
        }
    }

    if (std::isfinite(ch.snr_db)) {
        const double signal_power = mean_power(out.samples);
        std::vector<Complex> noise(out.samples.size());
        for (Complex& c : noise) c = {gauss(rng), gauss(rng)};
        const double target = signal_power / std::pow(10.0, ch.snr_db / 10.0);
        const double scale = std::sqrt(target / mean_power(noise));
        for (std::size_t n = 0; n < noise.size(); ++n) out.samples[n] += scale * noise[n];
    }
    return out;
}

double measured_snr_db(std::span<const Complex> clean, std::span<const Complex> received) {
    if (clean.size() != received.size() || clean.empty())
        throw std::invalid_argument("measured_snr_db: length mismatch");
    double ps = 0.0, pn = 0.0;
    for (std::size_t n = 0; n < clean.size(); ++n) {
        ps += std::norm(clean[n]);
        pn += std::norm(received[n] - clean[n]);
    }
    return 10.0 * std::log10(ps / pn);
}

std::vector<Window> windowize(const IqTrace& trace, std::size_t window_len) {
    if (window_len == 0) throw std::invalid_argument("windowize: window_len must be positive");
    const std::size_t k = trace.samples.size() / window_len;
    std::vector<Window> out(k);
    for (std::size_t w = 0; w < k; ++w) {
        Window& win = out[w];
        win.iq.resize(2 * window_len);
        win.device_id = trace.device_id.value_or(-1);
        win.snr_db = trace.snr_db;
        win.index = static_cast<std::uint32_t>(w);
        for (std::size_t t = 0; t < window_len; ++t) {
            const Complex c = trace.samples[w * window_len + t];
            win.iq[t] = static_cast<float>(c.real());
            win.iq[window_len + t] = static_cast<float>(c.imag());
        }
    }
    return out;
}

std::vector<Complex> unwindowize(std::span<const Window> windows) {
    std::vector<Complex> out;
    for (const Window& w : windows) {
        const std::size_t len = w.window_len();
        for (std::size_t t = 0; t < len; ++t) out.emplace_back(w.iq[t], w.iq[len + t]);
    }
    return out;
}

void DatasetSpec::validate() const {
    if (n_devices < 2) throw std::invalid_argument("dataset: n_devices must be >= 2");
    if (intruder_id < 0 || intruder_id >= n_devices) throw std::invalid_argument("dataset: intruder_id out of range");
    if (snr_list.empty()) throw std::invalid_argument("dataset: snr_list is empty");
    for (double s : snr_list)
        if (std::isnan(s) || s < -20.0) throw std::invalid_argument("dataset: snr level below -20 dB");
    if (frames_per_cell < 1) throw std::invalid_argument("dataset: frames_per_cell must be >= 1");
    if (window_len < 64) throw std::invalid_argument("dataset: window_len must be >= 64");
    if (windows_per_frame < 1) throw std::invalid_argument("dataset: windows_per_frame must be >= 1");
    if (!(spread > 0.0 && spread <= 1.0)) throw std::invalid_argument("dataset: spread must be in (0, 1]");
}

DeviceProfile fleet_profile(const DatasetSpec& spec, int device) {
    DeviceProfile p = sample_device_profile(derive_seed(spec.seed, "fleet-device", device), spec.spread);
    p.device_id = device;
    return p;
}

Cell simulate_cell(const DatasetSpec& spec, int device, std::size_t snr_index) {
    spec.validate();
    if (device < 0 || device >= spec.n_devices) throw std::invalid_argument("simulate_cell: device out of range");
    if (snr_index >= spec.snr_list.size()) throw std::invalid_argument("simulate_cell: snr_index out of range");

    Cell cell;
    cell.device = device;
    cell.snr_index = snr_index;
    cell.snr_db = spec.snr_list[snr_index];
    const DeviceProfile profile = fleet_profile(spec, device);

    std::optional<IqTrace> shared;
    if (!spec.vary_payload) shared = generate_baseband(spec.payload_id, spec.frame_len());

    for (int f = 0; f < spec.frames_per_cell; ++f) {
        const IqTrace base = shared ? *shared : generate_baseband(spec.payload_id + static_cast<std::uint32_t>(f), spec.frame_len());
        const IqTrace tx = apply_device(base, profile, derive_seed(spec.seed, "frame", device, snr_index, f));
        ChannelConfig ch;
        ch.snr_db = cell.snr_db;
        if (spec.mobility && (f % 2 == 1)) {
            ch.rician_k_db = kMobileRicianKdB;
            ch.doppler_norm = kMobileDopplerNorm;
        }
        cell.frames.push_back(apply_channel(tx, ch, derive_seed(spec.seed, "channel", device, snr_index, f)));
    }
    return cell;
}

std::vector<Split> assign_split(const DatasetSpec& spec, int device, std::size_t snr_index,
                                std::size_t n_windows, std::size_t authorized_before) {
    std::vector<Split> out(n_windows, Split::test);
    if (device == spec.intruder_id) return out;

    auto quota = [](double frac, std::size_t count) { return static_cast<std::size_t>(std::llround(frac * static_cast<double>(count))); };
    const std::size_t after = authorized_before + n_windows;
    const std::size_t n_train = quota(0.90, after) - quota(0.90, authorized_before);
    const std::size_t n_train_val = quota(0.95, after) - quota(0.95, authorized_before);

    std::vector<std::size_t> order(n_windows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(spec.seed, "split", device, snr_index));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t r = 0; r < n_windows; ++r) {
        if (r < n_train) out[order[r]] = Split::train;
        else if (r < n_train_val) out[order[r]] = Split::validation;
    }
    return out;
}

DatasetBuilder::DatasetBuilder(const DatasetSpec& spec) : spec_(spec) {
    spec_.validate();
    data_.window_len = spec_.window_len;
    data_.n_devices = spec_.n_devices;
    data_.intruder_id = spec_.intruder_id;
    data_.snr_list = spec_.snr_list;
}

std::vector<Split> DatasetBuilder::add_cell(const Cell& cell) {
    std::vector<Window> windows;
    for (std::size_t f = 0; f < cell.frames.size(); ++f) {
        auto w = windowize(cell.frames[f], spec_.window_len);
        for (Window& win : w) {
            win.frame = static_cast<std::uint32_t>(f);
            win.mobile = spec_.mobility && (f % 2 == 1);
            win.device_id = cell.device;
            win.snr_db = cell.snr_db;
        }
        std::move(w.begin(), w.end(), std::back_inserter(windows));
    }
    return add_cell_windows(cell.device, cell.snr_index, std::move(windows));
}

std::vector<Split> DatasetBuilder::add_cell_windows(int device, std::size_t snr_index, std::vector<Window> windows) {
    auto split = assign_split(spec_, device, snr_index, windows.size(), authorized_seen_);
    if (device != spec_.intruder_id) authorized_seen_ += windows.size();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        switch (split[i]) {
            case Split::train: data_.train.push_back(std::move(windows[i])); break;
            case Split::validation: data_.validation.push_back(std::move(windows[i])); break;
            case Split::test: data_.test.push_back(std::move(windows[i])); break;
        }
    }
    return split;
}

Dataset DatasetBuilder::finish() && { return std::move(data_); }

Dataset build_dataset(const DatasetSpec& spec) {
    DatasetBuilder builder(spec);
    for (int d = 0; d < spec.n_devices; ++d)
        for (std::size_t s = 0; s < spec.snr_list.size(); ++s) builder.add_cell(simulate_cell(spec, d, s));
    return std::move(builder).finish();
}

Dataset build_dataset(int n_devices, int intruder_id, const std::vector<double>& snr_list,
                      int frames_per_cell, std::size_t window_len, std::uint64_t seed) {
    DatasetSpec spec;
    spec.n_devices = n_devices;
    spec.intruder_id = intruder_id;
    spec.snr_list = snr_list;
    spec.frames_per_cell = frames_per_cell;
    spec.window_len = window_len;
    spec.seed = seed;
    return build_dataset(spec);
}

}  // namespace dac::signal
