#include "dac/dac_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dac/errors.hpp"
#include "dac/util.hpp"

namespace dac::protocol {

void AuthPolicy::validate() const {
    if (!(d_max >= 0.0 && d_max <= 1.0)) throw std::invalid_argument("AuthPolicy: d_max must be in [0, 1]");
    if (!(p_min >= 0.0 && p_min <= 1.0)) throw std::invalid_argument("AuthPolicy: p_min must be in [0, 1]");
}

bool AuthPolicy::accepts(const ks::KsResult& r) const {
    if (mode == AuthMode::exact) return r.statistic == 0.0 && r.p_value == 1.0;
    return r.statistic <= d_max && r.p_value >= p_min;
}

double window_error(const cae::CaeModel& model, std::span<const float> iq) {
    const cae::Tensor x = cae::standardize_window(iq);
    return static_cast<float>(cae::reconstruction_error(x, cae::forward(model, x).recon));
}

std::vector<float> window_latent(const cae::CaeModel& model, std::span<const float> iq) {
    const cae::Tensor z = cae::encode(model, cae::standardize_window(iq));
    return {z.data.begin(), z.data.end()};
}

double latent_roundtrip_error(const cae::CaeModel& model, std::span<const float> latent) {
    const auto& arch = model.arch();
    if (latent.size() != arch.latent_len()) throw std::invalid_argument("latent code length does not match the key");
    cae::Tensor z({arch.latent_channels, arch.latent_steps()});
    std::copy(latent.begin(), latent.end(), z.data.begin());
    const cae::Tensor recon = cae::decode(model, z);
    const cae::Tensor again = cae::decode(model, cae::encode(model, recon));
    return static_cast<float>(cae::reconstruction_error(recon, again));
}

namespace {

double window_value(const cae::CaeModel& model, std::span<const float> iq, DacSource source) {
    if (source == DacSource::raw) return window_error(model, iq);
    const auto z = window_latent(model, iq);
    return latent_roundtrip_error(model, z);
}

std::vector<signal::Window> quantized_windows(const signal::IqTrace& trace, std::size_t window_len) {
    return signal::windowize(trace, window_len);  // windowize stores f32
}

}  // namespace

Dac compute_dac(const cae::CaeModel& model, const signal::IqTrace& trace, std::size_t window_len,
                std::size_t min_windows, DacSource source) {
    if (window_len != model.arch().window_len) throw std::invalid_argument("compute_dac: window_len does not match the key");
    const std::size_t have = trace.samples.size() / window_len;
    if (have < min_windows || have == 0)
        throw InsufficientSamples("compute_dac: trace too short (samples)", std::max<std::size_t>(min_windows, 1) * window_len,
                                  trace.samples.size());
    return compute_dac(model, quantized_windows(trace, window_len), source);
}

Dac compute_dac(const cae::CaeModel& model, std::span<const signal::Window> windows, DacSource source) {
    Dac d;
    d.window_len = model.arch().window_len;
    d.model_fingerprint = model.fingerprint();
    d.errors.reserve(windows.size());
    for (const signal::Window& w : windows) {
        if (w.window_len() != d.window_len) throw std::invalid_argument("compute_dac: window length does not match the key");
        d.errors.push_back(window_value(model, w.iq, source));
    }
    return d;
}

DacMessage build_message(const signal::IqTrace& trace, const Dac& dac, bool confidential, const cae::CaeModel& model) {
    const std::size_t w = model.arch().window_len;
    if (dac.window_len != w) throw std::invalid_argument("build_message: dac window_len does not match the key");
    if (w > 0xFFFF) throw std::invalid_argument("build_message: window_len does not fit the header");
    const auto windows = quantized_windows(trace, w);
    if (windows.size() != dac.errors.size())
        throw std::invalid_argument("build_message: dac length does not match the number of windows in the trace");

    DacMessage m;
    m.payload_id = trace.payload_id;
    m.window_len = static_cast<std::uint16_t>(w);
    m.confidential = confidential;
    m.model_fingerprint = dac.model_fingerprint;
    for (double e : dac.errors) m.dac.push_back(static_cast<float>(e));
    if (confidential) {
        for (const auto& win : windows) {
            const auto z = window_latent(model, win.iq);
            m.body.insert(m.body.end(), z.begin(), z.end());
        }
    } else {
        m.body.reserve(2 * w * windows.size());
        for (const auto& win : windows)
            for (std::size_t t = 0; t < w; ++t) {
                m.body.push_back(win.iq[t]);
                m.body.push_back(win.iq[w + t]);
            }
    }
    return m;
}

namespace {
constexpr std::size_t kHeaderSize = 4 + 2 + 4 + 2 + 4 + 1 + 16;
}

std::vector<std::uint8_t> encode_message(const DacMessage& msg) {
    ByteWriter wr;
    wr.put_bytes({reinterpret_cast<const std::uint8_t*>("DACM"), 4});
    wr.put<std::uint16_t>(msg.version);
    wr.put<std::uint32_t>(msg.payload_id);
    wr.put<std::uint16_t>(msg.window_len);
    wr.put<std::uint32_t>(static_cast<std::uint32_t>(msg.dac.size()));
    wr.put<std::uint8_t>(msg.confidential ? 1 : 0);
    wr.put_bytes(msg.model_fingerprint);
    wr.put_f32(msg.body);
    wr.put_f32(msg.dac);
    wr.put<std::uint64_t>(fnv1a64(wr.bytes()));
    return wr.take();
}

DacMessage parse_message(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize + 8) throw IntegrityError("message truncated");
    if (std::memcmp(bytes.data(), "DACM", 4) != 0) throw IntegrityError("message has bad magic");
    const auto covered = bytes.first(bytes.size() - 8);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + covered.size(), 8);
    if (fnv1a64(covered) != stored) throw IntegrityError("message checksum mismatch");

    ByteReader r(covered);
    r.get<std::uint32_t>();
    DacMessage m;
    m.version = r.get<std::uint16_t>();
    if (m.version != kMessageVersion) throw IntegrityError("unsupported message version " + std::to_string(m.version));
    m.payload_id = r.get<std::uint32_t>();
    m.window_len = r.get<std::uint16_t>();
    const auto dac_len = r.get<std::uint32_t>();
    const auto flags = r.get<std::uint8_t>();
    if (flags & ~1u) throw IntegrityError("message has unknown flag bits");
    m.confidential = (flags & 1u) != 0;
    r.get_bytes(m.model_fingerprint);

    if (r.remaining() % sizeof(float) != 0) throw IntegrityError("message payload is not a whole number of floats");
    const std::size_t floats = r.remaining() / sizeof(float);
    if (dac_len == 0 || dac_len > floats) throw IntegrityError("declared dac_length inconsistent with message size");
    const std::size_t body_len = floats - dac_len;
    if (m.window_len == 0 || body_len % dac_len != 0) throw IntegrityError("body length is not a whole number of windows");
    if (!m.confidential && body_len != static_cast<std::size_t>(dac_len) * 2 * m.window_len)
        throw IntegrityError("raw body length does not match dac_length * 2 * window_len");
    m.body = r.get_f32(body_len);
    m.dac = r.get_f32(dac_len);
    for (float v : m.dac)
        if (!std::isfinite(v) || v < 0.0f) throw IntegrityError("dac contains invalid entries");
    for (float v : m.body)
        if (!std::isfinite(v)) throw IntegrityError("body contains non-finite samples");
    return m;
}

AuthDecision authenticate(const DacMessage& msg, const cae::CaeModel& key, const AuthPolicy& policy) {
    policy.validate();
    const std::size_t w = key.arch().window_len;
    if (msg.window_len != w) throw std::invalid_argument("authenticate: message window_len does not match the key");
    const std::size_t k = msg.dac.size();
    if (k == 0) throw std::invalid_argument("authenticate: empty dac");
    if (policy.mode == AuthMode::statistical && k < policy.min_windows)
        throw InsufficientSamples("authenticate: dac too short for the statistical test (windows)", policy.min_windows, k);

    std::vector<double> local;
    local.reserve(k);
    if (msg.confidential) {
        const std::size_t l = key.arch().latent_len();
        if (msg.body.size() != k * l) throw std::invalid_argument("authenticate: latent size does not match the key");
        for (std::size_t i = 0; i < k; ++i) local.push_back(latent_roundtrip_error(key, std::span(msg.body).subspan(i * l, l)));
    } else {
        if (msg.body.size() != k * 2 * w) throw std::invalid_argument("authenticate: body length does not match dac_length");
        std::vector<float> iq(2 * w);
        for (std::size_t i = 0; i < k; ++i) {
            const float* src = msg.body.data() + i * 2 * w;
            for (std::size_t t = 0; t < w; ++t) {
                iq[t] = src[2 * t];
                iq[w + t] = src[2 * t + 1];
            }
            local.push_back(window_error(key, iq));
        }
    }

    const std::vector<double> sent(msg.dac.begin(), msg.dac.end());
    AuthDecision d;
    d.ks = ks::ks_two_sample(sent, local);
    d.policy_used = policy;
    d.fingerprint_match = msg.model_fingerprint == key.fingerprint();
    d.verdict = policy.accepts(d.ks) ? Verdict::authorized : Verdict::intruder;
    return d;
}

// ---------------------------------------------------------------------------------------------

std::vector<double> raw_window_values(std::span<const float> iq) {
    const cae::Tensor x = cae::standardize_window(iq);
    std::vector<double> out;
    out.reserve(x.size() / kRawDecimation + 2);
    for (std::size_t i = 0; i < x.size(); i += kRawDecimation) out.push_back(x.data[i]);
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_halves(std::span<const signal::Window> windows) {
    std::map<double, std::vector<std::size_t>> by_snr;
    for (std::size_t i = 0; i < windows.size(); ++i) by_snr[windows[i].snr_db].push_back(i);
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
    std::size_t toggle = 0;
    for (auto& [snr, idx] : by_snr) {
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) (toggle++ % 2 == 0 ? out.first : out.second).push_back(i);
    }
    return out;
}

std::string mixed_label(std::span<const double> snr_list) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < snr_list.size(); ++i) os << (i ? "," : "") << snr_list[i];
    os << "]dB";
    return os.str();
}

namespace {

std::string snr_label(double snr) {
    std::ostringstream os;
    os << snr << " dB";
    return os.str();
}

// Per device: the test windows' indices (into dataset.test) for one row.
using Groups = std::vector<std::vector<std::size_t>>;

template <typename ValuesOf>
MatrixRow build_row(const signal::Dataset& ds, const Groups& groups, const AuthPolicy& policy, ValuesOf&& values_of,
                    std::string label, std::optional<double> snr) {
    const std::size_t n = groups.size();
    MatrixRow row;
    row.label = std::move(label);
    row.snr_db = snr;

    auto pooled = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> v;
        for (std::size_t i : idx) {
            const auto vals = values_of(i);
            v.insert(v.end(), vals.begin(), vals.end());
        }
        return ks::Edf(std::move(v));
    };

    std::vector<ks::Edf> full;
    std::vector<std::pair<ks::Edf, ks::Edf>> halves;
    for (std::size_t d = 0; d < n; ++d) {
        if (groups[d].size() < 2)
            throw InsufficientSamples("evaluate_matrix: test windows for device " + std::to_string(d) + " in row " + row.label,
                                      2, groups[d].size());
        full.push_back(pooled(groups[d]));
        std::vector<signal::Window> subset;
        for (std::size_t i : groups[d]) subset.push_back(ds.test[i]);
        auto [ha, hb] = stratified_halves(subset);
        std::vector<std::size_t> ia, ib;
        for (std::size_t i : ha) ia.push_back(groups[d][i]);
        for (std::size_t i : hb) ib.push_back(groups[d][i]);
        halves.emplace_back(pooled(ia), pooled(ib));
        row.window_counts.push_back(groups[d].size());
    }

    row.cells.assign(n, std::vector<KsCell>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const ks::KsResult r = i == j ? ks::ks_two_sample(halves[i].first, halves[i].second)
                                          : ks::ks_two_sample(full[i], full[j]);
            row.cells[i][j] = {r, policy.accepts(r)};
        }
        const ks::KsResult self = ks::ks_two_sample(full[i], full[i]);
        row.exact_diagonal.push_back({self, policy.accepts(self)});
    }
    return row;
}

DetectionRow detect(const MatrixRow& row, int intruder_id) {
    DetectionRow out;
    out.label = row.label;
    const std::size_t n = row.cells.size();
    std::size_t correct = 0;
    for (std::size_t d = 0; d < n; ++d) {
        DeviceDetection det;
        det.device = static_cast<int>(d);
        det.enrolled = static_cast<int>(d) != intruder_id;
        bool matched = false;
        for (std::size_t e = 0; e < n; ++e) {
            if (static_cast<int>(e) == intruder_id) continue;
            matched = matched || (e == d ? row.exact_diagonal[d].accepted : row.cells[d][e].accepted);
        }
        det.flagged_intruder = !matched;
        det.correct = det.flagged_intruder == !det.enrolled;
        correct += det.correct ? 1 : 0;
        out.devices.push_back(det);
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return out;
}

}  // namespace

KsMatrix evaluate_matrix(const cae::CaeModel& model, const signal::Dataset& dataset, const AuthPolicy& policy) {
    policy.validate();
    if (dataset.test.empty()) throw std::invalid_argument("evaluate_matrix: empty test set");
    if (dataset.window_len != model.arch().window_len) throw std::invalid_argument("evaluate_matrix: window_len does not match the key");
    const std::size_t n = static_cast<std::size_t>(dataset.n_devices);

    Groups all(n);
    for (std::size_t i = 0; i < dataset.test.size(); ++i) {
        const auto d = dataset.test[i].device_id;
        if (d < 0 || static_cast<std::size_t>(d) >= n) throw std::invalid_argument("evaluate_matrix: test window with unknown device");
        all[static_cast<std::size_t>(d)].push_back(i);
    }
    for (std::size_t d = 0; d < n; ++d)
        if (all[d].size() < policy.min_windows)
            throw InsufficientSamples("evaluate_matrix: test windows for device " + std::to_string(d), policy.min_windows,
                                      all[d].size());

    const Dac test_dac = compute_dac(model, dataset.test);
    std::vector<std::vector<double>> raw(dataset.test.size());
    for (std::size_t i = 0; i < dataset.test.size(); ++i) raw[i] = raw_window_values(dataset.test[i].iq);

    auto dac_values = [&](std::size_t i) { return std::span<const double>(&test_dac.errors[i], 1); };
    auto raw_values = [&](std::size_t i) { return std::span<const double>(raw[i]); };

    KsMatrix out;
    out.n_devices = dataset.n_devices;
    out.intruder_id = dataset.intruder_id;
    out.policy = policy;
    out.dac.mode = "dac";
    out.raw.mode = "raw";

    auto add_rows = [&](const Groups& g, const std::string& label, std::optional<double> snr) {
        out.dac.rows.push_back(build_row(dataset, g, policy, dac_values, label, snr));
        out.raw.rows.push_back(build_row(dataset, g, policy, raw_values, label, snr));
        out.detection.push_back(detect(out.dac.rows.back(), dataset.intruder_id));
    };

    for (double snr : dataset.snr_list) {
        Groups g(n);
        for (std::size_t d = 0; d < n; ++d)
            for (std::size_t i : all[d])
                if (dataset.test[i].snr_db == snr) g[d].push_back(i);
        add_rows(g, snr_label(snr), snr);
    }
    add_rows(all, mixed_label(dataset.snr_list), std::nullopt);
    out.overall_accuracy = out.detection.back().accuracy;
    return out;
}

}  // namespace dac::protocol
