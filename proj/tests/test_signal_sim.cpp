#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <tuple>

#include "dac/signal_sim.hpp"

using namespace dac::signal;

namespace {

double oracle_snr_db(const std::vector<Complex>& clean, const std::vector<Complex>& rx) {
    long double ps = 0, pn = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        ps += std::norm(clean[i]);
        pn += std::norm(rx[i] - clean[i]);
    }
    return static_cast<double>(10.0L * std::log10(ps / pn));
}

double max_abs_diff(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_SUITE("signal_sim") {

TEST_CASE("baseband is deterministic, unit power and payload dependent") {
    const IqTrace a = generate_baseband(7, 1024), b = generate_baseband(7, 1024), c = generate_baseband(8, 1024);
    CHECK(a.samples == b.samples);
    CHECK(a.samples != c.samples);
    CHECK(a.payload_id == 7);
    CHECK(std::abs(mean_power(a.samples) - 1.0) < 1e-9);
    for (std::size_t n : {64u, 100u, 4096u}) CHECK(std::abs(mean_power(generate_baseband(3, n).samples) - 1.0) < 1e-9);
    CHECK_THROWS_AS(generate_baseband(7, 63), std::invalid_argument);
}

TEST_CASE("baseband has a constant envelope away from the edges") {
    const IqTrace t = generate_baseband(1, 2048);
    for (std::size_t i = 2 * kSamplesPerChip; i + 2 * kSamplesPerChip < t.samples.size(); ++i)
        CHECK(std::norm(t.samples[i]) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("device profiles") {
    CHECK(sample_device_profile(1, 0.3) == sample_device_profile(1, 0.3));
    CHECK(sample_device_profile(1, 0.3) != sample_device_profile(2, 0.3));
    CHECK(sample_device_profile(42, 0.3).device_id == 42);

    const DeviceProfile tiny = sample_device_profile(9, 1e-9);
    CHECK(std::abs(tiny.iq_gain_imbalance - 1.0) < 1e-8);
    CHECK(std::abs(tiny.iq_phase_skew) < 1e-8);
    CHECK(std::abs(tiny.dc_offset_i) < 1e-8);
    CHECK(std::abs(tiny.dc_offset_q) < 1e-8);
    CHECK(std::abs(tiny.cfo_ppm) < 1e-6);
    CHECK(tiny.phase_noise_std < 1e-8);
    CHECK(std::abs(tiny.pa_coeff_3rd) < 1e-8);

    for (double spread : {0.5, 1.0})
        for (std::uint64_t s = 0; s < 1000; ++s) {
            const DeviceProfile p = sample_device_profile(s, spread);
            CHECK_NOTHROW(p.validate());
        }
    CHECK_THROWS_AS(sample_device_profile(1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sample_device_profile(1, 1.5), std::invalid_argument);
}

TEST_CASE("profile invariants are enforced") {
    auto bad = [](auto mutate) {
        DeviceProfile p;
        mutate(p);
        return p;
    };
    CHECK_NOTHROW(DeviceProfile{}.validate());
    CHECK_THROWS_AS(bad([](DeviceProfile& p) { p.iq_gain_imbalance = 0.5; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](DeviceProfile& p) { p.iq_gain_imbalance = 2.0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](DeviceProfile& p) { p.iq_phase_skew = -0.2; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](DeviceProfile& p) { p.dc_offset_q = 0.1; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](DeviceProfile& p) { p.cfo_ppm = 100.0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](DeviceProfile& p) { p.phase_noise_std = -1e-3; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](DeviceProfile& p) { p.pa_coeff_3rd = 0.3; }).validate(), std::invalid_argument);
}

TEST_CASE("nominal profile and noiseless channel are the identity") {
    const IqTrace base = generate_baseband(5, 4096);
    const IqTrace dev = apply_device(base, DeviceProfile{});
    CHECK(max_abs_diff(dev.samples, base.samples) < 1e-9);
    const IqTrace rx = apply_channel(dev, ChannelConfig{}, 3);
    CHECK(max_abs_diff(rx.samples, base.samples) < 1e-9);
}

TEST_CASE("DC offset shifts the I mean before normalization") {
    const IqTrace base = generate_baseband(5, 4096);
    DeviceProfile p;
    p.dc_offset_i = 0.05;
    const IqTrace out = apply_impairments(base, p);
    double mi = 0, mo = 0, qi = 0, qo = 0;
    for (std::size_t i = 0; i < base.samples.size(); ++i) {
        mi += base.samples[i].real();
        mo += out.samples[i].real();
        qi += base.samples[i].imag();
        qo += out.samples[i].imag();
    }
    const double n = static_cast<double>(base.samples.size());
    CHECK((mo - mi) / n == doctest::Approx(0.05).epsilon(1e-12));
    CHECK((qo - qi) / n == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("apply_device is deterministic, unit power, and device dependent") {
    const IqTrace base = generate_baseband(1, 8192);
    const DeviceProfile a = sample_device_profile(1, 0.3), b = sample_device_profile(2, 0.3);
    const IqTrace ya = apply_device(base, a);
    CHECK(ya.samples == apply_device(base, a).samples);
    CHECK(std::abs(mean_power(ya.samples) - 1.0) < 1e-9);
    CHECK(ya.samples != apply_device(base, b).samples);
    for (const Complex& c : ya.samples) CHECK(std::isfinite(std::norm(c)));
}

TEST_CASE("distinct devices give distinct outputs") {
    const IqTrace base = generate_baseband(1, 1024);
    int differ = 0, total = 0;
    for (std::uint64_t s = 0; s < 40; ++s) {
        const IqTrace y0 = apply_device(base, sample_device_profile(2 * s, 0.1));
        const IqTrace y1 = apply_device(base, sample_device_profile(2 * s + 1, 0.1));
        differ += y0.samples != y1.samples ? 1 : 0;
        ++total;
    }
    CHECK(differ >= total * 99 / 100);
}

TEST_CASE("AWGN calibration") {
    const IqTrace clean = generate_baseband(2, 1 << 20);
    ChannelConfig ch;
    ch.snr_db = 0.0;
    const IqTrace rx = apply_channel(clean, ch, 17);
    CHECK(std::abs(oracle_snr_db(clean.samples, rx.samples)) <= 0.1);
    CHECK(rx.snr_db == 0.0);

    const IqTrace short_clean = generate_baseband(3, 100000);
    for (double snr = -15.0; snr <= 10.0; snr += 1.0) {
        ch.snr_db = snr;
        const IqTrace y = apply_channel(short_clean, ch, 1000 + static_cast<std::uint64_t>(snr + 20));
        CHECK(std::abs(oracle_snr_db(short_clean.samples, y.samples) - snr) <= 0.15);
        CHECK(measured_snr_db(short_clean.samples, y.samples) == doctest::Approx(oracle_snr_db(short_clean.samples, y.samples)).epsilon(1e-9));
    }
    CHECK(apply_channel(short_clean, ch, 5).samples == apply_channel(short_clean, ch, 5).samples);
    CHECK(apply_channel(short_clean, ch, 5).samples != apply_channel(short_clean, ch, 6).samples);
}

TEST_CASE("fading channel") {
    const IqTrace clean = generate_baseband(2, 1 << 15);
    ChannelConfig ch;
    ch.rician_k_db = 6.0;
    ch.doppler_norm = 2e-4;
    const IqTrace faded = apply_channel(clean, ch, 4);
    CHECK(faded.samples != clean.samples);
    CHECK(faded.samples == apply_channel(clean, ch, 4).samples);
    CHECK(mean_power(faded.samples) > 0.3);
    CHECK(mean_power(faded.samples) < 3.0);

    ch.doppler_norm = 0.02;
    CHECK_THROWS_AS(apply_channel(clean, ch, 4), std::invalid_argument);
    ChannelConfig low;
    low.snr_db = -25.0;
    CHECK_THROWS_AS(apply_channel(clean, low, 4), std::invalid_argument);
}

TEST_CASE("windowize and unwindowize") {
    IqTrace t = generate_baseband(4, 1000);
    t.device_id = 3;
    t.snr_db = -5.0;
    const auto w = windowize(t, 128);
    REQUIRE(w.size() == 7);
    CHECK(w[2].device_id == 3);
    CHECK(w[2].snr_db == -5.0);
    CHECK(w[2].index == 2);
    CHECK(w[2].iq[5] == static_cast<float>(t.samples[2 * 128 + 5].real()));
    CHECK(w[2].iq[128 + 5] == static_cast<float>(t.samples[2 * 128 + 5].imag()));
    const auto back = unwindowize(w);
    REQUIRE(back.size() == 7 * 128);
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].real() == static_cast<float>(t.samples[i].real()));
        CHECK(back[i].imag() == static_cast<float>(t.samples[i].imag()));
    }
    CHECK_THROWS_AS(windowize(t, 0), std::invalid_argument);
}

TEST_CASE("dataset split and intruder exclusion") {
    DatasetSpec spec;
    spec.n_devices = 6;
    spec.intruder_id = 5;
    spec.snr_list = {0, -1, -5, -10, -15};
    spec.frames_per_cell = 3;
    spec.window_len = 64;
    spec.windows_per_frame = 7;
    spec.seed = 12;
    const Dataset d = build_dataset(spec);

    const std::size_t per_cell = 3 * 7;
    const std::size_t authorized = 5 * 5 * per_cell;
    CHECK(d.train.size() == static_cast<std::size_t>(std::llround(0.90 * authorized)));
    CHECK(d.train.size() + d.validation.size() == static_cast<std::size_t>(std::llround(0.95 * authorized)));
    CHECK(d.test.size() == authorized - d.train.size() - d.validation.size() + 5 * per_cell);

    for (const auto& w : d.train) CHECK(w.device_id != 5);
    for (const auto& w : d.validation) CHECK(w.device_id != 5);
    std::size_t intruder_test = 0;
    for (const auto& w : d.test) intruder_test += w.device_id == 5 ? 1 : 0;
    CHECK(intruder_test == 5 * per_cell);

    std::set<std::tuple<std::int64_t, double, std::uint32_t, std::uint32_t>> seen;
    for (const auto* part : {&d.train, &d.validation, &d.test})
        for (const auto& w : *part) CHECK(seen.insert({w.device_id, w.snr_db, w.frame, w.index}).second);
    CHECK(seen.size() == 6 * 5 * per_cell);

    const Dataset again = build_dataset(spec);
    REQUIRE(again.test.size() == d.test.size());
    for (std::size_t i = 0; i < d.test.size(); ++i) CHECK(again.test[i].iq == d.test[i].iq);
}

TEST_CASE("dataset covers every SNR level per device") {
    std::vector<double> usrp;
    for (int s = -10; s <= 10; s += 2) usrp.push_back(s);
    const Dataset d = build_dataset(5, 2, usrp, 1, 64, 3);
    std::set<std::pair<std::int64_t, double>> cells;
    for (const auto* part : {&d.train, &d.validation, &d.test})
        for (const auto& w : *part) cells.insert({w.device_id, w.snr_db});
    CHECK(usrp.size() == 11);
    CHECK(cells.size() == 5 * 11);
}

TEST_CASE("dataset argument checks") {
    CHECK_THROWS_AS(build_dataset(1, 0, {0.0}, 1, 64, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_dataset(3, 3, {0.0}, 1, 64, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_dataset(3, -1, {0.0}, 1, 64, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_dataset(3, 1, {}, 1, 64, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_dataset(3, 1, {0.0}, 1, 32, 1), std::invalid_argument);
}

}  // TEST_SUITE
