#include "dac/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dac/errors.hpp"
#include "dac/util.hpp"

namespace dac::experiment {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr int kManifestVersion = 1;

const char* optimizer_name(cae::Optimizer o) { return o == cae::Optimizer::adam ? "adam" : "sgd"; }

cae::Optimizer parse_optimizer(const std::string& s) {
    if (s == "adam") return cae::Optimizer::adam;
    if (s == "sgd") return cae::Optimizer::sgd;
    throw std::invalid_argument("config: unknown optimizer '" + s + "'");
}

const char* mode_name(protocol::AuthMode m) { return m == protocol::AuthMode::exact ? "exact" : "statistical"; }

protocol::AuthMode parse_mode(const std::string& s) {
    if (s == "exact") return protocol::AuthMode::exact;
    if (s == "statistical") return protocol::AuthMode::statistical;
    throw std::invalid_argument("config: unknown policy mode '" + s + "'");
}

std::string hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (std::uint8_t b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 15]);
    }
    return s;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Copies obj[key] into `out` when present; rejects keys that the section does not know.
class Section {
public:
    Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw std::invalid_argument("config: '" + name_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        known_.push_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument("config: bad value for '" + name_ + "." + key + "'");
        }
    }

    const Json* child(const char* key) {
        known_.push_back(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (std::find(known_.begin(), known_.end(), it.key()) == known_.end())
                throw std::invalid_argument("config: unknown key '" + name_ + "." + it.key() + "'");
    }

private:
    const Json& j_;
    std::string name_;
    std::vector<std::string> known_;
};

Json config_to_json(const ExperimentConfig& c) {
    Json j;
    j["fleet"] = {{"n_devices", c.fleet.n_devices},
                  {"intruder_id", c.fleet.intruder_id},
                  {"spread", c.fleet.spread},
                  {"seed", c.fleet.seed}};
    j["signal"] = {{"window_len", c.signal.window_len},
                   {"windows_per_frame", c.signal.windows_per_frame},
                   {"frames_per_cell", c.signal.frames_per_cell},
                   {"snr_list", c.signal.snr_list},
                   {"mobility", c.signal.mobility},
                   {"payload_id", c.signal.payload_id},
                   {"vary_payload", c.signal.vary_payload}};
    j["model"] = {{"kernel", c.model.kernel}, {"channels", c.model.channels}, {"latent_channels", c.model.latent_channels}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"optimizer", optimizer_name(c.train.optimizer)},
                  {"early_stop_patience", c.train.early_stop_patience},
                  {"steps_per_epoch", c.train.steps_per_epoch},
                  {"validation_limit", c.train.validation_limit},
                  {"single_precision", c.train.single_precision}};
    j["policy"] = {{"mode", mode_name(c.policy.mode)},
                   {"d_max", c.policy.d_max},
                   {"p_min", c.policy.p_min},
                   {"min_windows", c.policy.min_windows}};
    j["output_dir"] = c.output_dir;
    return j;
}

ExperimentConfig config_from_json(const Json& j, ExperimentConfig c) {
    Section root(j, "config");
    if (const Json* s = root.child("fleet")) {
        Section f(*s, "fleet");
        f.get("n_devices", c.fleet.n_devices);
        f.get("intruder_id", c.fleet.intruder_id);
        f.get("spread", c.fleet.spread);
        f.get("seed", c.fleet.seed);
        f.finish();
    }
    if (const Json* s = root.child("signal")) {
        Section g(*s, "signal");
        g.get("window_len", c.signal.window_len);
        g.get("windows_per_frame", c.signal.windows_per_frame);
        g.get("frames_per_cell", c.signal.frames_per_cell);
        g.get("snr_list", c.signal.snr_list);
        g.get("mobility", c.signal.mobility);
        g.get("payload_id", c.signal.payload_id);
        g.get("vary_payload", c.signal.vary_payload);
        g.finish();
    }
    if (const Json* s = root.child("model")) {
        Section m(*s, "model");
        m.get("kernel", c.model.kernel);
        m.get("channels", c.model.channels);
        m.get("latent_channels", c.model.latent_channels);
        m.finish();
    }
    if (const Json* s = root.child("train")) {
        Section t(*s, "train");
        std::string opt = optimizer_name(c.train.optimizer);
        t.get("epochs", c.train.epochs);
        t.get("batch_size", c.train.batch_size);
        t.get("learning_rate", c.train.learning_rate);
        t.get("optimizer", opt);
        t.get("early_stop_patience", c.train.early_stop_patience);
        t.get("steps_per_epoch", c.train.steps_per_epoch);
        t.get("validation_limit", c.train.validation_limit);
        t.get("single_precision", c.train.single_precision);
        t.finish();
        c.train.optimizer = parse_optimizer(opt);
    }
    if (const Json* s = root.child("policy")) {
        Section p(*s, "policy");
        std::string mode = mode_name(c.policy.mode);
        p.get("mode", mode);
        p.get("d_max", c.policy.d_max);
        p.get("p_min", c.policy.p_min);
        p.get("min_windows", c.policy.min_windows);
        p.finish();
        c.policy.mode = parse_mode(mode);
    }
    root.get("output_dir", c.output_dir);
    root.finish();
    c.model.window_len = c.signal.window_len;
    c.validate();
    return c;
}

Json parse_json(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(what + ": " + e.what());
    }
}

std::string read_text(const fs::path& p) {
    const auto bytes = read_file(p.string());
    return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& p, const std::string& text) {
    write_file(p.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::string cell_stem(int device, std::size_t snr_index) {
    return "dev" + std::to_string(device) + "_snr" + std::to_string(snr_index);
}

char split_char(signal::Split s) {
    switch (s) {
        case signal::Split::train: return 'T';
        case signal::Split::validation: return 'V';
        case signal::Split::test: return 'E';
    }
    return '?';
}

std::vector<std::uint8_t> frames_to_bytes(const std::vector<signal::IqTrace>& frames) {
    std::vector<float> v;
    for (const auto& f : frames)
        for (const auto& c : f.samples) {
            v.push_back(static_cast<float>(c.real()));
            v.push_back(static_cast<float>(c.imag()));
        }
    ByteWriter w;
    w.put_f32(v);
    return w.take();
}

std::vector<signal::Complex> bytes_to_samples(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto v = r.get_f32(bytes.size() / 4);
    std::vector<signal::Complex> out(v.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[2 * i], v[2 * i + 1]};
    return out;
}

Json profile_json(const signal::DeviceProfile& p) {
    return {{"device_id", p.device_id},
            {"iq_gain_imbalance", p.iq_gain_imbalance},
            {"iq_phase_skew", p.iq_phase_skew},
            {"dc_offset_i", p.dc_offset_i},
            {"dc_offset_q", p.dc_offset_q},
            {"cfo_ppm", p.cfo_ppm},
            {"phase_noise_std", p.phase_noise_std},
            {"pa_coeff_3rd", p.pa_coeff_3rd}};
}

struct Manifest {
    ExperimentConfig cfg;
    fs::path dir;
    Json cells;
};

Manifest read_manifest(const fs::path& path) {
    Manifest m;
    m.dir = path.parent_path();
    Json j;
    try {
        j = parse_json(read_text(path), "manifest " + path.string());
        if (j.value("format", "") != "dac-manifest" || j.value("version", 0) != kManifestVersion)
            throw IoError("manifest " + path.string() + ": unsupported format");
        m.cfg = config_from_json(j.at("config"), ExperimentConfig{});
        m.cells = j.at("cells");
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("manifest: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("manifest: ") + e.what());
    }
    return m;
}

const Json& find_cell(const Manifest& m, int device, std::size_t snr_index) {
    for (const Json& c : m.cells)
        if (c.at("device").get<int>() == device && c.at("snr_index").get<std::size_t>() == snr_index) return c;
    throw std::invalid_argument("manifest has no cell for device " + std::to_string(device) + ", snr index " +
                                std::to_string(snr_index));
}

std::vector<signal::Complex> read_cell_samples(const Manifest& m, const Json& cell) {
    const fs::path file = m.dir / cell.at("file").get<std::string>();
    const auto bytes = read_file(file.string());
    const std::size_t expected = cell.at("samples").get<std::size_t>() * 8;
    if (bytes.size() != expected)
        throw IoError(file.string() + ": expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
    if (hex64(fnv1a64(bytes)) != cell.at("fnv1a64").get<std::string>()) throw IoError(file.string() + ": checksum mismatch");
    return bytes_to_samples(bytes);
}

Json ks_json(const protocol::KsCell& c) {
    return {{"statistic", c.ks.statistic}, {"p_value", c.ks.p_value}, {"n", c.ks.n}, {"m", c.ks.m}, {"accepted", c.accepted}};
}

Json report_json(const protocol::MatrixReport& r) {
    Json rows = Json::array();
    for (const auto& row : r.rows) {
        Json cells = Json::array();
        for (const auto& line : row.cells) {
            Json l = Json::array();
            for (const auto& c : line) l.push_back(ks_json(c));
            cells.push_back(std::move(l));
        }
        Json exact = Json::array();
        for (const auto& c : row.exact_diagonal) exact.push_back(ks_json(c));
        rows.push_back({{"label", row.label},
                        {"snr_db", row.snr_db ? Json(*row.snr_db) : Json(nullptr)},
                        {"window_counts", row.window_counts},
                        {"cells", std::move(cells)},
                        {"exact_diagonal", std::move(exact)}});
    }
    return {{"mode", r.mode}, {"rows", std::move(rows)}};
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

void text_report(std::ostringstream& os, const protocol::MatrixReport& r, int n) {
    const int cw = 16;
    for (const auto& row : r.rows) {
        os << "[" << r.mode << "] " << row.label << "    test windows:";
        for (std::size_t c : row.window_counts) os << ' ' << c;
        os << "\n" << std::setw(8) << "";
        for (int j = 0; j < n; ++j) os << std::setw(cw) << ("dev " + std::to_string(j));
        os << "\n";
        for (int i = 0; i < n; ++i) {
            os << std::setw(8) << ("dev " + std::to_string(i));
            for (int j = 0; j < n; ++j) {
                const auto& ks = row.cells[i][j].ks;
                os << std::setw(cw) << ("(" + fixed(ks.statistic, 3) + ", " + fixed(ks.p_value, 3) + ")");
            }
            os << "\n";
        }
        os << std::setw(8) << "exact";
        for (int j = 0; j < n; ++j) {
            const auto& ks = row.exact_diagonal[j].ks;
            os << std::setw(cw) << ("(" + fixed(ks.statistic, 3) + ", " + fixed(ks.p_value, 3) + ")");
        }
        os << "\n\n";
    }
}

}  // namespace

// ---------------------------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    dataset_spec().validate();
    cae::Architecture arch = model;
    arch.window_len = signal.window_len;
    arch.validate();
    if (model.window_len != signal.window_len) throw std::invalid_argument("config: model.window_len must equal signal.window_len");
    train.validate();
    policy.validate();
}

signal::DatasetSpec ExperimentConfig::dataset_spec() const {
    signal::DatasetSpec s;
    s.n_devices = fleet.n_devices;
    s.intruder_id = fleet.intruder_id;
    s.spread = fleet.spread;
    s.seed = derive_seed(fleet.seed, "dataset");
    s.snr_list = signal.snr_list;
    s.frames_per_cell = signal.frames_per_cell;
    s.window_len = signal.window_len;
    s.windows_per_frame = signal.windows_per_frame;
    s.payload_id = signal.payload_id;
    s.vary_payload = signal.vary_payload;
    s.mobility = signal.mobility;
    return s;
}

std::uint64_t ExperimentConfig::key_init_seed() const { return derive_seed(fleet.seed, "key-init"); }

cae::TrainConfig ExperimentConfig::train_config() const {
    cae::TrainConfig t = train;
    t.seed = derive_seed(fleet.seed, "train");
    return t;
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    c.train.epochs = 20;
    c.train.batch_size = 4;
    c.train.learning_rate = 1e-3;
    c.train.steps_per_epoch = 300;
    c.train.validation_limit = 256;
    c.train.early_stop_patience = 5;
    if (name == "zigbee6") {
        c.fleet = {6, 5, 0.3, 1};
        c.signal.snr_list = {0.0, -1.0, -5.0, -10.0, -15.0};
        c.signal.frames_per_cell = 160;
        c.signal.mobility = false;
        c.output_dir = "out/zigbee6";
    } else if (name == "usrp5") {
        c.fleet = {5, 2, 0.3, 1};
        c.signal.snr_list.clear();
        for (int s = -10; s <= 10; s += 2) c.signal.snr_list.push_back(s);
        c.signal.frames_per_cell = 48;
        c.signal.mobility = true;
        c.output_dir = "out/usrp5";
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    c.model.window_len = c.signal.window_len;
    return c;
}

std::vector<std::string> preset_names() { return {"zigbee6", "usrp5"}; }

std::string to_json(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

ExperimentConfig from_json(const std::string& text, const ExperimentConfig& base) {
    return config_from_json(parse_json(text, "config"), base);
}

ExperimentConfig load_config(const fs::path& path, const ExperimentConfig& base) { return from_json(read_text(path), base); }

// ---------------------------------------------------------------------------------------------

SimulateSummary cmd_simulate(const ExperimentConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    const signal::DatasetSpec spec = cfg.dataset_spec();
    ensure_dir(out_dir / "traces");

    signal::DatasetBuilder builder(spec);
    Json cells = Json::array();
    SimulateSummary sum;
    for (int d = 0; d < spec.n_devices; ++d) {
        for (std::size_t s = 0; s < spec.snr_list.size(); ++s) {
            const signal::Cell cell = signal::simulate_cell(spec, d, s);
            const auto split = builder.add_cell(cell);

            const std::string stem = cell_stem(d, s);
            const auto bytes = frames_to_bytes(cell.frames);
            write_file((out_dir / "traces" / (stem + ".iq")).string(), bytes);

            std::vector<int> mobile;
            for (int f = 0; f < spec.frames_per_cell; ++f)
                if (spec.mobility && f % 2 == 1) mobile.push_back(f);
            const Json sidecar = {{"device_id", d},
                                  {"snr_db", cell.snr_db},
                                  {"snr_index", s},
                                  {"payload_id", spec.payload_id},
                                  {"vary_payload", spec.vary_payload},
                                  {"frames", spec.frames_per_cell},
                                  {"frame_len", spec.frame_len()},
                                  {"window_len", spec.window_len},
                                  {"sample_rate_hz", signal::kSampleRateHz},
                                  {"seed", spec.seed},
                                  {"sample_format", "f32le interleaved I,Q"},
                                  {"mobile_frames", mobile},
                                  {"intruder", d == spec.intruder_id},
                                  {"profile", profile_json(signal::fleet_profile(spec, d))}};
            write_text(out_dir / "traces" / (stem + ".json"), sidecar.dump(2) + "\n");

            std::string split_str;
            for (auto x : split) {
                split_str.push_back(split_char(x));
                (x == signal::Split::train ? sum.train : x == signal::Split::validation ? sum.validation : sum.test)++;
            }
            cells.push_back({{"device", d},
                             {"snr_index", s},
                             {"snr_db", cell.snr_db},
                             {"file", "traces/" + stem + ".iq"},
                             {"sidecar", "traces/" + stem + ".json"},
                             {"samples", spec.frame_len() * static_cast<std::size_t>(spec.frames_per_cell)},
                             {"fnv1a64", hex64(fnv1a64(bytes))},
                             {"split", split_str}});
        }
    }

    const Json manifest = {{"format", "dac-manifest"},
                           {"version", kManifestVersion},
                           {"config", config_to_json(cfg)},
                           {"split_legend", {{"T", "train"}, {"V", "validation"}, {"E", "test"}}},
                           {"counts", {{"train", sum.train}, {"validation", sum.validation}, {"test", sum.test}}},
                           {"cells", std::move(cells)}};
    sum.manifest = out_dir / kManifestName;
    write_text(sum.manifest, manifest.dump(2) + "\n");
    return sum;
}

signal::Dataset load_dataset(const fs::path& manifest_path, ExperimentConfig* cfg_out) {
    const Manifest m = read_manifest(manifest_path);
    const signal::DatasetSpec spec = m.cfg.dataset_spec();
    signal::DatasetBuilder builder(spec);
    try {
        for (int d = 0; d < spec.n_devices; ++d) {
            for (std::size_t s = 0; s < spec.snr_list.size(); ++s) {
                const Json& c = find_cell(m, d, s);
                const auto samples = read_cell_samples(m, c);
                signal::Cell cell;
                cell.device = d;
                cell.snr_index = s;
                cell.snr_db = spec.snr_list[s];
                const std::size_t flen = spec.frame_len();
                if (samples.size() != flen * static_cast<std::size_t>(spec.frames_per_cell))
                    throw IoError("trace for " + cell_stem(d, s) + " does not match the configured frame count");
                for (int f = 0; f < spec.frames_per_cell; ++f) {
                    signal::IqTrace t;
                    t.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(f * flen),
                                     samples.begin() + static_cast<std::ptrdiff_t>((f + 1) * flen));
                    t.device_id = d;
                    t.snr_db = cell.snr_db;
                    t.payload_id = spec.payload_id;
                    cell.frames.push_back(std::move(t));
                }
                std::string got;
                for (auto x : builder.add_cell(cell)) got.push_back(split_char(x));
                if (got != c.at("split").get<std::string>()) throw IoError("split of " + cell_stem(d, s) + " disagrees with the manifest");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("manifest: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("manifest: ") + e.what());
    }
    if (cfg_out) *cfg_out = m.cfg;
    return std::move(builder).finish();
}

signal::IqTrace load_cell_trace(const fs::path& manifest_path, int device, std::size_t snr_index) {
    const Manifest m = read_manifest(manifest_path);
    const Json& c = find_cell(m, device, snr_index);
    signal::IqTrace t;
    t.samples = read_cell_samples(m, c);
    t.device_id = device;
    t.snr_db = c.at("snr_db").get<double>();
    t.payload_id = m.cfg.signal.payload_id;
    return t;
}

// ---------------------------------------------------------------------------------------------

TrainOutput train_key(const ExperimentConfig& cfg, const signal::Dataset& data) {
    cfg.validate();
    TrainOutput out{cae::CaeModel(cfg.model, cfg.key_init_seed()), {}};
    out.report = cae::train(out.key, data, cfg.train_config());
    return out;
}

std::string train_report_json(const cae::TrainReport& report, const cae::CaeModel& key) {
    Json epochs = Json::array();
    for (const auto& e : report.epochs)
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_loss", e.validation_loss}});
    const auto fp = key.fingerprint();
    const Json j = {{"initial_validation_loss", report.initial_validation_loss},
                    {"final_validation_loss", report.final_validation_loss()},
                    {"best_epoch", report.best_epoch},
                    {"stopped_early", report.stopped_early},
                    {"parameter_count", key.parameter_count()},
                    {"model_fingerprint", hex(fp)},
                    {"epochs", std::move(epochs)}};
    return j.dump(2) + "\n";
}

TrainOutput cmd_train(const ExperimentConfig& cfg, const fs::path& manifest, const fs::path& out_dir) {
    const signal::Dataset data = load_dataset(manifest);
    TrainOutput out = train_key(cfg, data);
    ensure_dir(out_dir);
    cae::save_weights(out.key, (out_dir / kKeyName).string());
    write_text(out_dir / kTrainReportName, train_report_json(out.report, out.key));
    return out;
}

std::string matrix_json(const protocol::KsMatrix& m) {
    Json detection = Json::array();
    for (const auto& row : m.detection) {
        Json devs = Json::array();
        for (const auto& d : row.devices)
            devs.push_back({{"device", d.device}, {"enrolled", d.enrolled}, {"flagged_intruder", d.flagged_intruder}, {"correct", d.correct}});
        detection.push_back({{"label", row.label}, {"accuracy", row.accuracy}, {"devices", std::move(devs)}});
    }
    const Json j = {{"n_devices", m.n_devices},
                    {"intruder_id", m.intruder_id},
                    {"policy",
                     {{"mode", mode_name(m.policy.mode)},
                      {"d_max", m.policy.d_max},
                      {"p_min", m.policy.p_min},
                      {"min_windows", m.policy.min_windows}}},
                    {"dac", report_json(m.dac)},
                    {"raw", report_json(m.raw)},
                    {"detection", std::move(detection)},
                    {"overall_accuracy", m.overall_accuracy}};
    return j.dump(2) + "\n";
}

std::string matrix_text(const protocol::KsMatrix& m) {
    std::ostringstream os;
    os << "K-S (statistic, p-value); rows: device of interest, columns: device; diagonal: disjoint halves\n";
    os << "policy: " << mode_name(m.policy.mode) << ", D <= " << m.policy.d_max << ", p >= " << m.policy.p_min
       << "; intruder: dev " << m.intruder_id << "\n\n";
    text_report(os, m.dac, m.n_devices);
    text_report(os, m.raw, m.n_devices);
    os << "intruder detection\n";
    for (const auto& row : m.detection) {
        os << std::setw(24) << std::left << row.label << std::right << " accuracy " << fixed(row.accuracy, 2) << "  flagged:";
        bool any = false;
        for (const auto& d : row.devices)
            if (d.flagged_intruder) {
                os << " dev " << d.device;
                any = true;
            }
        if (!any) os << " none";
        os << "\n";
    }
    os << "overall accuracy (mixed): " << fixed(m.overall_accuracy, 2) << "\n";
    return os.str();
}

protocol::KsMatrix cmd_evaluate(const ExperimentConfig& cfg, const fs::path& manifest, const fs::path& key,
                                const fs::path& out_dir) {
    ExperimentConfig data_cfg;
    const signal::Dataset data = load_dataset(manifest, &data_cfg);
    const cae::CaeModel model = cae::load_weights(key.string(), data_cfg.model);
    const protocol::KsMatrix m = protocol::evaluate_matrix(model, data, cfg.policy);
    ensure_dir(out_dir);
    write_text(out_dir / kMatrixJsonName, matrix_json(m));
    write_text(out_dir / kMatrixTextName, matrix_text(m));
    return m;
}

std::vector<std::uint8_t> cmd_send(const ExperimentConfig& cfg, const fs::path& manifest, const fs::path& key, int device,
                                   std::size_t snr_index, bool confidential, std::optional<std::uint64_t> rekey_seed) {
    cae::CaeModel model = cae::load_weights(key.string());
    if (rekey_seed) model = cae::CaeModel(model.arch(), *rekey_seed);
    const signal::IqTrace trace = load_cell_trace(manifest, device, snr_index);
    const auto source = confidential ? protocol::DacSource::latent : protocol::DacSource::raw;
    const protocol::Dac dac = protocol::compute_dac(model, trace, model.arch().window_len, cfg.policy.min_windows, source);
    return protocol::encode_message(protocol::build_message(trace, dac, confidential, model));
}

std::string decision_json(const protocol::AuthDecision& d) {
    const Json j = {{"verdict", d.verdict == protocol::Verdict::authorized ? "authorized" : "intruder"},
                    {"statistic", d.ks.statistic},
                    {"p_value", d.ks.p_value},
                    {"n", d.ks.n},
                    {"m", d.ks.m},
                    {"fingerprint_match", d.fingerprint_match},
                    {"policy",
                     {{"mode", mode_name(d.policy_used.mode)},
                      {"d_max", d.policy_used.d_max},
                      {"p_min", d.policy_used.p_min},
                      {"min_windows", d.policy_used.min_windows}}}};
    return j.dump(2) + "\n";
}

AuthenticateOutcome cmd_authenticate(const fs::path& key, const fs::path& message, const protocol::AuthPolicy& policy) {
    auto fail = [](int code, const std::string& kind, const std::string& what) {
        const Json j = {{"error", kind}, {"message", what}};
        return AuthenticateOutcome{code, j.dump(2) + "\n"};
    };
    try {
        const protocol::DacMessage msg = protocol::parse_message(read_file(message.string()));
        const cae::CaeModel model = cae::load_weights(key.string());
        const protocol::AuthDecision d = protocol::authenticate(msg, model, policy);
        return {d.verdict == protocol::Verdict::authorized ? kExitOk : kExitIntruder, decision_json(d)};
    } catch (const IntegrityError& e) {
        return fail(kExitInputError, "integrity", e.what());
    } catch (const CorruptKey& e) {
        return fail(kExitInputError, "corrupt_key", e.what());
    } catch (const IoError& e) {
        return fail(kExitInputError, "io", e.what());
    } catch (const IncompatibleKey& e) {
        return fail(kExitKeyMismatch, "key_mismatch", e.what());
    } catch (const InsufficientSamples& e) {
        return fail(kExitInsufficientSamples, "insufficient_samples", e.what());
    } catch (const std::invalid_argument& e) {
        return fail(kExitKeyMismatch, "key_mismatch", e.what());
    } catch (const std::exception& e) {
        return fail(kExitRuntimeError, "runtime", e.what());
    }
}

}  // namespace dac::experiment
