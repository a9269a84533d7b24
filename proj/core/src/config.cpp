#include "cardiosep/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cardiosep/error.hpp"

namespace cardiosep::io {

vae::Architecture RunConfig::architecture() const {
    return {n_fft / 2 + 1, latent_dim, hidden, nn::Activation::tanh};
}

vae::TrainConfig RunConfig::train_config() const {
    return {epochs, batch, lr, beta, snapshot_stride, lr_schedule};
}

siggen::HeartParams RunConfig::heart() const {
    siggen::HeartParams h;
    h.rate_bpm = heart_bpm;
    return h;
}

siggen::LungParams RunConfig::lung() const {
    siggen::LungParams l;
    l.breaths_per_min = breaths_per_min;
    l.band_low = lung_band_low;
    l.band_high = lung_band_high;
    return l;
}

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    throw InvalidArgument("config key '" + key + "': " + why);
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) bad(key, "expected a number, got '" + v + "'");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, "expected a non-negative integer, got '" + v + "'");
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field real(T RunConfig::*member, const char* key) {
    return {[member, key](RunConfig& c, const std::string& v) { c.*member = parse_double(key, v); },
            [member](const RunConfig& c) { return fmt_double(c.*member); }};
}

template <typename T>
Field integer(T RunConfig::*member, const char* key) {
    return {[member, key](RunConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_uint(key, v)); },
            [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

// Ordered: to_text emits keys in this order.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"sample_rate", real(&RunConfig::sample_rate, "sample_rate")},
        {"n_fft", integer(&RunConfig::n_fft, "n_fft")},
        {"hop", integer(&RunConfig::hop, "hop")},
        {"floor", real(&RunConfig::floor, "floor")},
        {"latent_dim", integer(&RunConfig::latent_dim, "latent_dim")},
        {"hidden",
         {[](RunConfig& c, const std::string& v) {
              c.hidden.clear();
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ',')) c.hidden.push_back(parse_uint("hidden", trim(item)));
          },
          [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.hidden[i]);
              return s;
          }}},
        {"beta", real(&RunConfig::beta, "beta")},
        {"lr", real(&RunConfig::lr, "lr")},
        {"lr_schedule",
         {[](RunConfig& c, const std::string& v) {
              try {
                  c.lr_schedule = vae::lr_schedule_from_string(v);
              } catch (const InvalidArgument&) {
                  bad("lr_schedule", "expected cosine or constant, got '" + v + "'");
              }
          },
          [](const RunConfig& c) { return std::string(vae::to_string(c.lr_schedule)); }}},
        {"batch", integer(&RunConfig::batch, "batch")},
        {"epochs", integer(&RunConfig::epochs, "epochs")},
        {"snapshot_stride", integer(&RunConfig::snapshot_stride, "snapshot_stride")},
        {"clusters", integer(&RunConfig::clusters, "clusters")},
        {"perplexity", real(&RunConfig::perplexity, "perplexity")},
        {"tsne_iters", integer(&RunConfig::tsne_iters, "tsne_iters")},
        {"restarts", integer(&RunConfig::restarts, "restarts")},
        {"seed", integer(&RunConfig::seed, "seed")},
        {"duration", real(&RunConfig::duration, "duration")},
        {"heart_gain", real(&RunConfig::heart_gain, "heart_gain")},
        {"lung_gain", real(&RunConfig::lung_gain, "lung_gain")},
        {"heart_bpm", real(&RunConfig::heart_bpm, "heart_bpm")},
        {"breaths_per_min", real(&RunConfig::breaths_per_min, "breaths_per_min")},
        {"lung_band_low", real(&RunConfig::lung_band_low, "lung_band_low")},
        {"lung_band_high", real(&RunConfig::lung_band_high, "lung_band_high")},
        {"segment_seconds", real(&RunConfig::segment_seconds, "segment_seconds")},
        {"wav_encoding",
         {[](RunConfig& c, const std::string& v) {
              try {
                  c.wav_encoding = wav_encoding_from_string(v);
              } catch (const UnsupportedFormat&) {
                  bad("wav_encoding", "expected pcm16 or float32, got '" + v + "'");
              }
          },
          [](const RunConfig& c) { return std::string(c.wav_encoding == WavEncoding::pcm16 ? "pcm16" : "float32"); }}},
    };
    return table;
}

}  // namespace

void RunConfig::validate() const {
    if (!(sample_rate > 0.0) || sample_rate != std::floor(sample_rate)) bad("sample_rate", "must be a positive integer");
    if (!dsp::is_power_of_two(n_fft) || n_fft < 4) bad("n_fft", "must be a power of two >= 4");
    if (!dsp::satisfies_cola(n_fft, hop)) bad("hop", "must satisfy constant overlap-add for Hann (e.g. n_fft/4)");
    if (!(floor > 0.0)) bad("floor", "must be > 0");
    if (latent_dim == 0) bad("latent_dim", "must be >= 1");
    if (hidden.empty()) bad("hidden", "needs at least one layer width");
    for (auto h : hidden) {
        if (h == 0) bad("hidden", "layer widths must be >= 1");
    }
    if (!(beta >= 0.0)) bad("beta", "must be >= 0");
    if (!(lr > 0.0)) bad("lr", "must be > 0");
    if (batch == 0) bad("batch", "must be >= 1");
    if (epochs == 0) bad("epochs", "must be >= 1");
    if (snapshot_stride == 0) bad("snapshot_stride", "must be >= 1");
    if (clusters < 1 || clusters > 4) bad("clusters", "must be in [1, 4]");
    if (!(perplexity > 1.0)) bad("perplexity", "must be > 1");
    if (tsne_iters < 250) bad("tsne_iters", "must be >= 250");
    if (restarts == 0) bad("restarts", "must be >= 1");
    if (!(duration > 0.0)) bad("duration", "must be > 0");
    if (!(heart_bpm > 0.0)) bad("heart_bpm", "must be > 0");
    if (heart().s1_s2_interval >= 60.0 / heart_bpm) bad("heart_bpm", "too fast for the 0.3 s S1-S2 interval");
    if (!(breaths_per_min > 0.0)) bad("breaths_per_min", "must be > 0");
    if (!(lung_band_low > 0.0 && lung_band_low < lung_band_high)) bad("lung_band_low", "need 0 < low < high");
    if (!(lung_band_high < sample_rate / 2.0)) bad("lung_band_high", "must be below Nyquist");
    if (!(heart().s2_freq < sample_rate / 2.0)) bad("sample_rate", "too low for the heart model");
    if (!(segment_seconds >= 0.0)) bad("segment_seconds", "must be >= 0");
}

RunConfig parse_config(const std::string& text) {
    std::map<std::string, const Field*> index;
    for (const auto& [key, field] : fields()) index[key] = &field;

    RunConfig cfg;
    std::stringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = index.find(key);
        if (it == index.end()) throw InvalidArgument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        it->second->set(cfg, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
    return out;
}

}  // namespace cardiosep::io
