#include "cardiosep/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "cardiosep/atomic_file.hpp"
#include "cardiosep/error.hpp"

namespace cardiosep::io {

namespace {

constexpr const char* kMagic = "cardiosep-checkpoint";

struct Block {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    std::span<const double> values;
};

std::vector<Block> blocks_of(const Checkpoint& c) {
    std::vector<Block> blocks;
    for (const auto* set : {&c.model.encoder, &c.model.decoder}) {
        for (const auto& l : set->layers) {
            blocks.push_back({l.name + ".weight", l.weight.rows(), l.weight.cols(), l.weight.data()});
            blocks.push_back({l.name + ".bias", 1, l.bias.size(), l.bias});
        }
    }
    blocks.push_back({"stats.mean", 1, c.stats.mean.size(), c.stats.mean});
    blocks.push_back({"stats.std", 1, c.stats.std.size(), c.stats.std});
    return blocks;
}

void append_double(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double read_double(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    return std::bit_cast<double>(bits);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
    c.model.validate();
    if (c.stats.mean.size() != c.model.arch.input_dim || c.stats.std.size() != c.model.arch.input_dim) {
        throw InvalidArgument("feature stats do not match the model input dimension");
    }
    std::string header = std::string(kMagic) + "\n";
    header += "version " + std::to_string(kCheckpointVersion) + "\n";
    header += "epoch " + std::to_string(c.epoch) + "\n";
    header += "seed " + std::to_string(c.config.seed) + "\n";
    header += "beta " + fmt_double(c.model.beta) + "\n";
    header += "arch.input_dim " + std::to_string(c.model.arch.input_dim) + "\n";
    header += "arch.latent_dim " + std::to_string(c.model.arch.latent_dim) + "\n";
    std::string hidden;
    for (std::size_t i = 0; i < c.model.arch.hidden.size(); ++i) {
        hidden += (i ? "," : "") + std::to_string(c.model.arch.hidden[i]);
    }
    header += "arch.hidden " + hidden + "\n";
    header += "arch.activation " + std::string(nn::to_string(c.model.arch.hidden_activation)) + "\n";
    std::stringstream cfg(to_text(c.config));
    for (std::string line; std::getline(cfg, line);) {
        const auto eq = line.find(" = ");
        header += "config." + line.substr(0, eq) + " " + line.substr(eq + 3) + "\n";
    }
    const auto blocks = blocks_of(c);
    for (const auto& b : blocks) {
        header += "block " + b.name + " " + std::to_string(b.rows) + " " + std::to_string(b.cols) + "\n";
    }
    header += "data\n";

    std::string out = header;
    for (const auto& b : blocks) {
        for (double v : b.values) append_double(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        std::size_t end = pos;
        while (end < bytes.size() && bytes[end] != '\n') ++end;
        if (end >= bytes.size()) throw CorruptionError("checkpoint header is truncated");
        std::string line(reinterpret_cast<const char*>(bytes.data() + pos), end - pos);
        pos = end + 1;
        return line;
    };

    if (next_line() != kMagic) throw CorruptionError("not a checkpoint file (bad magic line)");
    {
        std::istringstream ss(next_line());
        std::string word;
        int version = -1;
        if (!(ss >> word >> version) || word != "version") throw CorruptionError("checkpoint version line is malformed");
        if (version != kCheckpointVersion) throw VersionError(version, kCheckpointVersion);
    }

    std::map<std::string, std::string> meta;
    std::string config_text;
    struct Shape {
        std::string name;
        std::size_t rows;
        std::size_t cols;
    };
    std::vector<Shape> shapes;
    for (std::string line = next_line(); line != "data"; line = next_line()) {
        const auto space = line.find(' ');
        if (space == std::string::npos) throw CorruptionError("malformed checkpoint header line '" + line + "'");
        const std::string key = line.substr(0, space);
        const std::string value = line.substr(space + 1);
        if (key == "block") {
            std::istringstream ss(value);
            Shape s{};
            if (!(ss >> s.name >> s.rows >> s.cols)) throw CorruptionError("malformed block line '" + line + "'");
            shapes.push_back(s);
        } else if (key.rfind("config.", 0) == 0) {
            config_text += key.substr(7) + " = " + value + "\n";
        } else {
            meta[key] = value;
        }
    }

    Checkpoint c;
    try {
        c.config = parse_config(config_text);
        c.epoch = std::stoul(meta.at("epoch"));
        c.model.beta = std::stod(meta.at("beta"));
        c.model.arch.input_dim = std::stoul(meta.at("arch.input_dim"));
        c.model.arch.latent_dim = std::stoul(meta.at("arch.latent_dim"));
        c.model.arch.hidden.clear();
        std::stringstream hs(meta.at("arch.hidden"));
        for (std::string item; std::getline(hs, item, ',');) c.model.arch.hidden.push_back(std::stoul(item));
        c.model.arch.hidden_activation = nn::activation_from_string(meta.at("arch.activation"));
    } catch (const CorruptionError&) {
        throw;
    } catch (const std::exception& e) {
        throw CorruptionError(std::string("checkpoint header is incomplete or invalid: ") + e.what());
    }

    // Rebuild the expected layout from the architecture and require the
    // stored blocks to match it exactly.
    auto make_set = [](const std::string& prefix, const std::vector<std::size_t>& sizes, nn::Activation hidden) {
        nn::ParamSet p;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            p.layers.push_back({prefix + "." + std::to_string(l), Matrix(sizes[l], sizes[l + 1]),
                                std::vector<double>(sizes[l + 1], 0.0),
                                l + 2 == sizes.size() ? nn::Activation::identity : hidden});
        }
        p.reset_moments();
        return p;
    };
    c.model.encoder = make_set("encoder", c.model.arch.encoder_sizes(), c.model.arch.hidden_activation);
    c.model.decoder = make_set("decoder", c.model.arch.decoder_sizes(), c.model.arch.hidden_activation);
    c.stats.mean.assign(c.model.arch.input_dim, 0.0);
    c.stats.std.assign(c.model.arch.input_dim, 0.0);

    std::vector<std::span<double>> targets;
    std::vector<Shape> expected;
    for (auto* set : {&c.model.encoder, &c.model.decoder}) {
        for (auto& l : set->layers) {
            targets.push_back(l.weight.data());
            expected.push_back({l.name + ".weight", l.weight.rows(), l.weight.cols()});
            targets.push_back(l.bias);
            expected.push_back({l.name + ".bias", 1, l.bias.size()});
        }
    }
    targets.push_back(c.stats.mean);
    expected.push_back({"stats.mean", 1, c.stats.mean.size()});
    targets.push_back(c.stats.std);
    expected.push_back({"stats.std", 1, c.stats.std.size()});

    if (shapes.size() != expected.size()) {
        throw CorruptionError("checkpoint has " + std::to_string(shapes.size()) + " blocks, architecture needs " +
                              std::to_string(expected.size()));
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i].name != expected[i].name || shapes[i].rows != expected[i].rows ||
            shapes[i].cols != expected[i].cols) {
            throw CorruptionError("block " + shapes[i].name + " (" + std::to_string(shapes[i].rows) + "x" +
                                  std::to_string(shapes[i].cols) + ") does not match expected " + expected[i].name +
                                  " (" + std::to_string(expected[i].rows) + "x" + std::to_string(expected[i].cols) + ")");
        }
        total += shapes[i].rows * shapes[i].cols;
    }
    if (bytes.size() - pos != total * 8) {
        throw CorruptionError("checkpoint payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                              std::to_string(total * 8));
    }
    const std::uint8_t* p = bytes.data() + pos;
    for (auto& target : targets) {
        for (double& v : target) {
            v = read_double(p);
            p += 8;
        }
    }
    c.model.validate();
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

std::string content_id(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace cardiosep::io
