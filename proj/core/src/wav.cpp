#include "cardiosep/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cardiosep/atomic_file.hpp"
#include "cardiosep/error.hpp"

namespace cardiosep::io {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw ParseError(std::string("truncated WAV: expected ") + what, pos_);
    }
    std::string tag() {
        need(4, "chunk tag");
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
        pos_ += 4;
        return s;
    }
    std::uint16_t u16() {
        need(2, "16-bit field");
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4, "32-bit field");
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
        pos_ += 4;
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    void skip(std::size_t n) { pos_ += std::min(n, remaining()); }

  private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

WavEncoding wav_encoding_from_string(const std::string& name) {
    if (name == "pcm16") return WavEncoding::pcm16;
    if (name == "float32") return WavEncoding::float32;
    throw UnsupportedFormat("unknown WAV encoding '" + name + "' (expected pcm16 or float32)");
}

siggen::SourceSignal parse_wav(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    if (in.tag() != "RIFF") throw ParseError("missing RIFF header", 0);
    in.u32();
    if (in.tag() != "WAVE") throw ParseError("RIFF form type is not WAVE", 8);

    bool have_fmt = false;
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t bits = 0;
    while (in.remaining() > 0) {
        const std::size_t chunk_at = in.offset();
        const std::string id = in.tag();
        const std::uint32_t size = in.u32();
        if (id == "fmt ") {
            if (size < 16) throw ParseError("fmt chunk shorter than 16 bytes", chunk_at);
            in.need(size, "fmt chunk body");
            const std::size_t body = in.offset();
            format = in.u16();
            channels = in.u16();
            rate = in.u32();
            in.u32();  // byte rate
            in.u16();  // block align
            bits = in.u16();
            if (format == kFormatExtensible && size >= 40) {
                in.u16();  // cbSize
                in.u16();  // valid bits
                in.u32();  // channel mask
                format = in.u16();  // leading two bytes of the sub-format GUID
            }
            in.skip(size - (in.offset() - body));
            if (size % 2 == 1) in.skip(1);
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw ParseError("data chunk before fmt chunk", chunk_at);
            if (channels != 1) {
                throw UnsupportedFormat("WAV has " + std::to_string(channels) + " channels; only mono is supported");
            }
            if (rate == 0) throw ParseError("zero sample rate", chunk_at);
            siggen::SourceSignal out;
            out.sample_rate = static_cast<double>(rate);
            if (format == kFormatPcm && bits == 16) {
                const auto data = in.take(size, "PCM16 sample data");
                if (size % 2 != 0) throw ParseError("PCM16 data size is odd", chunk_at);
                out.samples.resize(size / 2);
                for (std::size_t i = 0; i < out.samples.size(); ++i) {
                    const auto raw = static_cast<std::int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
                    out.samples[i] = static_cast<double>(raw) / 32768.0;
                }
            } else if (format == kFormatFloat && bits == 32) {
                const auto data = in.take(size, "float32 sample data");
                if (size % 4 != 0) throw ParseError("float32 data size is not a multiple of 4", chunk_at);
                out.samples.resize(size / 4);
                for (std::size_t i = 0; i < out.samples.size(); ++i) {
                    std::uint32_t u = 0;
                    for (int b = 3; b >= 0; --b) u = (u << 8) | data[4 * i + static_cast<std::size_t>(b)];
                    out.samples[i] = static_cast<double>(std::bit_cast<float>(u));
                }
            } else {
                throw UnsupportedFormat("WAV encoding format=" + std::to_string(format) + " bits=" +
                                        std::to_string(bits) + " is not PCM16 or float32");
            }
            return out;
        } else {
            in.need(size, "chunk body");
            in.skip(size + (size % 2));
        }
    }
    throw ParseError(have_fmt ? "no data chunk" : "no fmt chunk", in.offset());
}

siggen::SourceSignal read_wav(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return parse_wav(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
}

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, double sample_rate, WavEncoding encoding) {
    if (!(sample_rate > 0.0) || sample_rate != std::floor(sample_rate) || sample_rate > 4294967295.0) {
        throw InvalidArgument("WAV sample rate must be a positive integer, got " + std::to_string(sample_rate));
    }
    for (double v : samples) {
        if (!std::isfinite(v) || std::abs(v) > 1.0) {
            throw InvalidArgument("WAV samples must be finite and within [-1, 1]");
        }
    }
    const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
    const std::uint16_t block = bits / 8;
    const auto data_size = static_cast<std::uint32_t>(samples.size() * block);
    const auto rate = static_cast<std::uint32_t>(sample_rate);

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_size);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
    put_u16(out, 1);
    put_u32(out, rate);
    put_u32(out, rate * block);
    put_u16(out, block);
    put_u16(out, bits);
    put_tag(out, "data");
    put_u32(out, data_size);
    for (double v : samples) {
        if (encoding == WavEncoding::pcm16) {
            const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
            put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
        } else {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    return out;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, double sample_rate,
               WavEncoding encoding) {
    const auto bytes = encode_wav(samples, sample_rate, encoding);
    write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace cardiosep::io
