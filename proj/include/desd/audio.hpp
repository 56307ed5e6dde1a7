#pragma once

// Audio-feature ingestion. The generator consumes any T x F per-frame feature
// matrix; this header supplies the packed AFTR container, a CSV reader for
// small demos, and a minimal log-magnitude short-time-spectrum extractor over
// 16-bit PCM mono WAV (25 ms window, hop aligned to the mesh frame rate).

#include <complex>
#include <fstream>

#include <desd/common.hpp>

namespace desd {

struct AudioFeatureTrack {
    std::vector<std::vector<double>> frames; // T x F
    double fps = 60.0;

    int frame_count() const { return int(frames.size()); }
    int feature_dim() const { return frames.empty() ? 0 : int(frames[0].size()); }

    void validate() const {
        for (const auto& f : frames) {
            if (int(f.size()) != feature_dim())
                throw ContractError("features: ragged rows");
            for (double x : f)
                if (!std::isfinite(x)) throw NumericError("features: non-finite entry");
        }
    }
};

// ---------------------------------------------------------------------------
// AFTR: magic "AFTR", T u32, F u32, little-endian f32 payload (row-major).

inline void save_features(const std::string& path, const AudioFeatureTrack& track) {
    track.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("features: cannot write '" + path + "'");
    auto put = [&](auto v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    out.write("AFTR", 4);
    put(uint32_t(track.frames.size()));
    put(uint32_t(track.feature_dim()));
    for (const auto& row : track.frames)
        for (double x : row) put(float(x));
    if (!out) throw IoError("features: write failed for '" + path + "'");
}

inline AudioFeatureTrack load_features(const std::string& path, double fps = 60.0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("features: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "AFTR")
        throw ContractError("features: '" + path + "' is not an AFTR file");
    uint32_t t, f;
    in.read(reinterpret_cast<char*>(&t), 4);
    in.read(reinterpret_cast<char*>(&f), 4);
    if (!in) throw IoError("features: truncated header in '" + path + "'");
    AudioFeatureTrack track;
    track.fps = fps;
    track.frames.assign(t, std::vector<double>(f));
    for (auto& row : track.frames)
        for (double& x : row) {
            float v;
            in.read(reinterpret_cast<char*>(&v), 4);
            if (!in) throw IoError("features: truncated payload in '" + path + "'");
            x = double(v);
        }
    track.validate();
    return track;
}

inline AudioFeatureTrack load_features_csv(const std::string& path, double fps = 60.0) {
    std::ifstream in(path);
    if (!in) throw IoError("features: cannot open '" + path + "'");
    AudioFeatureTrack track;
    track.fps = fps;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (...) {
                throw ContractError("features: bad number at line " + std::to_string(line_no));
            }
        }
        if (!track.frames.empty() && row.size() != track.frames[0].size())
            throw ContractError("features: ragged row at line " + std::to_string(line_no));
        track.frames.push_back(std::move(row));
    }
    track.validate();
    return track;
}

// resample rows to the mesh frame rate by linear interpolation over time
inline AudioFeatureTrack resample_features(const AudioFeatureTrack& track, double target_fps) {
    track.validate();
    if (track.frames.empty() || track.fps == target_fps) {
        AudioFeatureTrack out = track;
        out.fps = target_fps;
        return out;
    }
    const int src = track.frame_count();
    int dst = std::max(1, int(std::llround(src * target_fps / track.fps)));
    AudioFeatureTrack out;
    out.fps = target_fps;
    const int f = track.feature_dim();
    for (int t = 0; t < dst; ++t) {
        double pos = dst == 1 ? 0.0 : double(t) * (src - 1) / double(dst - 1);
        int lo = int(pos);
        int hi = std::min(lo + 1, src - 1);
        double w = pos - lo;
        std::vector<double> row(f);
        for (int j = 0; j < f; ++j)
            row[j] = (1 - w) * track.frames[lo][j] + w * track.frames[hi][j];
        out.frames.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// WAV (RIFF, PCM16 mono) and the spectral extractor.

struct WavAudio {
    int sample_rate = 0;
    std::vector<double> samples; // [-1, 1]
};

inline WavAudio load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("wav: cannot open '" + path + "'");
    auto read4 = [&] {
        char b[4];
        in.read(b, 4);
        if (!in) throw ContractError("wav: truncated file '" + path + "'");
        return std::string(b, 4);
    };
    auto read_u32 = [&] {
        uint32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw ContractError("wav: truncated file '" + path + "'");
        return v;
    };
    auto read_u16 = [&] {
        uint16_t v;
        in.read(reinterpret_cast<char*>(&v), 2);
        if (!in) throw ContractError("wav: truncated file '" + path + "'");
        return v;
    };
    if (read4() != "RIFF") throw ContractError("wav: '" + path + "' is not RIFF");
    read_u32();
    if (read4() != "WAVE") throw ContractError("wav: '" + path + "' is not WAVE");

    WavAudio wav;
    bool have_fmt = false;
    while (in) {
        std::string chunk;
        {
            char b[4];
            in.read(b, 4);
            if (!in) break;
            chunk.assign(b, 4);
        }
        uint32_t size = read_u32();
        if (chunk == "fmt ") {
            uint16_t format = read_u16();
            uint16_t channels = read_u16();
            uint32_t rate = read_u32();
            read_u32(); // byte rate
            read_u16(); // block align
            uint16_t bits = read_u16();
            if (format != 1 || channels != 1 || bits != 16)
                throw ContractError("wav: only 16-bit PCM mono is supported");
            wav.sample_rate = int(rate);
            if (size > 16) in.seekg(size - 16, std::ios::cur);
            have_fmt = true;
        } else if (chunk == "data") {
            if (!have_fmt) throw ContractError("wav: data before fmt chunk");
            size_t n = size / 2;
            wav.samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                int16_t s;
                in.read(reinterpret_cast<char*>(&s), 2);
                if (!in) throw ContractError("wav: truncated samples");
                wav.samples[i] = double(s) / 32768.0;
            }
            return wav;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    throw ContractError("wav: no data chunk in '" + path + "'");
}

inline void save_wav(const std::string& path, const WavAudio& wav) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("wav: cannot write '" + path + "'");
    auto put32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    uint32_t data_size = uint32_t(wav.samples.size() * 2);
    out.write("RIFF", 4);
    put32(36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put32(16);
    put16(1);
    put16(1);
    put32(uint32_t(wav.sample_rate));
    put32(uint32_t(wav.sample_rate * 2));
    put16(2);
    put16(16);
    out.write("data", 4);
    put32(data_size);
    for (double s : wav.samples) {
        double c = std::clamp(s, -1.0, 1.0);
        int16_t v = int16_t(std::lround(c * 32767.0));
        out.write(reinterpret_cast<const char*>(&v), 2);
    }
}

namespace detail {
// iterative radix-2 FFT, in place; n must be a power of two
inline void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2 * M_PI / double(len);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}
}  // namespace detail

// log(1 + banded |STFT|); window 25 ms, one hop per mesh frame
inline AudioFeatureTrack extract_features(const WavAudio& wav, double mesh_fps, int bands = 8) {
    if (wav.sample_rate <= 0 || wav.samples.empty())
        throw ContractError("features: empty audio");
    if (bands < 1) throw ContractError("features: bands must be positive");
    const int window = std::max(2, int(std::lround(0.025 * wav.sample_rate)));
    size_t nfft = 1;
    while (nfft < size_t(window)) nfft <<= 1;
    const double hop = wav.sample_rate / mesh_fps;
    const int frames = std::max(1, int(wav.samples.size() / hop));

    AudioFeatureTrack track;
    track.fps = mesh_fps;
    std::vector<std::complex<double>> buf(nfft);
    const size_t half = nfft / 2;
    for (int t = 0; t < frames; ++t) {
        size_t start = size_t(std::llround(t * hop));
        for (size_t i = 0; i < nfft; ++i) {
            double s = 0;
            if (i < size_t(window) && start + i < wav.samples.size()) {
                double hann = 0.5 - 0.5 * std::cos(2 * M_PI * double(i) / double(window - 1));
                s = wav.samples[start + i] * hann;
            }
            buf[i] = {s, 0.0};
        }
        detail::fft(buf);
        std::vector<double> row(bands, 0.0);
        for (size_t k = 0; k < half; ++k) {
            int band = int(k * size_t(bands) / half);
            row[band] += std::abs(buf[k]);
        }
        for (double& x : row) x = std::log1p(x);
        track.frames.push_back(std::move(row));
    }
    track.validate();
    return track;
}

}  // namespace desd
