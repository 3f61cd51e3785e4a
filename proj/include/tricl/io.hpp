// File formats: mono 16-bit PCM WAV, single-file blobs with a one-line JSON
// header over a raw little-endian payload, and checksummed checkpoints.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tricl/common.hpp"
#include "tricl/dsp.hpp"
#include "tricl/tensor.hpp"
#include "tricl/video.hpp"

namespace tricl::io {

using json = nlohmann::json;

inline std::uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// WAV (RIFF, mono, 16-bit PCM)
// ---------------------------------------------------------------------------

inline void write_wav(const std::string& path, const dsp::Waveform& w) {
  std::vector<std::int16_t> pcm(w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i) {
    double x = std::clamp<double>(w.samples[i], -1.0, 1.0);
    pcm[i] = static_cast<std::int16_t>(std::lround(x * 32767.0));
  }
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  const std::uint32_t sr = static_cast<std::uint32_t>(w.sample_rate);

  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::DataIntegrity, "write_wav: cannot open " + path);
  auto put32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  f.write("RIFF", 4);
  put32(36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put32(16);
  put16(1);  // PCM
  put16(1);  // mono
  put32(sr);
  put32(sr * 2);  // byte rate
  put16(2);       // block align
  put16(16);      // bits per sample
  f.write("data", 4);
  put32(data_bytes);
  f.write(reinterpret_cast<const char*>(pcm.data()), data_bytes);
  require(f.good(), ErrorKind::DataIntegrity, "write_wav: write failed for " + path);
}

inline dsp::Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::DataIntegrity, "read_wav: cannot open " + path);
  auto get32 = [&]() {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get16 = [&]() {
    std::uint16_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 2);
    return v;
  };
  char tag[5] = {0};
  f.read(tag, 4);
  require(std::strncmp(tag, "RIFF", 4) == 0, ErrorKind::DataIntegrity,
          "read_wav: not a RIFF file: " + path);
  get32();
  f.read(tag, 4);
  require(std::strncmp(tag, "WAVE", 4) == 0, ErrorKind::DataIntegrity,
          "read_wav: not a WAVE file: " + path);

  dsp::Waveform w;
  bool got_fmt = false;
  for (;;) {
    f.read(tag, 4);
    if (!f.good()) break;
    const std::uint32_t size = get32();
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      const auto fmt = get16();
      const auto channels = get16();
      const auto sr = get32();
      get32();
      get16();
      const auto bits = get16();
      require(fmt == 1 && channels == 1 && bits == 16, ErrorKind::DataIntegrity,
              "read_wav: expected mono 16-bit PCM: " + path);
      w.sample_rate = static_cast<int>(sr);
      if (size > 16) f.seekg(size - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      require(got_fmt, ErrorKind::DataIntegrity, "read_wav: data before fmt: " + path);
      std::vector<std::int16_t> pcm(size / 2);
      f.read(reinterpret_cast<char*>(pcm.data()), size);
      require(f.good(), ErrorKind::DataIntegrity, "read_wav: truncated data: " + path);
      w.samples.resize(pcm.size());
      for (size_t i = 0; i < pcm.size(); ++i)
        w.samples[i] = static_cast<Real>(pcm[i] / 32767.0);
      return w;
    } else {
      f.seekg(size + (size & 1), std::ios::cur);
    }
  }
  fail(ErrorKind::DataIntegrity, "read_wav: no data chunk in " + path);
}

// ---------------------------------------------------------------------------
// one-line JSON header + raw payload
// ---------------------------------------------------------------------------

inline void write_blob(const std::string& path, const json& header, const void* payload,
                       size_t bytes) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::DataIntegrity, "write_blob: cannot open " + path);
  const std::string h = header.dump();
  f << h << '\n';
  f.write(static_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
  require(f.good(), ErrorKind::DataIntegrity, "write_blob: write failed for " + path);
}

inline json read_blob(const std::string& path, std::vector<char>& payload) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::DataIntegrity, "read_blob: cannot open " + path);
  std::string line;
  std::getline(f, line);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::DataIntegrity, "read_blob: bad header in " + path + ": " + e.what());
  }
  payload.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  return header;
}

// Spectrogram blob: {"shape":[F,M],"hop_seconds":h,"dtype":"f32"} + float32 LE.
inline void write_spectrogram_blob(const std::string& path, const dsp::Spectrogram& s) {
  std::vector<float> payload(s.data.values().begin(), s.data.values().end());
  json h{{"shape", {s.frames(), s.n_mels()}}, {"hop_seconds", s.hop_seconds}, {"dtype", "f32"}};
  write_blob(path, h, payload.data(), payload.size() * sizeof(float));
}

inline dsp::Spectrogram read_spectrogram_blob(const std::string& path) {
  std::vector<char> payload;
  json h = read_blob(path, payload);
  require(h.value("dtype", "") == "f32", ErrorKind::DataIntegrity,
          "spectrogram blob: unsupported dtype in " + path);
  const std::int64_t F = h.at("shape").at(0), M = h.at("shape").at(1);
  require(payload.size() == static_cast<size_t>(F * M) * sizeof(float), ErrorKind::DataIntegrity,
          "spectrogram blob: payload size mismatch in " + path);
  std::vector<float> raw(static_cast<size_t>(F * M));
  std::memcpy(raw.data(), payload.data(), payload.size());
  dsp::Spectrogram s;
  s.hop_seconds = h.value("hop_seconds", 0.01);
  s.data = Tensor::from({F, M}, std::vector<Real>(raw.begin(), raw.end()));
  return s;
}

// Video blob: {"frames":T,"channels":C,"height":H,"width":W,"fps":f,"dtype":"u8"} + bytes.
inline void write_video_blob(const std::string& path, const video::VideoClip& v) {
  v.validate();
  std::vector<unsigned char> payload(v.data.values().size());
  for (size_t i = 0; i < payload.size(); ++i) {
    const double x = std::clamp<double>(v.data.values()[i], 0.0, 1.0);
    payload[i] = static_cast<unsigned char>(std::lround(x * 255.0));
  }
  json h{{"frames", v.frames()}, {"channels", v.channels()}, {"height", v.height()},
         {"width", v.width()},   {"fps", v.fps},             {"dtype", "u8"}};
  write_blob(path, h, payload.data(), payload.size());
}

inline video::VideoClip read_video_blob(const std::string& path) {
  std::vector<char> payload;
  json h = read_blob(path, payload);
  require(h.value("dtype", "") == "u8", ErrorKind::DataIntegrity,
          "video blob: unsupported dtype in " + path);
  const std::int64_t T = h.at("frames"), C = h.at("channels"), H = h.at("height"),
                     W = h.at("width");
  require(payload.size() == static_cast<size_t>(T * C * H * W), ErrorKind::DataIntegrity,
          "video blob: payload size mismatch in " + path);
  std::vector<Real> px(payload.size());
  for (size_t i = 0; i < payload.size(); ++i)
    px[i] = static_cast<Real>(static_cast<unsigned char>(payload[i]) / 255.0);
  video::VideoClip v;
  v.fps = h.value("fps", 5.0);
  v.data = Tensor::from({T, C, H, W}, std::move(px));
  return v;
}

// Feature cache: {"shape":[n,d],"dtype":"f32",...} + float32 LE rows.
inline void write_feature_blob(const std::string& path, const std::vector<std::vector<Real>>& rows,
                               json extra = json::object()) {
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  const std::int64_t d = n > 0 ? static_cast<std::int64_t>(rows[0].size()) : 0;
  std::vector<float> payload;
  payload.reserve(static_cast<size_t>(n * d));
  for (const auto& r : rows) {
    require(static_cast<std::int64_t>(r.size()) == d, ErrorKind::InvalidShape,
            "feature blob: ragged rows");
    payload.insert(payload.end(), r.begin(), r.end());
  }
  extra["shape"] = {n, d};
  extra["dtype"] = "f32";
  write_blob(path, extra, payload.data(), payload.size() * sizeof(float));
}

inline std::vector<std::vector<Real>> read_feature_blob(const std::string& path,
                                                        json* header_out = nullptr) {
  std::vector<char> payload;
  json h = read_blob(path, payload);
  require(h.value("dtype", "") == "f32", ErrorKind::DataIntegrity,
          "feature blob: unsupported dtype in " + path);
  const std::int64_t n = h.at("shape").at(0), d = h.at("shape").at(1);
  require(payload.size() == static_cast<size_t>(n * d) * sizeof(float), ErrorKind::DataIntegrity,
          "feature blob: payload size mismatch in " + path);
  std::vector<float> raw(static_cast<size_t>(n * d));
  std::memcpy(raw.data(), payload.data(), payload.size());
  std::vector<std::vector<Real>> rows(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    rows[static_cast<size_t>(i)].assign(raw.begin() + i * d, raw.begin() + (i + 1) * d);
  if (header_out) *header_out = h;
  return rows;
}

// ---------------------------------------------------------------------------
// checkpoints: JSON manifest + checksummed float64 LE blob
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors,
                             const json& extra) {
  std::vector<double> payload;
  json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["dtype"] = "f64";
  manifest["extra"] = extra;
  manifest["tensors"] = json::array();
  for (const auto& [name, t] : tensors) {
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
    payload.insert(payload.end(), t.values().begin(), t.values().end());
  }
  manifest["checksum"] = hex64(fnv1a64(payload.data(), payload.size() * sizeof(double)));
  write_blob(path, manifest, payload.data(), payload.size() * sizeof(double));
}

inline std::map<std::string, Tensor> read_checkpoint(const std::string& path, json* extra_out) {
  std::vector<char> payload;
  json manifest = read_blob(path, payload);
  require(manifest.value("version", -1) == kCheckpointVersion, ErrorKind::DataIntegrity,
          "checkpoint: unsupported version in " + path);
  require(manifest.value("dtype", "") == "f64", ErrorKind::DataIntegrity,
          "checkpoint: unsupported dtype in " + path);
  const std::string expect = manifest.value("checksum", "");
  const std::string got = hex64(fnv1a64(payload.data(), payload.size()));
  require(expect == got, ErrorKind::DataIntegrity,
          "checkpoint: checksum mismatch in " + path + " (corrupt file)");

  require(payload.size() % sizeof(double) == 0, ErrorKind::DataIntegrity,
          "checkpoint: payload not a whole number of doubles");
  std::vector<double> raw(payload.size() / sizeof(double));
  std::memcpy(raw.data(), payload.data(), payload.size());

  std::map<std::string, Tensor> out;
  size_t cursor = 0;
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    Shape shape;
    for (const auto& e : entry.at("shape")) shape.push_back(e.get<std::int64_t>());
    const auto n = static_cast<size_t>(shape_numel(shape));
    require(cursor + n <= raw.size(), ErrorKind::DataIntegrity,
            "checkpoint: manifest exceeds payload in " + path);
    out.emplace(name, Tensor::from(shape, std::vector<Real>(raw.begin() + cursor,
                                                            raw.begin() + cursor + n)));
    cursor += n;
  }
  require(cursor == raw.size(), ErrorKind::DataIntegrity,
          "checkpoint: unread payload bytes in " + path);
  if (extra_out) *extra_out = manifest.at("extra");
  return out;
}

inline std::uint64_t params_checksum(const std::map<std::string, Tensor>& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : tensors) {
    h = fnv1a64(name.data(), name.size()) ^ (h * 0x100000001b3ULL);
    h ^= fnv1a64(t.values().data(), t.values().size() * sizeof(Real));
  }
  return h;
}

}  // namespace tricl::io
