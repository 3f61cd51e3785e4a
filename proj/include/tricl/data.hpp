// Loads a labeled clip directory (labels.csv manifest + WAV + video blobs)
// into compact in-memory storage, serving crops on demand.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tricl/common.hpp"
#include "tricl/dsp.hpp"
#include "tricl/io.hpp"
#include "tricl/video.hpp"

namespace tricl::data {

// First-fraction / remainder split by index; round-robin labels keep both
// sides class balanced.
inline std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> split_indices(
    std::int64_t n, double train_fraction) {
  require(train_fraction > 0 && train_fraction <= 1, ErrorKind::InvalidConfig,
          "split: train_fraction must lie in (0,1]");
  const auto k = static_cast<std::int64_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> out;
  for (std::int64_t i = 0; i < n; ++i) (i < k ? out.first : out.second).push_back(i);
  return out;
}

class Dataset {
 public:
  static Dataset load(const std::string& dir, bool with_video) {
    namespace fs = std::filesystem;
    Dataset ds;
    ds.with_video_ = with_video;
    const auto manifest_path = fs::path(dir) / "labels.csv";
    std::ifstream manifest(manifest_path);
    require(manifest.good(), ErrorKind::DataIntegrity,
            "dataset: cannot open " + manifest_path.string());

    std::string line;
    std::getline(manifest, line);  // header
    require(line.rfind("index,label,wav,video", 0) == 0, ErrorKind::DataIntegrity,
            "dataset: unexpected manifest header in " + manifest_path.string());
    while (std::getline(manifest, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string index_s, label_s, wav, vid, clip_len_s, sr_s;
      std::getline(ss, index_s, ',');
      std::getline(ss, label_s, ',');
      std::getline(ss, wav, ',');
      std::getline(ss, vid, ',');
      std::getline(ss, clip_len_s, ',');
      std::getline(ss, sr_s, ',');
      require(!wav.empty(), ErrorKind::DataIntegrity, "dataset: malformed manifest row");

      Clip clip;
      clip.label = std::stoi(label_s);
      auto w = io::read_wav((fs::path(dir) / wav).string());
      if (ds.clips_.empty())
        ds.sample_rate_ = w.sample_rate;
      else
        require(w.sample_rate == ds.sample_rate_, ErrorKind::DataIntegrity,
                "dataset: mixed sample rates");
      clip.audio.assign(w.samples.begin(), w.samples.end());
      if (with_video) {
        require(!vid.empty(), ErrorKind::DataIntegrity, "dataset: missing video column");
        auto v = io::read_video_blob((fs::path(dir) / vid).string());
        clip.frames = v.frames();
        clip.channels = v.channels();
        clip.height = v.height();
        clip.width = v.width();
        ds.video_fps_ = v.fps;
        clip.video.resize(v.data.values().size());
        for (size_t i = 0; i < clip.video.size(); ++i)
          clip.video[i] = static_cast<unsigned char>(
              std::lround(std::clamp<double>(v.data.values()[i], 0.0, 1.0) * 255.0));
      }
      ds.num_classes_ = std::max(ds.num_classes_, clip.label + 1);
      ds.clips_.push_back(std::move(clip));
    }
    require(!ds.clips_.empty(), ErrorKind::DataIntegrity, "dataset: empty manifest");
    return ds;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(clips_.size()); }
  int num_classes() const { return num_classes_; }
  int sample_rate() const { return sample_rate_; }
  double video_fps() const { return video_fps_; }
  bool has_video() const { return with_video_; }
  int label(std::int64_t i) const { return clip(i).label; }

  double clip_seconds(std::int64_t i) const {
    return static_cast<double>(clip(i).audio.size()) / sample_rate_;
  }
  std::int64_t video_frames(std::int64_t i) const { return clip(i).frames; }

  dsp::Waveform waveform_full(std::int64_t i) const {
    const auto& c = clip(i);
    dsp::Waveform w;
    w.sample_rate = sample_rate_;
    w.samples.assign(c.audio.begin(), c.audio.end());
    return w;
  }

  dsp::Waveform waveform_crop(std::int64_t i, std::int64_t first_sample,
                              std::int64_t count) const {
    const auto& c = clip(i);
    require(first_sample >= 0 && count >= 1 &&
                first_sample + count <= static_cast<std::int64_t>(c.audio.size()),
            ErrorKind::InvalidLength, "dataset: audio crop outside the clip");
    dsp::Waveform w;
    w.sample_rate = sample_rate_;
    w.samples.assign(c.audio.begin() + first_sample, c.audio.begin() + first_sample + count);
    return w;
  }

  video::VideoClip video_crop(std::int64_t i, std::int64_t first_frame,
                              std::int64_t n_frames) const {
    require(with_video_, ErrorKind::InvalidConfig, "dataset: loaded without video");
    const auto& c = clip(i);
    require(first_frame >= 0 && n_frames >= 1 && first_frame + n_frames <= c.frames,
            ErrorKind::InvalidLength, "dataset: video crop outside the clip");
    const auto frame_sz = c.channels * c.height * c.width;
    std::vector<Real> px(static_cast<size_t>(n_frames * frame_sz));
    for (std::int64_t k = 0; k < n_frames * frame_sz; ++k)
      px[static_cast<size_t>(k)] = static_cast<Real>(
          c.video[static_cast<size_t>(first_frame * frame_sz + k)] / 255.0);
    video::VideoClip v;
    v.fps = video_fps_;
    v.data = Tensor::from({n_frames, c.channels, c.height, c.width}, std::move(px));
    return v;
  }

 private:
  struct Clip {
    int label = 0;
    std::vector<float> audio;
    std::vector<unsigned char> video;
    std::int64_t frames = 0, channels = 0, height = 0, width = 0;
  };

  const Clip& clip(std::int64_t i) const {
    require(i >= 0 && i < size(), ErrorKind::InvalidConfig, "dataset: index out of range");
    return clips_[static_cast<size_t>(i)];
  }

  std::vector<Clip> clips_;
  bool with_video_ = false;
  int num_classes_ = 0;
  int sample_rate_ = 16000;
  double video_fps_ = 5.0;
};

}  // namespace tricl::data
