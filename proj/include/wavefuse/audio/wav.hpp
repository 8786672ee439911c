#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wavefuse/common.hpp"

namespace wavefuse {

// Per-channel samples in [-1, 1]; channels are equal length.
struct Waveform {
  std::vector<std::vector<double>> channels;
  int sample_rate = 0;

  std::size_t frames() const { return channels.empty() ? 0 : channels[0].size(); }
  std::size_t channel_count() const { return channels.size(); }
};

namespace detail {

inline std::uint32_t rd_u32le(const std::string& b, std::size_t pos) {
  if (pos + 4 > b.size()) throw FormatError("wav: truncated file");
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + pos);
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t rd_u16le(const std::string& b, std::size_t pos) {
  if (pos + 2 > b.size()) throw FormatError("wav: truncated file");
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + pos);
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void wr_u32le(std::string& b, std::uint32_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
  b.push_back(static_cast<char>((v >> 16) & 0xff));
  b.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void wr_u16le(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

// PCM-16 RIFF/WAVE decoder, 1-2 channels. Integer samples map to
// value / 32768 in [-1, 1).
inline Waveform decode_wav(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 ||
      bytes.compare(8, 4, "WAVE") != 0)
    throw FormatError("wav: not a RIFF/WAVE container");

  int channels = 0, sample_rate = 0, bits = 0, format_code = 0;
  bool have_fmt = false;
  std::size_t data_pos = 0, data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string chunk_id = bytes.substr(pos, 4);
    const std::uint32_t chunk_len = detail::rd_u32le(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (chunk_id == "fmt ") {
      if (chunk_len < 16) throw FormatError("wav: malformed 'fmt ' chunk");
      format_code = detail::rd_u16le(bytes, body);
      channels = detail::rd_u16le(bytes, body + 2);
      sample_rate = static_cast<int>(detail::rd_u32le(bytes, body + 4));
      bits = detail::rd_u16le(bytes, body + 14);
      have_fmt = true;
    } else if (chunk_id == "data") {
      data_pos = body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word aligned
  }

  if (!have_fmt) throw FormatError("wav: missing 'fmt ' chunk");
  if (format_code != 1)
    throw FormatError("wav: unsupported encoding in chunk 'fmt ' (format code " +
                      std::to_string(format_code) + ", expected PCM)");
  if (bits != 16)
    throw FormatError("wav: unsupported sample width in chunk 'fmt ' (" +
                      std::to_string(bits) + " bits, expected 16)");
  if (channels < 1 || channels > 2)
    throw FormatError("wav: unsupported channel count in chunk 'fmt ' (" +
                      std::to_string(channels) + ")");
  if (data_pos == 0) throw FormatError("wav: missing 'data' chunk");
  if (data_pos + data_len > bytes.size()) throw FormatError("wav: truncated 'data' chunk");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * 2;
  const std::size_t n_frames = data_len / frame_bytes;
  Waveform w;
  w.sample_rate = sample_rate;
  w.channels.assign(static_cast<std::size_t>(channels), std::vector<double>(n_frames));
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t off = data_pos + f * frame_bytes + static_cast<std::size_t>(c) * 2;
      const auto raw = static_cast<std::int16_t>(detail::rd_u16le(bytes, off));
      w.channels[static_cast<std::size_t>(c)][f] = static_cast<double>(raw) / 32768.0;
    }
  }
  return w;
}

inline std::string encode_wav(const Waveform& w) {
  if (w.channels.empty() || w.channel_count() > 2)
    throw FormatError("wav: encoder supports 1-2 channels");
  for (const auto& c : w.channels)
    if (c.size() != w.frames()) throw FormatError("wav: channel length mismatch");
  if (w.sample_rate <= 0) throw FormatError("wav: sample rate must be positive");

  const auto channels = static_cast<std::uint16_t>(w.channel_count());
  const auto n_frames = static_cast<std::uint32_t>(w.frames());
  const std::uint32_t data_len = n_frames * channels * 2;

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  detail::wr_u32le(out, 36 + data_len);
  out += "WAVEfmt ";
  detail::wr_u32le(out, 16);
  detail::wr_u16le(out, 1);  // PCM
  detail::wr_u16le(out, channels);
  detail::wr_u32le(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::wr_u32le(out, static_cast<std::uint32_t>(w.sample_rate) * channels * 2);
  detail::wr_u16le(out, static_cast<std::uint16_t>(channels * 2));
  detail::wr_u16le(out, 16);
  out += "data";
  detail::wr_u32le(out, data_len);
  for (std::uint32_t f = 0; f < n_frames; ++f)
    for (std::uint16_t c = 0; c < channels; ++c) {
      double v = w.channels[c][f] * 32768.0;
      v = std::max(-32768.0, std::min(32767.0, std::nearbyint(v)));
      detail::wr_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
  return out;
}

}  // namespace wavefuse
