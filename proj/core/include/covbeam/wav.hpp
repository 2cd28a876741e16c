#pragma once

#include <string>

#include "covbeam/signal.hpp"

namespace covbeam {

enum class WavEncoding { kPcm16, kFloat32 };

// RIFF/WAVE reader for PCM16 and IEEE float32, any channel count.
// Throws std::runtime_error on malformed headers, truncated data, or
// unsupported encodings; never returns a partial waveform.
Waveform read_wav(const std::string& path);

// Writer. Float32 round-trips bit-exactly; PCM16 uses symmetric 1/32768
// scaling with clamping, so |x - roundtrip(x)| <= 1/32768 for |x| <= 1.
void write_wav(const std::string& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace covbeam
