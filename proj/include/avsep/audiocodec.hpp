#pragma once

#include "avsep/config.hpp"
#include "avsep/layers.hpp"

namespace avsep {

// Waveform <-> feature boundary: strided conv analysis with ReLU, transposed
// conv synthesis. With kernel 16 / stride 4 / pad 6 per side the time axis maps
// L -> L/4 -> L exactly.
template <typename R>
struct audio_codec {
  conv_spec enc_spec, dec_spec;
  conv_layer<R> enc;
  tconv_layer<R> dec;

  audio_codec() = default;
  audio_codec(param_store<R>& ps, const std::string& name, const model_config& cfg) {
    enc_spec.in_ch = 1;
    enc_spec.out_ch = cfg.n_a;
    enc_spec.kernel = cfg.audio_kernel;
    enc_spec.stride = cfg.audio_stride;
    enc_spec.pad_lo = enc_spec.pad_hi = cfg.audio_pad();
    dec_spec = enc_spec;
    dec_spec.in_ch = cfg.n_a;
    dec_spec.out_ch = 1;
    enc = conv_layer<R>(ps, name + ".enc", enc_spec);
    dec = tconv_layer<R>(ps, name + ".dec", dec_spec);
  }

  var<R> encode(var<R> a) const {
    require(a->value.rows() == 1, "encode_audio: expected a mono [1 x L] tensor");
    require(a->value.cols() % enc_spec.stride == 0,
            "encode_audio: length must be divisible by the stride (caller pads)");
    return relu(enc(std::move(a)));
  }

  var<R> decode(var<R> e) const { return dec(std::move(e)); }
};

}  // namespace avsep
