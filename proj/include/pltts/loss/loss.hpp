#pragma once

#include "pltts/dsp/features.hpp"
#include "pltts/numerics/tensor.hpp"
#include "pltts/ser/ser.hpp"
#include "pltts/tts/model.hpp"

namespace pltts::loss {

/// Mean over frames and channels of the squared difference.
Tensor mel_mse(const Tensor& target, const Tensor& generated);

/// BCE against a stop target that is 1 on the last frame only.
Tensor stop_bce(const Tensor& stop_logits);

struct FrameLoss {
  Tensor mel_pre, mel_post, stop;
  Tensor total;  // (mel_pre + mel_post) + stop
};

/// Frame reconstruction objective on the decoder and post-net outputs plus
/// the stop-token term. An undefined `stop_logits` drops the stop term.
FrameLoss loss_frame(const Tensor& target, const Tensor& pre_mel, const Tensor& post_mel, const Tensor& stop_logits);

/// TTS-normalized mel (T̂ × F) to the SER's segment input: undo the TTS
/// normalization, then the SER's own normalize → deltas → segments path.
Tensor style_adapter(const Tensor& normalized_mel, const dsp::NormStats& tts_stats, const ser::SerModel& model);

/// Ψ of a TTS-normalized mel through the adapter; differentiable.
ser::StyleTensors style_of(ser::SerModel& model, const Tensor& normalized_mel, const dsp::NormStats& tts_stats);

/// Mean squared Ψ distance at one level; All sums L, M and H in that order.
Tensor loss_style(const ser::StyleTensors& reference, const ser::StyleTensors& generated, ser::StyleLevel level);

/// Reference Ψ is computed without recording; `model` must be non-null.
Tensor loss_style(const Tensor& target, const Tensor& generated, ser::SerModel* model, const dsp::NormStats& tts_stats,
                  ser::StyleLevel level);

struct LossBreakdown {
  double frame = 0.0;  // includes the stop term
  double style = 0.0;
  double stop = 0.0;   // the stop share of `frame`, for reporting
  double total = 0.0;
  tts::Mode mode = tts::Mode::Baseline;
  ser::StyleLevel level = ser::StyleLevel::Low;
  Tensor total_tensor;  // graph root for backward
};

/// total = frame + style. Baseline and ST pass an undefined `style`, which
/// contributes an exact zero.
LossBreakdown loss_total(tts::Mode mode, ser::StyleLevel level, const FrameLoss& frame, const Tensor& style);

}  // namespace pltts::loss
