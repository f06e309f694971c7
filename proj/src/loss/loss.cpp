#include "pltts/loss/loss.hpp"

#include <algorithm>
#include <stdexcept>

namespace pltts::loss {

Tensor mel_mse(const Tensor& target, const Tensor& generated) {
  if (target.shape() != generated.shape())
    throw ShapeError("loss_frame: target " + shape_str(target.shape()) + " and generated " +
                     shape_str(generated.shape()) + " differ in shape");
  return mse(generated, target);
}

Tensor stop_bce(const Tensor& stop_logits) {
  std::vector<double> targets(stop_logits.numel(), 0.0);
  if (!targets.empty()) targets.back() = 1.0;
  return bce_with_logits(stop_logits, Tensor(stop_logits.shape(), std::move(targets)));
}

FrameLoss loss_frame(const Tensor& target, const Tensor& pre_mel, const Tensor& post_mel, const Tensor& stop_logits) {
  FrameLoss f;
  f.mel_pre = mel_mse(target, pre_mel);
  f.mel_post = mel_mse(target, post_mel);
  if (stop_logits.defined()) {
    if (stop_logits.numel() != target.dim(0))
      throw ShapeError("loss_frame: " + std::to_string(stop_logits.numel()) + " stop logits for " +
                       std::to_string(target.dim(0)) + " frames");
    f.stop = stop_bce(stop_logits);
  } else {
    f.stop = Tensor::scalar(0.0);
  }
  f.total = add(add(f.mel_pre, f.mel_post), f.stop);
  return f;
}

Tensor style_adapter(const Tensor& normalized_mel, const dsp::NormStats& tts_stats, const ser::SerModel& model) {
  const std::size_t f = tts_stats.mean.size();
  if (normalized_mel.rank() != 2 || normalized_mel.dim(1) != f || tts_stats.std.size() != f)
    throw ShapeError("style_adapter: mel " + shape_str(normalized_mel.shape()) + " does not match " +
                     std::to_string(f) + "-channel stats");
  std::vector<double> sd(f);
  for (std::size_t c = 0; c < f; ++c) sd[c] = std::max(tts_stats.std[c], dsp::NormStats::kStdFloor);
  const Tensor raw = add(mul(normalized_mel, Tensor({f}, std::move(sd))), Tensor({f}, tts_stats.mean));
  return ser::utterance_segments(model, raw);
}

ser::StyleTensors style_of(ser::SerModel& model, const Tensor& normalized_mel, const dsp::NormStats& tts_stats) {
  const ser::SerOutput o = ser::ser_forward(model, {style_adapter(normalized_mel, tts_stats, model)}, false);
  return {o.low, o.middle, o.high, o.logits};
}

Tensor loss_style(const ser::StyleTensors& reference, const ser::StyleTensors& generated, ser::StyleLevel level) {
  using ser::StyleLevel;
  if (level == StyleLevel::All)
    return add(add(mse(generated.low, reference.low), mse(generated.middle, reference.middle)),
               mse(generated.high, reference.high));
  return mse(generated.at(level), reference.at(level));
}

Tensor loss_style(const Tensor& target, const Tensor& generated, ser::SerModel* model, const dsp::NormStats& tts_stats,
                  ser::StyleLevel level) {
  if (!model) throw std::invalid_argument("loss_style: no SER model loaded");
  ser::StyleTensors reference;
  {
    NoGradGuard guard;
    reference = style_of(*model, target.detach(), tts_stats);
  }
  return loss_style(reference, style_of(*model, generated, tts_stats), level);
}

LossBreakdown loss_total(tts::Mode mode, ser::StyleLevel level, const FrameLoss& frame, const Tensor& style) {
  if (mode == tts::Mode::PL && !style.defined()) throw std::invalid_argument("loss_total: PL mode needs a style term");
  const Tensor s = mode == tts::Mode::PL ? style : Tensor::scalar(0.0);
  LossBreakdown b;
  b.mode = mode;
  b.level = level;
  b.total_tensor = add(frame.total, s);
  b.frame = frame.total.item();
  b.style = s.item();
  b.stop = frame.stop.item();
  b.total = b.total_tensor.item();
  return b;
}

}  // namespace pltts::loss
