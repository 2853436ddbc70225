#include "fpl/augment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fpl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

bool is_timeseries(const AugmentationSpec& spec) {
  return std::holds_alternative<ChangeRtt>(spec) || std::holds_alternative<TimeShift>(spec) ||
         std::holds_alternative<PacketLoss>(spec);
}

bool is_image(const AugmentationSpec& spec) {
  return std::holds_alternative<Rotate>(spec) || std::holds_alternative<HorizontalFlip>(spec) ||
         std::holds_alternative<ColorJitter>(spec);
}

void validate(const AugmentationSpec& spec) {
  std::visit(overloaded{
                 [](const NoAug&) {},
                 [](const ChangeRtt& s) {
                   require(s.alpha_lo > 0.0, "change_rtt: alpha_lo must be positive");
                   require(s.alpha_lo <= s.alpha_hi, "change_rtt: empty alpha interval");
                 },
                 [](const TimeShift& s) {
                   require(s.b_lo <= s.b_hi, "time_shift: empty offset interval");
                 },
                 [](const PacketLoss& s) {
                   require(s.p >= 0.0 && s.p <= 1.0, "packet_loss: p must be in [0, 1]");
                 },
                 [](const Rotate& s) {
                   require(s.max_degrees >= 0.0, "rotate: max_degrees must be >= 0");
                 },
                 [](const HorizontalFlip&) {},
                 [](const ColorJitter& s) {
                   require(s.brightness_delta >= 0.0 && s.contrast_delta >= 0.0,
                           "color_jitter: deltas must be >= 0");
                 },
             },
             spec);
}

std::string kind_name(const AugmentationSpec& spec) {
  return std::visit(overloaded{
                        [](const NoAug&) { return "no_aug"; },
                        [](const ChangeRtt&) { return "change_rtt"; },
                        [](const TimeShift&) { return "time_shift"; },
                        [](const PacketLoss&) { return "packet_loss"; },
                        [](const Rotate&) { return "rotate"; },
                        [](const HorizontalFlip&) { return "horizontal_flip"; },
                        [](const ColorJitter&) { return "color_jitter"; },
                    },
                    spec);
}

nlohmann::json to_json(const AugmentationSpec& spec) {
  nlohmann::json j = {{"kind", kind_name(spec)}};
  std::visit(overloaded{
                 [](const NoAug&) {},
                 [&](const ChangeRtt& s) {
                   j["alpha_lo"] = s.alpha_lo;
                   j["alpha_hi"] = s.alpha_hi;
                 },
                 [&](const TimeShift& s) {
                   j["b_lo"] = s.b_lo;
                   j["b_hi"] = s.b_hi;
                 },
                 [&](const PacketLoss& s) { j["p"] = s.p; },
                 [&](const Rotate& s) { j["max_degrees"] = s.max_degrees; },
                 [](const HorizontalFlip&) {},
                 [&](const ColorJitter& s) {
                   j["brightness_delta"] = s.brightness_delta;
                   j["contrast_delta"] = s.contrast_delta;
                 },
             },
             spec);
  return j;
}

AugmentationSpec augmentation_from_name(const std::string& kind) {
  if (kind == "no_aug") return NoAug{};
  if (kind == "change_rtt") return ChangeRtt{};
  if (kind == "time_shift") return TimeShift{};
  if (kind == "packet_loss") return PacketLoss{};
  if (kind == "rotate") return Rotate{};
  if (kind == "horizontal_flip") return HorizontalFlip{};
  if (kind == "color_jitter") return ColorJitter{};
  throw std::invalid_argument("unknown augmentation kind '" + kind + "'");
}

AugmentationSpec augmentation_from_json(const nlohmann::json& j) {
  if (j.is_string()) return augmentation_from_name(j.get<std::string>());
  auto spec = augmentation_from_name(j.at("kind").get<std::string>());
  std::visit(overloaded{
                 [](NoAug&) {},
                 [&](ChangeRtt& s) {
                   s.alpha_lo = j.value("alpha_lo", s.alpha_lo);
                   s.alpha_hi = j.value("alpha_hi", s.alpha_hi);
                 },
                 [&](TimeShift& s) {
                   s.b_lo = j.value("b_lo", s.b_lo);
                   s.b_hi = j.value("b_hi", s.b_hi);
                 },
                 [&](PacketLoss& s) { s.p = j.value("p", s.p); },
                 [&](Rotate& s) { s.max_degrees = j.value("max_degrees", s.max_degrees); },
                 [](HorizontalFlip&) {},
                 [&](ColorJitter& s) {
                   s.brightness_delta = j.value("brightness_delta", s.brightness_delta);
                   s.contrast_delta = j.value("contrast_delta", s.contrast_delta);
                 },
             },
             spec);
  validate(spec);
  return spec;
}

std::vector<AugmentationSpec> default_augmentations() {
  return {NoAug{}, Rotate{}, HorizontalFlip{}, ColorJitter{}, PacketLoss{}, TimeShift{},
          ChangeRtt{}};
}

PacketSeries scale_time(const PacketSeries& series, double alpha) {
  PacketSeries out = series;
  for (auto& t : out.timestamps) t *= alpha;
  return out;
}

PacketSeries shift_time(const PacketSeries& series, double offset) {
  if (offset == 0.0) return series;
  PacketSeries out;
  if (series.directions) out.directions.emplace();
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double t = series.timestamps[i] + offset;
    if (t < 0.0) continue;
    out.timestamps.push_back(t);
    out.sizes.push_back(series.sizes[i]);
    if (series.directions) out.directions->push_back((*series.directions)[i]);
  }
  return out;
}

namespace {

PacketSeries drop_packets(const PacketSeries& series, double p, Rng& rng) {
  PacketSeries out;
  if (series.directions) out.directions.emplace();
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (rng.bernoulli(p)) continue;
    out.timestamps.push_back(series.timestamps[i]);
    out.sizes.push_back(series.sizes[i]);
    if (series.directions) out.directions->push_back((*series.directions)[i]);
  }
  return out;
}

}  // namespace

PacketSeries apply_timeseries(const PacketSeries& series, const AugmentationSpec& spec, Rng& rng) {
  if (is_image(spec)) throw std::invalid_argument(kind_name(spec) + " is not a time-series augmentation");
  if (const auto* s = std::get_if<ChangeRtt>(&spec)) {
    return scale_time(series, rng.uniform(s->alpha_lo, s->alpha_hi));
  }
  if (const auto* s = std::get_if<TimeShift>(&spec)) {
    return shift_time(series, rng.uniform(s->b_lo, s->b_hi));
  }
  if (const auto* s = std::get_if<PacketLoss>(&spec)) return drop_packets(series, s->p, rng);
  return series;
}

ImageF flip_horizontal(const ImageF& image) { return image.rowwise().reverse(); }

ImageF rotate_image(const ImageF& image, double degrees) {
  if (degrees == 0.0) return image;
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cy = 0.5 * static_cast<double>(image.rows() - 1);
  const double cx = 0.5 * static_cast<double>(image.cols() - 1);
  ImageF out = ImageF::Zero(image.rows(), image.cols());
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index col = 0; col < image.cols(); ++col) {
      // inverse mapping from output cell to source cell
      const double y = static_cast<double>(r) - cy;
      const double x = static_cast<double>(col) - cx;
      const auto sr = static_cast<Eigen::Index>(std::lround(c * y + s * x + cy));
      const auto sc = static_cast<Eigen::Index>(std::lround(-s * y + c * x + cx));
      if (sr >= 0 && sr < image.rows() && sc >= 0 && sc < image.cols()) {
        out(r, col) = image(sr, sc);
      }
    }
  }
  return out;
}

ImageF jitter_colors(const ImageF& image, double contrast_factor, double brightness_offset) {
  if (contrast_factor == 1.0 && brightness_offset == 0.0) return image;
  const float vmax = image.size() ? image.maxCoeff() : 0.0f;
  const auto cf = static_cast<float>(contrast_factor);
  const auto bo = static_cast<float>(brightness_offset) * vmax;
  return (cf * image.array() + bo).cwiseMax(0.0f).matrix();
}

ImageF apply_image(const ImageF& image, const AugmentationSpec& spec, Rng& rng) {
  if (is_timeseries(spec)) throw std::invalid_argument(kind_name(spec) + " is not an image augmentation");
  if (std::holds_alternative<HorizontalFlip>(spec)) return flip_horizontal(image);
  if (const auto* s = std::get_if<Rotate>(&spec)) {
    return rotate_image(image, rng.uniform(-s->max_degrees, s->max_degrees));
  }
  if (const auto* s = std::get_if<ColorJitter>(&spec)) {
    const double cf = rng.uniform(1.0 - s->contrast_delta, 1.0 + s->contrast_delta);
    const double bo = rng.uniform(-s->brightness_delta, s->brightness_delta);
    return jitter_colors(image, cf, bo);
  }
  return image;
}

ImageF augmented_input(const PacketSeries& series, const std::vector<AugmentationSpec>& chain,
                       const FlowpicOptions& opts, Rng& rng) {
  const PacketSeries* current = &series;
  PacketSeries scratch;
  for (const auto& spec : chain) {
    if (!is_timeseries(spec)) continue;
    scratch = apply_timeseries(*current, spec, rng);
    current = &scratch;
  }
  ImageF image = to_model_input<float>(build_flowpic(*current, opts.resolution, opts.window),
                                       opts.normalization);
  for (const auto& spec : chain) {
    if (is_image(spec)) image = apply_image(image, spec, rng);
  }
  return image;
}

std::pair<ImageF, ImageF> make_views(const PacketSeries& sample,
                                     const std::pair<AugmentationSpec, AugmentationSpec>& pair,
                                     const FlowpicOptions& opts, Rng& rng) {
  auto one_view = [&] {
    std::vector<AugmentationSpec> chain{pair.first, pair.second};
    if (rng.bernoulli(0.5)) std::swap(chain[0], chain[1]);
    return augmented_input(sample, chain, opts, rng);
  };
  ImageF a = one_view();
  ImageF b = one_view();
  return {std::move(a), std::move(b)};
}

std::vector<ImageF> expand_training_set(const std::vector<PacketSeries>& samples,
                                        const AugmentationSpec& spec, std::size_t times,
                                        const FlowpicOptions& opts, Rng& rng) {
  if (times == 0) throw std::invalid_argument("expansion factor must be >= 1");
  std::vector<ImageF> out;
  out.reserve(samples.size() * times);
  const std::vector<AugmentationSpec> chain{spec};
  for (const auto& s : samples) {
    for (std::size_t r = 0; r < times; ++r) out.push_back(augmented_input(s, chain, opts, rng));
  }
  return out;
}

}  // namespace fpl
