#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fpl/dataio.hpp"
#include "fpl/flowpic.hpp"
#include "fpl/rng.hpp"

namespace fpl {

struct NoAug {};
/// Timestamps scaled by alpha ~ U[alpha_lo, alpha_hi].
struct ChangeRtt {
  double alpha_lo = 0.5;
  double alpha_hi = 1.5;
};
/// Timestamps offset by b ~ U[b_lo, b_hi]; packets pushed before t=0 are dropped.
struct TimeShift {
  double b_lo = -1.0;
  double b_hi = 1.0;
};
/// Each packet dropped independently with probability p.
struct PacketLoss {
  double p = 0.01;
};
/// Rotation by U[-max_degrees, max_degrees], nearest neighbour, zero fill.
struct Rotate {
  double max_degrees = 10.0;
};
struct HorizontalFlip {};
/// v' = max(0, c * v + b * max(v)), c ~ U[1 -+ contrast_delta],
/// b ~ U[-+ brightness_delta].
struct ColorJitter {
  double brightness_delta = 0.5;
  double contrast_delta = 0.5;
};

using AugmentationSpec =
    std::variant<NoAug, ChangeRtt, TimeShift, PacketLoss, Rotate, HorizontalFlip, ColorJitter>;

bool is_timeseries(const AugmentationSpec& spec);
bool is_image(const AugmentationSpec& spec);
/// Throws std::invalid_argument on bad parameters.
void validate(const AugmentationSpec& spec);

std::string kind_name(const AugmentationSpec& spec);
nlohmann::json to_json(const AugmentationSpec& spec);
/// Accepts {"kind": name, ...params}; missing params take defaults.
AugmentationSpec augmentation_from_json(const nlohmann::json& j);
AugmentationSpec augmentation_from_name(const std::string& kind);

/// The seven augmentation settings benchmarked in the supervised campaign.
std::vector<AugmentationSpec> default_augmentations();

PacketSeries apply_timeseries(const PacketSeries& series, const AugmentationSpec& spec, Rng& rng);
ImageF apply_image(const ImageF& image, const AugmentationSpec& spec, Rng& rng);

// Building blocks with explicit parameters.
PacketSeries scale_time(const PacketSeries& series, double alpha);
PacketSeries shift_time(const PacketSeries& series, double offset);
ImageF flip_horizontal(const ImageF& image);
ImageF rotate_image(const ImageF& image, double degrees);
ImageF jitter_colors(const ImageF& image, double contrast_factor, double brightness_offset);

struct FlowpicOptions {
  int resolution = 32;
  double window = kDefaultWindow;
  Normalization normalization = Normalization::Raw;
};

/// One augmented model input: time-series specs are applied before the
/// flowpic is built, image specs after, each list in the order given.
ImageF augmented_input(const PacketSeries& series, const std::vector<AugmentationSpec>& chain,
                       const FlowpicOptions& opts, Rng& rng);

/// Two views of one sample. Each view applies both specs, in an order drawn
/// independently per view.
std::pair<ImageF, ImageF> make_views(const PacketSeries& sample,
                                     const std::pair<AugmentationSpec, AugmentationSpec>& pair,
                                     const FlowpicOptions& opts, Rng& rng);

/// `times` independently augmented copies of every sample, sample-major:
/// output[i * times + r] is copy r of samples[i].
std::vector<ImageF> expand_training_set(const std::vector<PacketSeries>& samples,
                                        const AugmentationSpec& spec, std::size_t times,
                                        const FlowpicOptions& opts, Rng& rng);

}  // namespace fpl
