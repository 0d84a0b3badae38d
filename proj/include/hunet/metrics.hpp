#pragma once

// Evaluation metrics: intensity-uniformity measures (CV, SNR) for correction
// quality and overlap measures (Dice, IoU, PPV) for segmentation masks.

#include <cstdint>
#include <vector>

namespace hunet {

using Mask = std::vector<std::uint8_t>;

// 100 * sigma / mu over the masked pixels (population sigma).
double cv_metric(const std::vector<double>& img, const Mask& roi);

// mean(foreground) / std(background).
double snr_metric(const std::vector<double>& img, const Mask& fg, const Mask& bg);

// Amplitude-ratio convention: 20 * log10(ratio).
double snr_to_db(double ratio);

// Overlap metrics; two empty masks count as perfect agreement (1).
double dice(const Mask& a, const Mask& b);
double iou(const Mask& a, const Mask& b);
double ppv(const Mask& pred, const Mask& gt);

// Pearson correlation over all pixels, or over a mask.
double pearson(const std::vector<double>& a, const std::vector<double>& b);
double pearson_masked(const std::vector<double>& a, const std::vector<double>& b, const Mask& roi);

// Otsu's threshold, for ROI selection on images without a known mask.
Mask otsu_mask(const std::vector<double>& img);

} // namespace hunet
