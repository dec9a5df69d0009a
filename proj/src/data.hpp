#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace privit::data {

// Images are flattened [count x size x size x channels], values in [0,1].
struct DatasetSplit {
    std::vector<double> images;
    std::vector<int>    labels;
    int num_classes = 0;
    int image_size  = 0;
    int channels    = 0;

    int    count() const { return static_cast<int>(labels.size()); }
    size_t image_len() const {
        return static_cast<size_t>(image_size) * image_size * channels;
    }
    const double * image(int i) const { return images.data() + image_len() * static_cast<size_t>(i); }
};

// Class-dependent oriented gratings with phase jitter and pixel noise.
// Deterministic per seed; grayscale.
DatasetSplit gen_synthetic(int classes, int per_class, int image_size, uint64_t seed);

// Reads the standard CIFAR-10 binary batches (1 label byte + 3072 pixel
// bytes per record) found under `path`, keeping a per-class balanced subset
// chosen with `seed`. Pixels are scaled to [0,1] and converted to HWC; when
// resize_to > 0 and differs from 32 the images are bilinearly resized.
DatasetSplit load_cifar10_subset(const std::string & path, int per_class, uint64_t seed,
                                 int resize_to = 0);

// Classifies by nearest class centroid in pixel space. Used as a sanity
// oracle for dataset separability.
double nearest_centroid_accuracy(const DatasetSplit & train, const DatasetSplit & test);

}  // namespace privit::data
