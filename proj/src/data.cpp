#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>

#include "rng.hpp"

namespace privit::data {

namespace {

constexpr double k_pi = 3.14159265358979323846;

}  // namespace

DatasetSplit gen_synthetic(int classes, int per_class, int image_size, uint64_t seed) {
    if (classes < 1 || per_class < 1 || image_size < 1) {
        throw std::invalid_argument("gen_synthetic: all arguments must be positive");
    }
    Rng rng(seed);
    DatasetSplit out;
    out.num_classes = classes;
    out.image_size  = image_size;
    out.channels    = 1;
    const int count = classes * per_class;
    out.images.resize(static_cast<size_t>(count) * out.image_len());
    out.labels.resize(static_cast<size_t>(count));

    int idx = 0;
    for (int cls = 0; cls < classes; ++cls) {
        // one grating per class: orientation spans a half turn, frequency climbs
        const double theta = k_pi * cls / classes;
        const double freq  = 2.0 + cls;
        const double cx    = std::cos(theta);
        const double cy    = std::sin(theta);
        for (int k = 0; k < per_class; ++k, ++idx) {
            const double phase = rng.uniform(0.0, 0.6);
            double * img = out.images.data() + out.image_len() * static_cast<size_t>(idx);
            for (int y = 0; y < image_size; ++y) {
                for (int x = 0; x < image_size; ++x) {
                    const double u = static_cast<double>(x) / image_size;
                    const double v = static_cast<double>(y) / image_size;
                    double val = 0.5 + 0.35 * std::sin(2.0 * k_pi * freq * (u * cx + v * cy) + phase);
                    val += rng.normal(0.0, 0.04);
                    img[static_cast<size_t>(y) * image_size + x] = std::clamp(val, 0.0, 1.0);
                }
            }
            out.labels[static_cast<size_t>(idx)] = cls;
        }
    }
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE * f) const {
        if (f) {
            std::fclose(f);
        }
    }
};

std::vector<uint8_t> read_file(const std::string & path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    std::vector<uint8_t> buf;
    uint8_t chunk[65536];
    size_t  got = 0;
    while ((got = std::fread(chunk, 1, sizeof(chunk), f.get())) > 0) {
        buf.insert(buf.end(), chunk, chunk + got);
    }
    return buf;
}

// bilinear resize of one HWC image, corners aligned to pixel centers
std::vector<double> resize_bilinear(const std::vector<double> & src, int src_size, int dst_size,
                                    int channels) {
    std::vector<double> dst(static_cast<size_t>(dst_size) * dst_size * channels);
    const double scale = static_cast<double>(src_size) / dst_size;
    for (int y = 0; y < dst_size; ++y) {
        for (int x = 0; x < dst_size; ++x) {
            const double sy = (y + 0.5) * scale - 0.5;
            const double sx = (x + 0.5) * scale - 0.5;
            const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, src_size - 1);
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, src_size - 1);
            const int y1 = std::min(y0 + 1, src_size - 1);
            const int x1 = std::min(x0 + 1, src_size - 1);
            const double fy = std::clamp(sy - y0, 0.0, 1.0);
            const double fx = std::clamp(sx - x0, 0.0, 1.0);
            for (int c = 0; c < channels; ++c) {
                auto at = [&](int yy, int xx) {
                    return src[(static_cast<size_t>(yy) * src_size + xx) * channels +
                               static_cast<size_t>(c)];
                };
                const double top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                const double bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                dst[(static_cast<size_t>(y) * dst_size + x) * channels + static_cast<size_t>(c)] =
                    top * (1.0 - fy) + bot * fy;
            }
        }
    }
    return dst;
}

}  // namespace

DatasetSplit load_cifar10_subset(const std::string & path, int per_class, uint64_t seed,
                                 int resize_to) {
    constexpr int    k_classes    = 10;
    constexpr int    k_src_size   = 32;
    constexpr int    k_channels   = 3;
    constexpr size_t k_record_len = 1 + 3072;

    namespace fs = std::filesystem;
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto & e : fs::directory_iterator(path)) {
            if (e.path().extension() == ".bin") {
                files.push_back(e.path().string());
            }
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    if (files.empty()) {
        throw std::runtime_error("no CIFAR-10 .bin batches under '" + path + "'");
    }

    // gather record offsets per class across all batches
    std::vector<std::vector<uint8_t>>          batches;
    std::vector<std::vector<std::pair<size_t, size_t>>> by_class(k_classes);  // (batch, offset)
    for (const std::string & file : files) {
        std::vector<uint8_t> buf = read_file(file);
        if (buf.empty() || buf.size() % k_record_len != 0) {
            throw std::runtime_error("'" + file + "' is corrupt: " + std::to_string(buf.size()) +
                                     " bytes is not a multiple of " + std::to_string(k_record_len));
        }
        const size_t batch_idx = batches.size();
        for (size_t off = 0; off < buf.size(); off += k_record_len) {
            const uint8_t label = buf[off];
            if (label >= k_classes) {
                throw std::runtime_error("'" + file + "' is corrupt: label byte " +
                                         std::to_string(label) + " out of range");
            }
            by_class[label].emplace_back(batch_idx, off);
        }
        batches.push_back(std::move(buf));
    }

    Rng rng(seed);
    const int out_size = resize_to > 0 ? resize_to : k_src_size;
    DatasetSplit out;
    out.num_classes = k_classes;
    out.image_size  = out_size;
    out.channels    = k_channels;
    out.images.reserve(static_cast<size_t>(k_classes) * per_class * out.image_len());

    std::vector<double> hwc(static_cast<size_t>(k_src_size) * k_src_size * k_channels);
    for (int cls = 0; cls < k_classes; ++cls) {
        auto & pool = by_class[static_cast<size_t>(cls)];
        if (static_cast<int>(pool.size()) < per_class) {
            throw std::runtime_error("class " + std::to_string(cls) + " has only " +
                                     std::to_string(pool.size()) + " records, need " +
                                     std::to_string(per_class));
        }
        rng.shuffle(pool);
        for (int k = 0; k < per_class; ++k) {
            const auto [bi, off] = pool[static_cast<size_t>(k)];
            const uint8_t * rec  = batches[bi].data() + off + 1;  // skip label byte
            // CIFAR stores planar RGB; convert to interleaved HWC
            for (int y = 0; y < k_src_size; ++y) {
                for (int x = 0; x < k_src_size; ++x) {
                    for (int c = 0; c < k_channels; ++c) {
                        hwc[(static_cast<size_t>(y) * k_src_size + x) * k_channels +
                            static_cast<size_t>(c)] =
                            rec[static_cast<size_t>(c) * 1024 + static_cast<size_t>(y) * k_src_size + x] /
                            255.0;
                    }
                }
            }
            if (out_size != k_src_size) {
                const std::vector<double> resized =
                    resize_bilinear(hwc, k_src_size, out_size, k_channels);
                out.images.insert(out.images.end(), resized.begin(), resized.end());
            } else {
                out.images.insert(out.images.end(), hwc.begin(), hwc.end());
            }
            out.labels.push_back(cls);
        }
    }
    return out;
}

double nearest_centroid_accuracy(const DatasetSplit & train, const DatasetSplit & test) {
    const size_t len = train.image_len();
    std::vector<std::vector<double>> centroids(static_cast<size_t>(train.num_classes),
                                               std::vector<double>(len, 0.0));
    std::vector<int> counts(static_cast<size_t>(train.num_classes), 0);
    for (int i = 0; i < train.count(); ++i) {
        const int cls = train.labels[static_cast<size_t>(i)];
        const double * img = train.image(i);
        for (size_t j = 0; j < len; ++j) {
            centroids[static_cast<size_t>(cls)][j] += img[j];
        }
        ++counts[static_cast<size_t>(cls)];
    }
    for (int cls = 0; cls < train.num_classes; ++cls) {
        for (double & v : centroids[static_cast<size_t>(cls)]) {
            v /= std::max(1, counts[static_cast<size_t>(cls)]);
        }
    }
    int hits = 0;
    for (int i = 0; i < test.count(); ++i) {
        const double * img = test.image(i);
        int    best      = 0;
        double best_dist = 0.0;
        for (int cls = 0; cls < train.num_classes; ++cls) {
            double dist = 0.0;
            for (size_t j = 0; j < len; ++j) {
                const double dlt = img[j] - centroids[static_cast<size_t>(cls)][j];
                dist += dlt * dlt;
            }
            if (cls == 0 || dist < best_dist) {
                best_dist = dist;
                best      = cls;
            }
        }
        if (best == test.labels[static_cast<size_t>(i)]) {
            ++hits;
        }
    }
    return test.count() ? static_cast<double>(hits) / test.count() : 0.0;
}

}  // namespace privit::data
