#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vit4lpa/profile.hpp"

namespace vit4lpa::data {

inline constexpr int kChannels = 3;
inline constexpr int kChannelLoad = 0;
inline constexpr int kChannelTemperature = 1;
inline constexpr int kChannelIrradiance = 2;
inline constexpr int kDefaultImageDays = 24;     // N_D
inline constexpr int kDefaultSlotsPerDay = 24;   // N_T

struct ChannelBounds {
    double lower = 0.0;  // p-
    double upper = 1.0;  // p+
};

/// Per-channel [p-, p+] used for the linear projection onto [0,1]. One pair
/// per dataset, shared by train and test so images stay comparable.
struct NormalizationBounds {
    ChannelBounds load;
    ChannelBounds temperature;
    ChannelBounds irradiance;

    const ChannelBounds& channel(int c) const;
    ChannelBounds& channel(int c);
    double normalize(int c, double physical) const;    // unclamped
    double denormalize(int c, double pixel) const;
};

/// N_D x N_T x 3 image of values in [0,1]; rows are days, columns are hours,
/// channels are load / temperature / irradiance. Pixel layout is row-major
/// with channel last: pixels[(row*slots + hour)*3 + channel].
struct LoadImage {
    int days = kDefaultImageDays;
    int slots_per_day = kDefaultSlotsPerDay;
    std::vector<double> pixels;
    NormalizationBounds bounds;
    std::string household_id;
    std::int64_t start_time = 0;

    double at(int day_row, int hour, int channel) const {
        return pixels[(static_cast<std::size_t>(day_row) * slots_per_day + hour) * kChannels + channel];
    }
    double& at(int day_row, int hour, int channel) {
        return pixels[(static_cast<std::size_t>(day_row) * slots_per_day + hour) * kChannels + channel];
    }
};

/// Per-channel min/max over every record. Throws ContractError on empty
/// input; a degenerate channel (min == max) is an error telling the caller
/// to supply explicit bounds instead.
NormalizationBounds compute_bounds(const std::vector<LoadProfileRecord>& records);

/// Window of `days` full days starting at day_offset, normalized to [0,1]
/// with clamping. Every clamped pixel increments *clamp_count when given.
LoadImage profile_to_image(const LoadProfileRecord& record, const NormalizationBounds& bounds,
                           int day_offset, int days = kDefaultImageDays,
                           long* clamp_count = nullptr);

/// Inverse map for one channel: hourly series in physical units, day-major.
std::vector<double> image_to_profile(const LoadImage& image, int channel);

/// All windows of every record at the given stride, ordered by household_id
/// then start day. Records shorter than one window contribute nothing.
std::vector<LoadImage> window_dataset(const std::vector<LoadProfileRecord>& records,
                                      int window_days, int stride_days,
                                      const NormalizationBounds& bounds,
                                      long* clamp_count = nullptr);

/// Dataset sidecar: bounds at full precision, channel order, the disjoint
/// household split, and generator provenance.
struct DatasetManifest {
    int version = 1;
    std::uint64_t seed = 0;
    int households = 0;
    int days = 0;
    NormalizationBounds bounds;
    std::vector<std::string> train_households;
    std::vector<std::string> test_households;

    void write(const std::string& path) const;
    static DatasetManifest read(const std::string& path);
};

}  // namespace vit4lpa::data
