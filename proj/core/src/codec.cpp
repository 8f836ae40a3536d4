#include "vit4lpa/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vit4lpa/error.hpp"
#include "vit4lpa/text_io.hpp"

namespace vit4lpa::data {

const ChannelBounds& NormalizationBounds::channel(int c) const {
    switch (c) {
        case kChannelLoad: return load;
        case kChannelTemperature: return temperature;
        case kChannelIrradiance: return irradiance;
        default: throw ContractError("channel index out of range: " + std::to_string(c));
    }
}

ChannelBounds& NormalizationBounds::channel(int c) {
    return const_cast<ChannelBounds&>(static_cast<const NormalizationBounds*>(this)->channel(c));
}

double NormalizationBounds::normalize(int c, double physical) const {
    const auto& b = channel(c);
    return (physical - b.lower) / (b.upper - b.lower);
}

double NormalizationBounds::denormalize(int c, double pixel) const {
    const auto& b = channel(c);
    return pixel * (b.upper - b.lower) + b.lower;
}

namespace {

const char* channel_name(int c) {
    switch (c) {
        case kChannelLoad: return "load";
        case kChannelTemperature: return "temperature";
        default: return "irradiance";
    }
}

const std::vector<double>& channel_series(const LoadProfileRecord& rec, int c) {
    switch (c) {
        case kChannelLoad: return rec.net_load;
        case kChannelTemperature: return rec.temperature;
        default: return rec.irradiance;
    }
}

}  // namespace

NormalizationBounds compute_bounds(const std::vector<LoadProfileRecord>& records) {
    if (records.empty()) throw ContractError("compute_bounds: empty record list");
    NormalizationBounds out;
    for (int c = 0; c < kChannels; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& rec : records) {
            for (double v : channel_series(rec, c)) {
                if (!std::isfinite(v)) {
                    throw ContractError(std::string("compute_bounds: non-finite value in channel ") +
                                        channel_name(c));
                }
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        if (!(hi > lo)) {
            throw ContractError(std::string("compute_bounds: degenerate ") + channel_name(c) +
                                " channel (min == max == " + format_full(lo) +
                                "); supply explicit bounds in the configuration");
        }
        out.channel(c) = {lo, hi};
    }
    return out;
}

LoadImage profile_to_image(const LoadProfileRecord& record, const NormalizationBounds& bounds,
                           int day_offset, int days, long* clamp_count) {
    if (day_offset < 0 || days < 1) {
        throw ContractError("profile_to_image: invalid window (offset " + std::to_string(day_offset) +
                            ", days " + std::to_string(days) + ")");
    }
    if (record.days() < day_offset + days) {
        throw ContractError("profile_to_image: record '" + record.household_id + "' has " +
                            std::to_string(record.days()) + " days, window needs " +
                            std::to_string(day_offset + days));
    }
    for (int c = 0; c < kChannels; ++c) {
        if (!(bounds.channel(c).upper > bounds.channel(c).lower)) {
            throw ContractError(std::string("profile_to_image: degenerate bounds for channel ") +
                                channel_name(c));
        }
    }
    LoadImage img;
    img.days = days;
    img.slots_per_day = kDefaultSlotsPerDay;
    img.pixels.resize(static_cast<std::size_t>(days) * img.slots_per_day * kChannels);
    img.bounds = bounds;
    img.household_id = record.household_id;
    img.start_time = record.start_time + static_cast<std::int64_t>(day_offset) * 86400;
    long clamped = 0;
    for (int c = 0; c < kChannels; ++c) {
        const auto& series = channel_series(record, c);
        for (int r = 0; r < days; ++r) {
            for (int t = 0; t < img.slots_per_day; ++t) {
                const std::size_t hour = static_cast<std::size_t>(day_offset + r) * 24 + t;
                double p = bounds.normalize(c, series[hour]);
                if (p < 0.0) {
                    p = 0.0;
                    ++clamped;
                } else if (p > 1.0) {
                    p = 1.0;
                    ++clamped;
                }
                img.at(r, t, c) = p;
            }
        }
    }
    if (clamp_count) *clamp_count += clamped;
    return img;
}

std::vector<double> image_to_profile(const LoadImage& image, int channel) {
    if (channel < 0 || channel >= kChannels) {
        throw ContractError("image_to_profile: channel index out of range: " + std::to_string(channel));
    }
    std::vector<double> series(static_cast<std::size_t>(image.days) * image.slots_per_day);
    for (int r = 0; r < image.days; ++r) {
        for (int t = 0; t < image.slots_per_day; ++t) {
            series[static_cast<std::size_t>(r) * image.slots_per_day + t] =
                image.bounds.denormalize(channel, image.at(r, t, channel));
        }
    }
    return series;
}

std::vector<LoadImage> window_dataset(const std::vector<LoadProfileRecord>& records,
                                      int window_days, int stride_days,
                                      const NormalizationBounds& bounds, long* clamp_count) {
    if (stride_days < 1) throw ContractError("window_dataset: stride_days must be >= 1");
    if (window_days < 1) throw ContractError("window_dataset: window_days must be >= 1");

    std::vector<const LoadProfileRecord*> ordered;
    ordered.reserve(records.size());
    for (const auto& r : records) ordered.push_back(&r);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const LoadProfileRecord* a, const LoadProfileRecord* b) {
                         if (a->household_id != b->household_id) return a->household_id < b->household_id;
                         return a->start_time < b->start_time;
                     });

    std::vector<LoadImage> images;
    for (const LoadProfileRecord* rec : ordered) {
        for (int off = 0; off + window_days <= rec->days(); off += stride_days) {
            images.push_back(profile_to_image(*rec, bounds, off, window_days, clamp_count));
        }
    }
    return images;
}

void DatasetManifest::write(const std::string& path) const {
    KeyValueFile kv;
    kv.set("manifest_version", std::to_string(version));
    kv.set("seed", std::to_string(seed));
    kv.set("households", std::to_string(households));
    kv.set("days", std::to_string(days));
    kv.set("channel_order", "load,temperature,irradiance");
    const char* names[] = {"load", "temperature", "irradiance"};
    for (int c = 0; c < kChannels; ++c) {
        kv.set(std::string("bounds_") + names[c] + "_min", format_full(bounds.channel(c).lower));
        kv.set(std::string("bounds_") + names[c] + "_max", format_full(bounds.channel(c).upper));
    }
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ',';
            s += v[i];
        }
        return s;
    };
    kv.set("train_households", join(train_households));
    kv.set("test_households", join(test_households));
    kv.write(path);
}

DatasetManifest DatasetManifest::read(const std::string& path) {
    const KeyValueFile kv = KeyValueFile::read(path);
    DatasetManifest m;
    m.version = static_cast<int>(parse_long(kv.require("manifest_version")));
    if (m.version != 1) {
        throw IoError("unsupported manifest version " + std::to_string(m.version) + " in " + path);
    }
    m.seed = static_cast<std::uint64_t>(std::stoull(kv.require("seed")));
    m.households = static_cast<int>(parse_long(kv.require("households")));
    m.days = static_cast<int>(parse_long(kv.require("days")));
    if (kv.require("channel_order") != "load,temperature,irradiance") {
        throw IoError("unexpected channel_order in " + path);
    }
    const char* names[] = {"load", "temperature", "irradiance"};
    for (int c = 0; c < kChannels; ++c) {
        m.bounds.channel(c).lower = parse_double(kv.require(std::string("bounds_") + names[c] + "_min"));
        m.bounds.channel(c).upper = parse_double(kv.require(std::string("bounds_") + names[c] + "_max"));
    }
    auto split_ids = [](const std::string& s) {
        std::vector<std::string> out;
        if (s.empty()) return out;
        for (auto& part : split(s, ',')) out.push_back(trim(part));
        return out;
    };
    m.train_households = split_ids(kv.require("train_households"));
    m.test_households = split_ids(kv.require("test_households"));
    return m;
}

}  // namespace vit4lpa::data
