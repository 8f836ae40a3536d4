#include "vit4lpa/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "vit4lpa/error.hpp"

namespace vit4lpa::synth {

namespace {
constexpr double kTwoPi = 6.283185307179586;
constexpr std::int64_t kDatasetEpoch = 1609459200;  // 2021-01-01T00:00:00Z
}  // namespace

WeatherSeries gen_weather(int days, const WeatherModel& model, std::uint64_t seed) {
    if (days < 1) throw ContractError("gen_weather: days must be >= 1");
    Rng rng(seed);
    WeatherSeries w;
    const std::size_t n = static_cast<std::size_t>(days) * 24;
    w.temperature.resize(n);
    w.irradiance.resize(n);

    // day-scale cloud attenuation, AR(1) toward fresh uniform draws
    std::vector<double> cloud(static_cast<std::size_t>(days));
    double state = rng.uniform();
    for (int d = 0; d < days; ++d) {
        state = model.cloud_smoothness * state + (1.0 - model.cloud_smoothness) * rng.uniform();
        cloud[static_cast<std::size_t>(d)] = model.cloud_floor + (1.0 - model.cloud_floor) * state;
    }

    for (int d = 0; d < days; ++d) {
        // warmest around day 200, longest daylight around day 171
        const double seasonal = std::sin(kTwoPi * (d - 110) / 365.0);
        const double halfwidth = model.daylight_halfwidth_mean_h +
                                 model.daylight_halfwidth_swing_h * std::sin(kTwoPi * (d - 80) / 365.0);
        for (int h = 0; h < 24; ++h) {
            const std::size_t i = static_cast<std::size_t>(d) * 24 + h;
            double temp = model.annual_mean_c + model.seasonal_amplitude_c * seasonal -
                          model.diurnal_amplitude_c * std::cos(kTwoPi * (h - 14) / 24.0) +
                          rng.normal(0.0, model.temperature_noise_c);
            w.temperature[i] = std::clamp(temp, -30.0, 50.0);
            const double solar = std::abs(h - 12.0);
            if (solar < halfwidth) {
                const double shape = std::cos(0.5 * kTwoPi * solar / (2.0 * halfwidth));
                w.irradiance[i] = model.irradiance_peak_wm2 * std::pow(shape, 1.3) *
                                  cloud[static_cast<std::size_t>(d)];
            } else {
                w.irradiance[i] = 0.0;
            }
        }
    }
    return w;
}

data::LoadProfileRecord gen_household(const HouseholdSpec& spec, const WeatherSeries& weather,
                                      std::uint64_t seed) {
    const std::size_t n = weather.temperature.size();
    if (n == 0 || n % 24 != 0 || weather.irradiance.size() != n) {
        throw ContractError("gen_household: weather series must cover whole days");
    }
    const int days = static_cast<int>(n / 24);
    Rng rng(seed);

    data::LoadProfileRecord rec;
    rec.household_id = spec.id;
    rec.start_time = kDatasetEpoch;
    rec.temperature = weather.temperature;
    rec.irradiance = weather.irradiance;
    rec.has_pv = spec.has_pv();
    rec.has_ev = spec.has_ev();

    std::vector<double> base(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int day = static_cast<int>(i / 24);
        const int h = static_cast<int>(i % 24);
        const double weekend = (day % 7 >= 5) ? 1.15 : 1.0;
        const double morning = spec.morning_peak_kw * std::exp(-0.5 * std::pow((h - 8.0) / 1.5, 2));
        const double evening = spec.evening_peak_kw * std::exp(-0.5 * std::pow((h - 19.0) / 2.5, 2));
        base[i] = std::max(0.02, spec.base_level_kw + weekend * (morning + evening) +
                                     rng.normal(0.0, spec.noise_kw));
    }

    rec.hvac.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double delta = std::abs(weather.temperature[i] - spec.hvac_setpoint_c);
        const double demand = spec.hvac_gain_kw_per_c * std::max(0.0, delta - kHvacDeadbandC);
        const double drawn = std::min(spec.hvac_capacity_kw, demand) +
                             rng.normal(0.0, 0.5 * spec.noise_kw);
        rec.hvac[i] = std::max(0.0, drawn);
    }

    rec.pv.resize(n, 0.0);
    if (spec.has_pv()) {
        const double peak = 900.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double frac = weather.irradiance[i] / peak;
            rec.pv[i] = std::max(0.0, spec.pv_capacity_kw * frac * (1.0 + rng.normal(0.0, 0.03)));
        }
    }

    rec.ev.resize(n, 0.0);
    if (spec.has_ev()) {
        for (int d = 0; d < days; ++d) {
            if (!rng.bernoulli(spec.ev_session_probability)) continue;
            // habitual hour with +-1 jitter, clamped to the evening window
            const int start = std::clamp(spec.ev_start_hour + rng.uniform_int(3) - 1, 17, 22);
            for (int k = 0; k < spec.ev_session_hours; ++k) {
                const std::size_t i = static_cast<std::size_t>(d) * 24 + start + k;
                if (i >= n) break;
                rec.ev[i] = spec.ev_charger_kw;
            }
        }
    }

    rec.net_load.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        rec.net_load[i] = base[i] + rec.hvac[i] + rec.ev[i] - rec.pv[i];
    }
    rec.validate();
    return rec;
}

HouseholdSpec sample_household_spec(const std::string& id, bool with_pv, bool with_ev, Rng& rng) {
    HouseholdSpec s;
    s.id = id;
    s.base_level_kw = rng.uniform(0.15, 0.5);
    s.morning_peak_kw = rng.uniform(0.3, 1.0);
    s.evening_peak_kw = rng.uniform(0.6, 2.0);
    s.hvac_setpoint_c = rng.uniform(19.0, 23.0);
    s.hvac_gain_kw_per_c = rng.uniform(0.08, 0.3);
    s.hvac_capacity_kw = rng.uniform(2.0, 5.0);
    s.pv_capacity_kw = with_pv ? rng.uniform(3.0, 8.0) : 0.0;
    s.ev_charger_kw = with_ev ? (rng.bernoulli(0.5) ? 7.2 : 3.6) : 0.0;
    s.ev_session_probability = with_ev ? rng.uniform(0.45, 0.8) : 0.0;
    s.ev_start_hour = with_ev ? 18 + rng.uniform_int(4) : 19;  // habitual 18..21
    s.ev_session_hours = with_ev ? 2 + rng.uniform_int(3) : 0;
    s.noise_kw = rng.uniform(0.02, 0.08);
    return s;
}

GeneratedDataset gen_dataset(const DatasetParams& params) {
    if (params.num_households < 1 || params.days < 1) {
        throw ContractError("gen_dataset: need at least one household and one day");
    }
    if (params.pv_fraction < 0.0 || params.pv_fraction > 1.0 || params.ev_fraction < 0.0 ||
        params.ev_fraction > 1.0) {
        throw ContractError("gen_dataset: fractions must lie in [0,1]");
    }
    const int n = params.num_households;
    const int n_pv = static_cast<int>(std::lround(params.pv_fraction * n));
    const int n_ev = static_cast<int>(std::lround(params.ev_fraction * n));

    auto pick_subset = [&](const char* label, int count) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(params.seed, std::string("assign:") + label));
        rng.shuffle(order);
        std::vector<std::uint8_t> chosen(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < count; ++i) chosen[static_cast<std::size_t>(order[i])] = 1;
        return chosen;
    };
    const auto pv_set = pick_subset("pv", n_pv);
    const auto ev_set = pick_subset("ev", n_ev);

    const WeatherSeries weather = gen_weather(params.days, params.weather, derive_seed(params.seed, "weather"));

    GeneratedDataset out;
    out.records.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "H%03d", i);
        Rng spec_rng(derive_seed(params.seed, std::string("spec:") + id));
        const HouseholdSpec spec = sample_household_spec(id, pv_set[static_cast<std::size_t>(i)] != 0,
                                                         ev_set[static_cast<std::size_t>(i)] != 0,
                                                         spec_rng);
        out.records.push_back(
            gen_household(spec, weather, derive_seed(params.seed, std::string("household:") + id)));
    }

    const int n_train = std::clamp(static_cast<int>(std::lround(params.train_fraction * n)), 1, n);
    std::vector<data::LoadProfileRecord> train_records;
    for (int i = 0; i < n; ++i) {
        if (i < n_train) {
            out.manifest.train_households.push_back(out.records[static_cast<std::size_t>(i)].household_id);
            train_records.push_back(out.records[static_cast<std::size_t>(i)]);
        } else {
            out.manifest.test_households.push_back(out.records[static_cast<std::size_t>(i)].household_id);
        }
    }
    out.manifest.seed = params.seed;
    out.manifest.households = n;
    out.manifest.days = params.days;
    out.manifest.bounds = data::compute_bounds(train_records);
    return out;
}

void write_dataset(const GeneratedDataset& dataset, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir + " (" + ec.message() + ")");
    data::write_records_csv(dir + "/data.csv", dataset.records);
    dataset.manifest.write(dir + "/manifest.txt");
}

AugmentDraw draw_augment(const data::LoadProfileRecord& record, Rng& rng) {
    auto range_of = [](const std::vector<double>& v) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return *hi - *lo;
    };
    AugmentDraw d;
    d.day_shift = rng.uniform_int(7) - 3;  // -3..3
    d.load_scale = rng.uniform(0.9, 1.1);
    d.temp_scale = rng.uniform(0.9, 1.1);
    d.irr_scale = rng.uniform(0.9, 1.1);
    d.load_noise_std = 0.02 * range_of(record.net_load);
    d.temp_noise_std = 0.02 * range_of(record.temperature);
    d.irr_noise_std = 0.02 * range_of(record.irradiance);
    d.noise_seed = rng.next_u64();
    return d;
}

data::LoadProfileRecord augment_with(const data::LoadProfileRecord& record, const AugmentDraw& draw) {
    record.validate();
    data::LoadProfileRecord out = record;
    const std::size_t n = record.hours();

    if (draw.day_shift != 0) {
        const long shift_hours = static_cast<long>(draw.day_shift) * 24;
        auto rotate = [&](std::vector<double>& v) {
            // positive shift moves content forward in time, circularly
            const long m = static_cast<long>(n);
            const long k = ((shift_hours % m) + m) % m;
            std::rotate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m - k), v.end());
        };
        rotate(out.net_load);
        rotate(out.temperature);
        rotate(out.irradiance);
        rotate(out.hvac);
        rotate(out.ev);
        rotate(out.pv);
    }

    // Only derive and re-assemble the base component when something touches
    // the load side; the reconstruction is not bit-exact in floating point.
    const bool touches_load =
        draw.load_scale != 1.0 || draw.load_noise_std > 0.0 || draw.irr_noise_std > 0.0;
    std::vector<double> base(n);
    for (std::size_t i = 0; i < n; ++i) {
        base[i] = out.net_load[i] - out.hvac[i] - out.ev[i] + out.pv[i];
    }

    if (draw.load_scale != 1.0) {
        for (std::size_t i = 0; i < n; ++i) {
            base[i] *= draw.load_scale;
            out.hvac[i] *= draw.load_scale;
            out.ev[i] *= draw.load_scale;
            out.pv[i] *= draw.load_scale;
        }
    }
    if (draw.temp_scale != 1.0) {
        for (auto& v : out.temperature) v *= draw.temp_scale;
    }
    if (draw.irr_scale != 1.0) {
        for (auto& v : out.irradiance) v *= draw.irr_scale;
    }

    if (draw.load_noise_std > 0.0 || draw.temp_noise_std > 0.0 || draw.irr_noise_std > 0.0) {
        Rng rng(draw.noise_seed);
        if (draw.load_noise_std > 0.0) {
            for (auto& v : base) v += rng.normal(0.0, draw.load_noise_std);
        }
        if (draw.temp_noise_std > 0.0) {
            for (auto& v : out.temperature) v += rng.normal(0.0, draw.temp_noise_std);
        }
        if (draw.irr_noise_std > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                if (out.irradiance[i] <= 0.0) continue;  // nights stay exactly dark
                out.irradiance[i] = std::max(0.0, out.irradiance[i] + rng.normal(0.0, draw.irr_noise_std));
                if (out.irradiance[i] == 0.0) out.pv[i] = 0.0;  // keep pv==0 where irradiance==0
            }
        }
    }

    if (touches_load) {
        for (std::size_t i = 0; i < n; ++i) {
            out.net_load[i] = base[i] + out.hvac[i] + out.ev[i] - out.pv[i];
        }
    }
    return out;
}

data::LoadProfileRecord augment(const data::LoadProfileRecord& record, Rng& rng) {
    return augment_with(record, draw_augment(record, rng));
}

}  // namespace vit4lpa::synth
