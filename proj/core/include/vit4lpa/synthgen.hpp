#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vit4lpa/codec.hpp"
#include "vit4lpa/profile.hpp"
#include "vit4lpa/rng.hpp"

namespace vit4lpa::synth {

/// Behavioral parameters of one simulated household. Presence labels follow
/// directly from the capacities: has_pv iff pv_capacity_kw > 0, has_ev iff
/// ev_charger_kw > 0.
struct HouseholdSpec {
    std::string id;
    double base_level_kw = 0.3;
    double morning_peak_kw = 0.6;   // gaussian bump around 08:00
    double evening_peak_kw = 1.2;   // gaussian bump around 19:00
    double hvac_setpoint_c = 21.0;
    double hvac_gain_kw_per_c = 0.2;
    double hvac_capacity_kw = 3.5;
    double pv_capacity_kw = 0.0;
    double ev_charger_kw = 0.0;
    double ev_session_probability = 0.0;  // per evening
    int ev_start_hour = 19;               // habitual plug-in hour, jittered +-1
    int ev_session_hours = 3;
    double noise_kw = 0.05;

    bool has_pv() const { return pv_capacity_kw > 0.0; }
    bool has_ev() const { return ev_charger_kw > 0.0; }
};

inline constexpr double kHvacDeadbandC = 1.0;

struct WeatherModel {
    double annual_mean_c = 15.0;
    double seasonal_amplitude_c = 10.0;
    double diurnal_amplitude_c = 4.0;
    double temperature_noise_c = 0.8;
    double irradiance_peak_wm2 = 900.0;
    double daylight_halfwidth_mean_h = 6.0;   // hours around solar noon
    double daylight_halfwidth_swing_h = 1.5;  // seasonal swing
    double cloud_smoothness = 0.7;            // day-to-day AR(1) coefficient
    double cloud_floor = 0.25;                // heaviest overcast attenuation
};

struct WeatherSeries {
    std::vector<double> temperature;  // deg C, hourly
    std::vector<double> irradiance;   // W/m^2, hourly, 0 outside daylight
};

/// Deterministic per seed; both series have length days*24.
WeatherSeries gen_weather(int days, const WeatherModel& model, std::uint64_t seed);

/// One labeled household record driven by the shared weather. HVAC responds
/// to |temperature - setpoint| beyond a 1 degree deadband and saturates at
/// its capacity; PV follows irradiance; EV sessions start on the hour near
/// the household's habitual evening plug-in time (within 17:00-22:00), which
/// paints the vertical charging stripe into the load image.
/// net = base + hvac + ev - pv holds exactly.
data::LoadProfileRecord gen_household(const HouseholdSpec& spec, const WeatherSeries& weather,
                                      std::uint64_t seed);

/// Randomized household parameters for dataset generation.
HouseholdSpec sample_household_spec(const std::string& id, bool with_pv, bool with_ev, Rng& rng);

struct DatasetParams {
    int num_households = 150;
    int days = 365;
    double pv_fraction = 0.4;
    double ev_fraction = 0.4;
    double train_fraction = 2.0 / 3.0;  // disjoint household split
    std::uint64_t seed = 0;
    WeatherModel weather;
};

struct GeneratedDataset {
    std::vector<data::LoadProfileRecord> records;  // ordered by household id
    data::DatasetManifest manifest;               // bounds from train records only
};

/// Full in-memory dataset: exactly round(fraction * n) households get PV/EV,
/// every household derives an independent child seed, and the manifest
/// declares the disjoint train/test split.
GeneratedDataset gen_dataset(const DatasetParams& params);

/// data.csv + manifest.txt under dir (created if missing).
void write_dataset(const GeneratedDataset& dataset, const std::string& dir);

/// A concrete augmentation draw, split out so the identity draw is testable.
struct AugmentDraw {
    int day_shift = 0;  // circular, in whole days
    double load_scale = 1.0;
    double temp_scale = 1.0;
    double irr_scale = 1.0;
    double load_noise_std = 0.0;  // kW, applied to the base component only
    double temp_noise_std = 0.0;
    double irr_noise_std = 0.0;
    std::uint64_t noise_seed = 0;
};

AugmentDraw draw_augment(const data::LoadProfileRecord& record, Rng& rng);

/// Applies a draw: circular day shift, coherent scaling of all load
/// components, channel noise. Labels and the net accounting identity are
/// preserved; PV stays zero wherever irradiance is zero.
data::LoadProfileRecord augment_with(const data::LoadProfileRecord& record, const AugmentDraw& draw);

data::LoadProfileRecord augment(const data::LoadProfileRecord& record, Rng& rng);

}  // namespace vit4lpa::synth
