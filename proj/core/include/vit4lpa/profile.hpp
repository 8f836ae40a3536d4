#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vit4lpa::data {

// ISO-8601 UTC <-> epoch seconds ("2021-01-01T05:00:00Z").
std::int64_t parse_timestamp(const std::string& iso);
std::string format_timestamp(std::int64_t epoch_seconds);

/// One household's hourly multi-channel series with appliance sub-metering
/// and presence labels. All arrays share one length, a whole number of days.
struct LoadProfileRecord {
    std::string household_id;
    std::int64_t start_time = 0;  // epoch seconds, hour-aligned UTC
    std::vector<double> net_load;     // kW, may be negative behind PV
    std::vector<double> temperature;  // degrees C
    std::vector<double> irradiance;   // W/m^2, >= 0
    std::vector<double> hvac;         // kW
    std::vector<double> ev;           // kW
    std::vector<double> pv;           // kW generation, >= 0
    bool has_pv = false;
    bool has_ev = false;

    std::size_t hours() const { return net_load.size(); }
    int days() const { return static_cast<int>(net_load.size() / 24); }

    // Checks the structural invariants (shared length, multiple of 24,
    // nonnegative irradiance and pv, hour-aligned start).
    void validate() const;
};

// Hourly CSV with header
//   household_id,timestamp,net_kw,temp_c,ghi_wm2,hvac_kw,ev_kw,pv_kw,has_pv,has_ev
// Rows are grouped per household in time order.
void write_records_csv(const std::string& path, const std::vector<LoadProfileRecord>& records);
std::vector<LoadProfileRecord> read_records_csv(const std::string& path);

}  // namespace vit4lpa::data
