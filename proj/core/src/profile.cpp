#include "vit4lpa/profile.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "vit4lpa/error.hpp"
#include "vit4lpa/text_io.hpp"

namespace vit4lpa::data {

namespace {

// Howard Hinnant's civil-date algorithms; no timezone machinery needed
// because everything is UTC.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

}  // namespace

std::int64_t parse_timestamp(const std::string& iso) {
    int y, mo, d, h, mi, s;
    if (std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%dZ", &y, &mo, &d, &h, &mi, &s) != 6) {
        throw ContractError("bad timestamp (want YYYY-MM-DDThh:mm:ssZ): '" + iso + "'");
    }
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t t) {
    std::int64_t days = t / 86400;
    std::int64_t rem = t % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int y, mo, d;
    civil_from_days(days, y, mo, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02lld:%02lld:%02lldZ", y, mo, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

void LoadProfileRecord::validate() const {
    const std::size_t n = net_load.size();
    if (temperature.size() != n || irradiance.size() != n || hvac.size() != n ||
        ev.size() != n || pv.size() != n) {
        throw ContractError("record '" + household_id + "': channel lengths disagree");
    }
    if (n == 0 || n % 24 != 0) {
        throw ContractError("record '" + household_id + "': length " + std::to_string(n) +
                            " is not a positive multiple of 24");
    }
    if (start_time % 3600 != 0) {
        throw ContractError("record '" + household_id + "': start_time not hour-aligned");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (irradiance[i] < 0.0) {
            throw ContractError("record '" + household_id + "': negative irradiance at hour " +
                                std::to_string(i));
        }
        if (pv[i] < 0.0) {
            throw ContractError("record '" + household_id + "': negative pv at hour " +
                                std::to_string(i));
        }
    }
}

namespace {
const char* kCsvHeader = "household_id,timestamp,net_kw,temp_c,ghi_wm2,hvac_kw,ev_kw,pv_kw,has_pv,has_ev";
}

void write_records_csv(const std::string& path, const std::vector<LoadProfileRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out << kCsvHeader << '\n';
    for (const auto& rec : records) {
        rec.validate();
        for (std::size_t i = 0; i < rec.hours(); ++i) {
            out << rec.household_id << ',' << format_timestamp(rec.start_time + static_cast<std::int64_t>(i) * 3600)
                << ',' << format_g12(rec.net_load[i]) << ',' << format_g12(rec.temperature[i])
                << ',' << format_g12(rec.irradiance[i]) << ',' << format_g12(rec.hvac[i]) << ','
                << format_g12(rec.ev[i]) << ',' << format_g12(rec.pv[i]) << ','
                << (rec.has_pv ? 1 : 0) << ',' << (rec.has_ev ? 1 : 0) << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<LoadProfileRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kCsvHeader) {
        throw IoError("bad CSV header in " + path);
    }
    std::vector<LoadProfileRecord> records;
    LoadProfileRecord* cur = nullptr;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 10) {
            throw IoError(path + ":" + std::to_string(line_no) + ": expected 10 fields, got " +
                          std::to_string(f.size()));
        }
        const std::int64_t t = parse_timestamp(f[1]);
        if (!cur || cur->household_id != f[0]) {
            records.emplace_back();
            cur = &records.back();
            cur->household_id = f[0];
            cur->start_time = t;
        } else {
            const std::int64_t expect = cur->start_time + static_cast<std::int64_t>(cur->hours()) * 3600;
            if (t != expect) {
                throw IoError(path + ":" + std::to_string(line_no) + ": non-contiguous timestamp for '" +
                              f[0] + "'");
            }
        }
        cur->net_load.push_back(parse_double(f[2]));
        cur->temperature.push_back(parse_double(f[3]));
        cur->irradiance.push_back(parse_double(f[4]));
        cur->hvac.push_back(parse_double(f[5]));
        cur->ev.push_back(parse_double(f[6]));
        cur->pv.push_back(parse_double(f[7]));
        cur->has_pv = f[8] == "1";
        cur->has_ev = f[9] == "1";
    }
    for (const auto& rec : records) rec.validate();
    return records;
}

}  // namespace vit4lpa::data
