#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mamkl/core.hpp"

namespace mamkl::pipeline {

inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr int kLookbackDays = 35;

struct EventRecord {
    std::string asset_id;
    std::int64_t timestamp = 0;  // seconds since epoch, UTC
    std::string kind;
    std::optional<double> value;
};

struct FailureRecord {
    std::string asset_id;
    std::int64_t timestamp = 0;
    bool is_test_activity = false;
};

struct MaintenanceRecord {
    std::string asset_id;
    std::int64_t timestamp = 0;
    std::string category;
};

struct EquipmentRecord {
    std::string asset_id;
    std::vector<std::string> attributes;  // "-" or empty marks an unknown value
};

struct WeatherRecord {
    std::string asset_id;
    std::chrono::sys_days date;
    std::vector<std::optional<double>> values;
};

struct Outage {
    std::string asset_id;
    std::chrono::sys_days date;  // local date with lost movement logs
};

struct Sources {
    std::vector<EventRecord> events;
    std::vector<FailureRecord> failures;
    std::vector<MaintenanceRecord> maintenance;
    std::vector<std::string> equipment_attributes;
    std::vector<EquipmentRecord> equipment;
    std::vector<std::string> weather_columns;
    std::vector<WeatherRecord> weather;
    std::vector<Outage> outages;
};

// Reads events.csv, failures.csv, maintenance.csv, equipment.csv and
// weather.csv (plus optional outages.csv) from `dir`.
Sources read_sources(const std::filesystem::path& dir);

std::chrono::sys_days parse_date(const std::string& text);
std::string format_date(std::chrono::sys_days day);

// ISO weeks: Monday 00:00 local time, local = UTC + offset.
struct Calendar {
    std::chrono::sys_days first_day;  // snapped back to its Monday
    int num_weeks = 1;
    int utc_offset_minutes = 0;

    Calendar() = default;
    Calendar(std::chrono::sys_days start, int weeks, int offset_minutes = 0);

    std::chrono::sys_days monday(int week) const;
    std::int64_t week_start(int week) const;  // UTC seconds
    // Week index containing `timestamp`, if inside the calendar range.
    std::optional<int> week_of(std::int64_t timestamp) const;
    std::chrono::sys_days local_date(std::int64_t timestamp) const;
};

struct WeekWindow {
    int index = 0;
    std::int64_t start = 0;
    std::int64_t end = 0;             // start + 7 days
    std::int64_t lookback_start = 0;  // next week's start - 35 days
    std::int64_t lookback_end = 0;    // next week's start
};

std::vector<WeekWindow> week_windows(const Calendar& calendar);

inline const std::vector<std::string>& default_event_kinds() {
    static const std::vector<std::string> kinds{"normal", "reverse", "lost_detection", "restored_detection",
                                                "request"};
    return kinds;
}

inline constexpr int kStatsPerKind = 6;

// Per configured kind: count, mean gap, gap variance, min gap, max gap and
// active fraction of the day ((last - first) / 86400). Gaps are seconds
// between consecutive events of that kind; fewer than two events give 0.
Vector daily_stats(std::span<const EventRecord> day_events, const std::vector<std::string>& kinds);

// Sorted category list with one reserved out-of-vocabulary slot at the end.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size() + 1; }
    std::size_t oov_index() const { return tokens_.size(); }
    std::size_t index(const std::string& token) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, std::size_t> lookup_;
};

Vector one_hot_sum(std::span<const std::string> records, const Vocabulary& vocab);

struct PipelineConfig {
    Calendar calendar;
    std::vector<std::string> event_kinds = default_event_kinds();
    int movement_frequencies = 1024;
    int weather_frequencies = 2048;
    int concat_frequencies = 2048;
    bool concat = true;
    std::uint64_t seed = 0;
};

struct AggregateResult {
    Dataset dataset;
    std::vector<std::string> warnings;
    std::vector<WeekWindow> windows;
};

// One sample per (asset, week i) for weeks that have a following week in
// the calendar. Channels: 7 daily movement channels and 7 daily weather
// channels from week i, maintenance from the 35 days before week i+1, and
// static equipment details. Label +1 iff a non-test failure occurs in week i+1.
AggregateResult aggregate_weekly(const Sources& sources, const PipelineConfig& config);

}  // namespace mamkl::pipeline
