#include "mamkl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "mamkl/csv.hpp"
#include "mamkl/random.hpp"

namespace mamkl::pipeline {

namespace fs = std::filesystem;
using namespace std::chrono;

sys_days parse_date(const std::string& text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    if (std::sscanf(text.c_str(), "%d%c%u%c%u", &y, &dash1, &m, &dash2, &d) != 5 || dash1 != '-' || dash2 != '-') {
        throw DataError("bad date '" + text + "' (expected YYYY-MM-DD)");
    }
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) throw DataError("invalid calendar date '" + text + "'");
    return sys_days{ymd};
}

std::string format_date(sys_days day) {
    const year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

Calendar::Calendar(sys_days start, int weeks, int offset_minutes)
    : first_day(start - days{weekday{start}.iso_encoding() - 1}), num_weeks(weeks), utc_offset_minutes(offset_minutes) {
    if (weeks < 1) throw DataError("calendar needs at least one week");
}

sys_days Calendar::monday(int week) const { return first_day + days{7 * week}; }

std::int64_t Calendar::week_start(int week) const {
    return static_cast<std::int64_t>(monday(week).time_since_epoch().count()) * kSecondsPerDay -
           static_cast<std::int64_t>(utc_offset_minutes) * 60;
}

std::optional<int> Calendar::week_of(std::int64_t timestamp) const {
    const std::int64_t start = week_start(0);
    if (timestamp < start) return std::nullopt;
    const auto week = (timestamp - start) / (7 * kSecondsPerDay);
    if (week >= num_weeks) return std::nullopt;
    return static_cast<int>(week);
}

sys_days Calendar::local_date(std::int64_t timestamp) const {
    const std::int64_t local = timestamp + static_cast<std::int64_t>(utc_offset_minutes) * 60;
    const std::int64_t day_index = local >= 0 ? local / kSecondsPerDay : -((-local + kSecondsPerDay - 1) / kSecondsPerDay);
    return sys_days{days{day_index}};
}

std::vector<WeekWindow> week_windows(const Calendar& calendar) {
    std::vector<WeekWindow> out;
    for (int w = 0; w < calendar.num_weeks; ++w) {
        WeekWindow win;
        win.index = w;
        win.start = calendar.week_start(w);
        win.end = win.start + 7 * kSecondsPerDay;
        win.lookback_end = win.end;
        win.lookback_start = win.lookback_end - kLookbackDays * kSecondsPerDay;
        out.push_back(win);
    }
    return out;
}

Vector daily_stats(std::span<const EventRecord> day_events, const std::vector<std::string>& kinds) {
    Vector out = Vector::Zero(kStatsPerKind * static_cast<Index>(kinds.size()));
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        std::vector<std::int64_t> times;
        for (const auto& e : day_events) {
            if (e.kind == kinds[k]) times.push_back(e.timestamp);
        }
        std::sort(times.begin(), times.end());
        auto stats = out.segment(kStatsPerKind * static_cast<Index>(k), kStatsPerKind);
        stats[0] = static_cast<double>(times.size());
        if (times.size() < 2) continue;
        std::vector<double> gaps;
        for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(static_cast<double>(times[i] - times[i - 1]));
        double mean = 0.0;
        for (const auto g : gaps) mean += g;
        mean /= static_cast<double>(gaps.size());
        double var = 0.0;
        for (const auto g : gaps) var += (g - mean) * (g - mean);
        var /= static_cast<double>(gaps.size());
        stats[1] = mean;
        stats[2] = var;
        stats[3] = *std::min_element(gaps.begin(), gaps.end());
        stats[4] = *std::max_element(gaps.begin(), gaps.end());
        stats[5] = static_cast<double>(times.back() - times.front()) / static_cast<double>(kSecondsPerDay);
    }
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < tokens_.size(); ++i) lookup_[tokens_[i]] = i;
}

std::size_t Vocabulary::index(const std::string& token) const {
    const auto it = lookup_.find(token);
    return it == lookup_.end() ? oov_index() : it->second;
}

Vector one_hot_sum(std::span<const std::string> records, const Vocabulary& vocab) {
    Vector out = Vector::Zero(static_cast<Index>(vocab.size()));
    for (const auto& r : records) out[static_cast<Index>(vocab.index(r))] += 1.0;
    return out;
}

namespace {

bool parse_bool(const std::string& cell, const csv::Table& table, const csv::Row& row) {
    if (cell == "1" || cell == "true" || cell == "True" || cell == "TRUE") return true;
    if (cell == "0" || cell == "false" || cell == "False" || cell == "FALSE" || cell.empty()) return false;
    throw DataError(table.path.string() + ":" + std::to_string(row.line) + ": not a boolean: '" + cell + "'");
}

void check_width(const csv::Table& table, const csv::Row& row, std::size_t min_cells) {
    if (row.cells.size() < min_cells) {
        throw DataError(table.path.string() + ":" + std::to_string(row.line) + ": expected at least " +
                        std::to_string(min_cells) + " cells, got " + std::to_string(row.cells.size()));
    }
}

bool unknown_value(const std::string& cell) { return cell.empty() || cell == "-"; }

}  // namespace

Sources read_sources(const fs::path& dir) {
    Sources src;
    {
        const auto t = csv::read(dir / "events.csv");
        const auto c_asset = t.column("asset_id"), c_ts = t.column("timestamp"), c_kind = t.column("kind");
        const auto has_value = std::find(t.header.begin(), t.header.end(), "value") != t.header.end();
        const auto c_value = has_value ? t.column("value") : 0;
        for (const auto& row : t.rows) {
            check_width(t, row, t.header.size());
            EventRecord e;
            e.asset_id = row.cells[c_asset];
            e.timestamp = csv::parse_int(row.cells[c_ts], t, row);
            e.kind = row.cells[c_kind];
            if (e.kind.empty()) throw DataError(t.path.string() + ":" + std::to_string(row.line) + ": empty kind");
            if (has_value && !row.cells[c_value].empty()) e.value = csv::parse_double(row.cells[c_value], t, row);
            src.events.push_back(std::move(e));
        }
    }
    {
        const auto t = csv::read(dir / "failures.csv");
        const auto c_asset = t.column("asset_id"), c_ts = t.column("timestamp"), c_test = t.column("is_test_activity");
        for (const auto& row : t.rows) {
            check_width(t, row, t.header.size());
            src.failures.push_back(
                {row.cells[c_asset], csv::parse_int(row.cells[c_ts], t, row), parse_bool(row.cells[c_test], t, row)});
        }
    }
    {
        const auto t = csv::read(dir / "maintenance.csv");
        const auto c_asset = t.column("asset_id"), c_ts = t.column("timestamp"), c_cat = t.column("category");
        for (const auto& row : t.rows) {
            check_width(t, row, t.header.size());
            src.maintenance.push_back({row.cells[c_asset], csv::parse_int(row.cells[c_ts], t, row), row.cells[c_cat]});
        }
    }
    {
        const auto t = csv::read(dir / "equipment.csv");
        const auto c_asset = t.column("asset_id");
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (c != c_asset) src.equipment_attributes.push_back(t.header[c]);
        }
        for (const auto& row : t.rows) {
            check_width(t, row, t.header.size());
            EquipmentRecord r;
            r.asset_id = row.cells[c_asset];
            for (std::size_t c = 0; c < t.header.size(); ++c) {
                if (c != c_asset) r.attributes.push_back(row.cells[c]);
            }
            src.equipment.push_back(std::move(r));
        }
    }
    {
        const auto t = csv::read(dir / "weather.csv");
        const auto c_asset = t.column("asset_id"), c_date = t.column("date");
        std::vector<std::size_t> value_cols;
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (c != c_asset && c != c_date) {
                value_cols.push_back(c);
                src.weather_columns.push_back(t.header[c]);
            }
        }
        for (const auto& row : t.rows) {
            check_width(t, row, t.header.size());
            WeatherRecord w;
            w.asset_id = row.cells[c_asset];
            try {
                w.date = parse_date(row.cells[c_date]);
            } catch (const DataError& e) {
                throw DataError(t.path.string() + ":" + std::to_string(row.line) + ": " + e.what());
            }
            for (const auto c : value_cols) {
                bool empty = false;
                const double v = csv::parse_double(row.cells[c], t, row, &empty);
                w.values.push_back(empty ? std::nullopt : std::optional<double>(v));
            }
            src.weather.push_back(std::move(w));
        }
    }
    if (fs::exists(dir / "outages.csv")) {
        const auto t = csv::read(dir / "outages.csv");
        const auto c_asset = t.column("asset_id"), c_date = t.column("date");
        for (const auto& row : t.rows) {
            check_width(t, row, t.header.size());
            try {
                src.outages.push_back({row.cells[c_asset], parse_date(row.cells[c_date])});
            } catch (const DataError& e) {
                throw DataError(t.path.string() + ":" + std::to_string(row.line) + ": " + e.what());
            }
        }
    }
    return src;
}

namespace {

const char* kWeekdays[7] = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};

double pooled_std(const std::vector<MultiChannelSample>& samples, std::size_t first, std::size_t count) {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
        for (std::size_t m = first; m < first + count; ++m) {
            if (!s.present(m)) continue;
            const auto& cv = *s.channels[m];
            for (Index r = 0; r < cv.values.size(); ++r) {
                if (cv.missing[r]) continue;
                sum += cv.values[r];
                sum_sq += cv.values[r] * cv.values[r];
                ++n;
            }
        }
    }
    if (n < 2) return 1.0;
    const double mean = sum / static_cast<double>(n);
    const double var = sum_sq / static_cast<double>(n) - mean * mean;
    return var > 0 ? std::sqrt(var) : 1.0;
}

}  // namespace

AggregateResult aggregate_weekly(const Sources& sources, const PipelineConfig& config) {
    AggregateResult result;
    const auto& cal = config.calendar;
    result.windows = week_windows(cal);

    std::map<std::string, const EquipmentRecord*> equipment;
    for (const auto& r : sources.equipment) {
        if (!equipment.emplace(r.asset_id, &r).second) throw DataError("duplicate equipment record for '" + r.asset_id + "'");
    }
    std::set<std::string> mentioned;
    for (const auto& e : sources.events) mentioned.insert(e.asset_id);
    for (const auto& f : sources.failures) mentioned.insert(f.asset_id);
    for (const auto& m : sources.maintenance) mentioned.insert(m.asset_id);
    for (const auto& w : sources.weather) mentioned.insert(w.asset_id);
    for (const auto& id : mentioned) {
        if (!equipment.count(id)) result.warnings.push_back("asset '" + id + "' has no equipment record; skipped");
    }

    std::unordered_map<std::string, std::vector<EventRecord>> events;
    for (const auto& e : sources.events) events[e.asset_id].push_back(e);
    for (auto& [id, list] : events) {
        std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    }
    std::unordered_map<std::string, std::vector<const FailureRecord*>> failures;
    for (const auto& f : sources.failures) {
        if (!f.is_test_activity) failures[f.asset_id].push_back(&f);
    }
    std::unordered_map<std::string, std::vector<const MaintenanceRecord*>> maintenance;
    std::vector<std::string> categories;
    for (const auto& m : sources.maintenance) {
        maintenance[m.asset_id].push_back(&m);
        categories.push_back(m.category);
    }
    const Vocabulary maintenance_vocab(categories);
    std::map<std::pair<std::string, int>, const WeatherRecord*> weather;
    for (const auto& w : sources.weather) {
        if (w.values.size() != sources.weather_columns.size()) throw DataError("weather row width mismatch");
        weather[{w.asset_id, static_cast<int>(w.date.time_since_epoch().count())}] = &w;
    }
    std::set<std::pair<std::string, int>> outages;
    for (const auto& o : sources.outages) outages.insert({o.asset_id, static_cast<int>(o.date.time_since_epoch().count())});

    std::vector<Vocabulary> equipment_vocab;
    for (std::size_t a = 0; a < sources.equipment_attributes.size(); ++a) {
        std::vector<std::string> values;
        for (const auto& r : sources.equipment) {
            if (a < r.attributes.size() && !unknown_value(r.attributes[a])) values.push_back(r.attributes[a]);
        }
        equipment_vocab.emplace_back(values);
    }
    int equipment_dim = 0;
    for (const auto& v : equipment_vocab) equipment_dim += static_cast<int>(v.size());

    auto& ds = result.dataset;
    auto& manifest = ds.manifest;
    manifest.name = "weekly";
    const int movement_dim = kStatsPerKind * static_cast<int>(config.event_kinds.size());
    const int weather_dim = static_cast<int>(sources.weather_columns.size());
    if (movement_dim < 1) throw DataError("no event kinds configured");
    if (weather_dim < 1) throw DataError("weather file has no value columns");
    for (int d = 0; d < 7; ++d) {
        ChannelSpec spec;
        spec.name = std::string("movement_") + kWeekdays[d];
        spec.dim = movement_dim;
        spec.kernel = KernelKind::rbf;
        spec.feature_dim = 2 * config.movement_frequencies;
        spec.approx = ApproxKind::fastfood;
        manifest.channels.push_back(spec);
    }
    for (int d = 0; d < 7; ++d) {
        ChannelSpec spec;
        spec.name = std::string("weather_") + kWeekdays[d];
        spec.dim = weather_dim;
        spec.kernel = KernelKind::rbf;
        spec.feature_dim = 2 * config.weather_frequencies;
        spec.approx = ApproxKind::fastfood;
        manifest.channels.push_back(spec);
    }
    {
        ChannelSpec spec;
        spec.name = "maintenance";
        spec.dim = static_cast<int>(maintenance_vocab.size());
        spec.feature_dim = spec.dim;
        manifest.channels.push_back(spec);
        spec.name = "equipment";
        spec.dim = std::max(equipment_dim, 1);
        spec.feature_dim = spec.dim;
        manifest.channels.push_back(spec);
    }
    for (std::size_t m = 0; m < manifest.channels.size(); ++m) {
        manifest.channels[m].id = static_cast<int>(m);
        manifest.channels[m].map_seed = derive_seed(config.seed, "map " + manifest.channels[m].name);
    }
    constexpr std::size_t kMovement = 0, kWeather = 7, kMaintenance = 14, kEquipment = 15;

    int group = 0;
    for (const auto& [asset, equip] : equipment) {
        const auto& asset_events = events[asset];
        for (int w = 0; w + 1 < cal.num_weeks; ++w) {
            const auto& win = result.windows[static_cast<std::size_t>(w)];
            const auto& next = result.windows[static_cast<std::size_t>(w + 1)];
            MultiChannelSample sample;
            sample.sample_id = asset + "@" + format_date(cal.monday(w));
            sample.group_id = group;
            sample.channels.resize(manifest.channels.size());

            const auto week_begin = std::lower_bound(asset_events.begin(), asset_events.end(), win.start,
                                                     [](const auto& e, std::int64_t t) { return e.timestamp < t; });
            const auto week_end = std::lower_bound(week_begin, asset_events.end(), win.end,
                                                   [](const auto& e, std::int64_t t) { return e.timestamp < t; });
            const bool logged_week = week_begin != week_end;  // no events at all: logs lost
            for (int d = 0; d < 7; ++d) {
                const auto date = cal.monday(w) + days{d};
                const int key = static_cast<int>(date.time_since_epoch().count());
                const std::int64_t day_start = win.start + d * kSecondsPerDay;
                if (logged_week && !outages.count({asset, key})) {
                    const auto lo = std::lower_bound(week_begin, week_end, day_start,
                                                     [](const auto& e, std::int64_t t) { return e.timestamp < t; });
                    const auto hi = std::lower_bound(lo, week_end, day_start + kSecondsPerDay,
                                                     [](const auto& e, std::int64_t t) { return e.timestamp < t; });
                    sample.channels[kMovement + static_cast<std::size_t>(d)] = ChannelValue(
                        daily_stats(std::span<const EventRecord>(&*lo, static_cast<std::size_t>(hi - lo)), config.event_kinds));
                }
                const auto wx = weather.find({asset, key});
                if (wx != weather.end()) {
                    Vector values(weather_dim);
                    Eigen::Array<bool, Eigen::Dynamic, 1> missing(weather_dim);
                    for (int c = 0; c < weather_dim; ++c) {
                        const auto& v = wx->second->values[static_cast<std::size_t>(c)];
                        missing[c] = !v.has_value();
                        values[c] = v.value_or(std::nan(""));
                    }
                    if (!missing.all()) {
                        sample.channels[kWeather + static_cast<std::size_t>(d)] = ChannelValue(values, missing);
                    }
                }
            }

            std::vector<std::string> records;
            for (const auto* m : maintenance[asset]) {
                if (m->timestamp >= win.lookback_start && m->timestamp < win.lookback_end) records.push_back(m->category);
            }
            if (!records.empty()) sample.channels[kMaintenance] = ChannelValue(one_hot_sum(records, maintenance_vocab));

            Vector eq = Vector::Zero(manifest.channels[kEquipment].dim);
            bool any_known = false;
            Index offset = 0;
            for (std::size_t a = 0; a < equipment_vocab.size(); ++a) {
                const auto& value = a < equip->attributes.size() ? equip->attributes[a] : std::string();
                if (!unknown_value(value)) {
                    eq[offset + static_cast<Index>(equipment_vocab[a].index(value))] = 1.0;
                    any_known = true;
                }
                offset += static_cast<Index>(equipment_vocab[a].size());
            }
            if (any_known) sample.channels[kEquipment] = ChannelValue(eq);

            sample.label = -1;
            for (const auto* f : failures[asset]) {
                if (f->timestamp >= next.start && f->timestamp < next.end) sample.label = 1;
            }
            if (sample.presence() == std::vector<bool>(manifest.channels.size(), false)) {
                result.warnings.push_back("sample '" + sample.sample_id + "' has no channel; dropped");
                ds.rejected_ids.push_back(sample.sample_id);
                continue;
            }
            ds.samples.push_back(std::move(sample));
        }
        ++group;
    }
    manifest.num_groups = std::max(group, 1);

    const double movement_sigma = pooled_std(ds.samples, kMovement, 7);
    const double weather_sigma = pooled_std(ds.samples, kWeather, 7);
    for (std::size_t d = 0; d < 7; ++d) {
        manifest.channels[kMovement + d].bandwidth = movement_sigma;
        manifest.channels[kWeather + d].bandwidth = weather_sigma;
    }
    if (config.concat) {
        manifest.concat = make_auto_concat(manifest.channels, config.seed);
        manifest.concat->feature_dim = 2 * config.concat_frequencies;
    }
    manifest.validate();
    ds.channel_means = compute_channel_means(manifest, ds.samples);
    return result;
}

}  // namespace mamkl::pipeline
