#pragma once

// Local experiment log (one JSON object per line) with an optional
// JSON-over-HTTP webhook mirror.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace dermbench {

struct RunEvent {
    std::string run_id;
    std::string ts;  // ISO 8601 UTC
    std::string phase;
    std::string metric;
    double value = 0.0;
    std::uint64_t step = 0;

    bool operator==(const RunEvent&) const = default;
};

nlohmann::ordered_json to_json(const RunEvent& e);
RunEvent event_from_json(const nlohmann::json& j);

/// Reads a JSONL event log; throws on malformed lines.
std::vector<RunEvent> read_events(const std::string& path);

std::string utc_timestamp();

struct TrackerOptions {
    std::string log_path;
    std::string webhook_url;  // http://host[:port]/path; empty disables
    int attempts = 3;
    std::chrono::milliseconds base_delay{250};  // doubled after each failed attempt
    std::chrono::milliseconds timeout{2000};
};

class Tracker {
public:
    /// Opens (appends to) the log; an unwritable log is fatal.
    Tracker(std::string run_id, TrackerOptions options);

    const std::string& run_id() const { return run_id_; }

    /// Appends `e` (run_id and ts are filled in when empty). Steps must not
    /// decrease within a metric stream.
    RunEvent track(RunEvent e);
    /// Convenience: the step is the next one in the (phase, metric) stream.
    RunEvent log(const std::string& phase, const std::string& metric, double value);

    std::size_t webhook_failures() const;
    std::vector<std::string> warnings() const;

private:
    bool post(const std::string& body);

    std::string run_id_;
    TrackerOptions options_;
    std::ofstream out_;
    mutable std::mutex mutex_;
    std::map<std::string, std::uint64_t> next_step_;
    std::map<std::string, std::uint64_t> last_step_;
    std::size_t webhook_failures_ = 0;
    std::vector<std::string> warnings_;
};

}  // namespace dermbench
