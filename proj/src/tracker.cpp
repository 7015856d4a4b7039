#include "dermbench/tracker.hpp"

#include "dermbench/core.hpp"

#include <httplib.h>

#include <ctime>
#include <filesystem>
#include <thread>

namespace dermbench {

nlohmann::ordered_json to_json(const RunEvent& e) {
    nlohmann::ordered_json j;
    j["run_id"] = e.run_id;
    j["ts"] = e.ts;
    j["phase"] = e.phase;
    j["metric"] = e.metric;
    j["value"] = e.value;
    j["step"] = e.step;
    return j;
}

RunEvent event_from_json(const nlohmann::json& j) {
    RunEvent e;
    e.run_id = j.at("run_id").get<std::string>();
    e.ts = j.at("ts").get<std::string>();
    e.phase = j.at("phase").get<std::string>();
    e.metric = j.at("metric").get<std::string>();
    e.value = j.at("value").get<double>();
    e.step = j.at("step").get<std::uint64_t>();
    return e;
}

std::vector<RunEvent> read_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open event log " + path);
    std::vector<RunEvent> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            events.push_back(event_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(path + ":" + std::to_string(line_no) + ": malformed event: " + ex.what());
        }
    }
    return events;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char date[32];
    std::strftime(date, sizeof date, "%Y-%m-%dT%H:%M:%S", &tm);
    char frac[8];
    std::snprintf(frac, sizeof frac, ".%03dZ", static_cast<int>(ms));
    return std::string(date) + frac;
}

Tracker::Tracker(std::string run_id, TrackerOptions options) : run_id_(std::move(run_id)), options_(std::move(options)) {
    if (options_.log_path.empty()) throw Error("tracker: no event log path");
    const auto parent = std::filesystem::path(options_.log_path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
    }
    out_.open(options_.log_path, std::ios::app);
    if (!out_) throw Error("tracker: cannot open event log " + options_.log_path);
    if (!options_.webhook_url.empty() && options_.webhook_url.rfind("http://", 0) != 0) {
        warnings_.push_back("webhook disabled: only http:// URLs are supported (" + options_.webhook_url + ")");
        warn(warnings_.back());
        options_.webhook_url.clear();
    }
}

RunEvent Tracker::track(RunEvent e) {
    std::lock_guard lock(mutex_);
    if (e.run_id.empty()) e.run_id = run_id_;
    if (e.ts.empty()) e.ts = utc_timestamp();
    const std::string key = e.run_id + "\x1f" + e.phase + "\x1f" + e.metric;
    if (auto it = last_step_.find(key); it != last_step_.end() && e.step < it->second) {
        throw Error("tracker: step " + std::to_string(e.step) + " for metric '" + e.metric + "' goes backwards");
    }
    last_step_[key] = e.step;
    next_step_[key] = std::max(next_step_[key], e.step + 1);
    const std::string body = to_json(e).dump();
    out_ << body << '\n';
    out_.flush();
    if (!out_) throw Error("tracker: write to " + options_.log_path + " failed");
    if (!options_.webhook_url.empty() && !post(body)) {
        ++webhook_failures_;
        warnings_.push_back("webhook delivery failed for " + e.phase + "/" + e.metric + " step " + std::to_string(e.step));
        warn(warnings_.back());
    }
    return e;
}

RunEvent Tracker::log(const std::string& phase, const std::string& metric, double value) {
    std::uint64_t step = 0;
    {
        std::lock_guard lock(mutex_);
        step = next_step_[run_id_ + "\x1f" + phase + "\x1f" + metric];
    }
    return track({run_id_, {}, phase, metric, value, step});
}

std::size_t Tracker::webhook_failures() const {
    std::lock_guard lock(mutex_);
    return webhook_failures_;
}

std::vector<std::string> Tracker::warnings() const {
    std::lock_guard lock(mutex_);
    return warnings_;
}

bool Tracker::post(const std::string& body) {
    const std::string& url = options_.webhook_url;
    const auto slash = url.find('/', 7);
    const std::string origin = slash == std::string::npos ? url : url.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : url.substr(slash);
    httplib::Client client(origin);
    const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - timeout_s);
    client.set_connection_timeout(timeout_s.count(), timeout_us.count());
    client.set_read_timeout(timeout_s.count(), timeout_us.count());
    auto delay = options_.base_delay;
    for (int attempt = 0; attempt < options_.attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        const auto res = client.Post(path, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) return true;
    }
    return false;
}

}  // namespace dermbench
