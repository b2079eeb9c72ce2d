#pragma once

// Load generator: virtual users issue sequential requests against a target
// service; per-request events are folded into one report row per request
// count. Writers emit an aligned table, CSV files and SVG line plots.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httpi/client.hpp>
#include <httpi/config.hpp>
#include <httpi/soap.hpp>
#include <httpi/xml.hpp>

namespace httpi::bench {

class TargetUnavailable : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// 10, 20, 40, 60, then steps of 60 up to `max_requests`, which always ends
/// the list.
inline std::vector<int> default_schedule(int max_requests = 500)
{
    std::vector<int> out;
    for (int n : {10, 20, 40, 60})
        if (n < max_requests)
            out.push_back(n);
    for (int n = 120; n < max_requests; n += 60)
        out.push_back(n);
    if (max_requests > 0)
        out.push_back(max_requests);
    return out;
}

inline xml::XmlElement default_payload()
{
    xml::XmlElement s(xml::XmlName("", "s"));
    s.append_text("Hello from a virtual user");
    xml::XmlElement echo(xml::XmlName("", "Echo"));
    echo.append(std::move(s));
    return echo;
}

struct LoadPlan
{
    int virtual_users = 5;
    std::vector<int> request_counts = default_schedule();
    xml::XmlElement payload = default_payload();
    ClientSettings client; ///< target URL, scenario and credentials
    bool use_session = false;

    void validate() const
    {
        if (virtual_users <= 0)
            throw std::invalid_argument("virtual_users must be positive");
        if (request_counts.empty())
            throw std::invalid_argument("request_counts is empty");
        for (std::size_t i = 0; i < request_counts.size(); ++i) {
            if (request_counts[i] <= 0)
                throw std::invalid_argument("request counts must be positive");
            if (i > 0 && request_counts[i] <= request_counts[i - 1])
                throw std::invalid_argument("request counts must be strictly increasing");
        }
    }
};

/// One request as seen by a virtual user.
struct RequestEvent
{
    int requests = 0; ///< the N of the batch this request belongs to
    int worker = 0;
    int sequence = 0; ///< index within the batch
    double elapsed_ms = 0;
    std::size_t reply_bytes = 0;
    bool ok = false;
    std::string error;
};

struct BenchRow
{
    int requests = 0;
    double avg_response_time_ms = 0;
    double throughput_tps = 0;
    double avg_reply_size_bytes = 0;
    int error_count = 0;
    int completed = 0;
    double wall_seconds = 0;
};

struct BenchReport
{
    soap::Scenario scenario = soap::Scenario::NoSecurity;
    int virtual_users = 0;
    std::vector<BenchRow> rows;
    std::vector<RequestEvent> events;
};

/// Averages cover completed requests only; failures count in error_count.
inline BenchRow summarize(int requests, const std::vector<RequestEvent>& events, double wall_seconds)
{
    BenchRow row;
    row.requests = requests;
    row.wall_seconds = wall_seconds;
    double total_ms = 0;
    double total_bytes = 0;
    for (const auto& e : events) {
        if (e.requests != requests)
            continue;
        if (!e.ok) {
            ++row.error_count;
            continue;
        }
        ++row.completed;
        total_ms += e.elapsed_ms;
        total_bytes += static_cast<double>(e.reply_bytes);
    }
    if (row.completed > 0) {
        row.avg_response_time_ms = total_ms / row.completed;
        row.avg_reply_size_bytes = total_bytes / row.completed;
    }
    row.throughput_tps = wall_seconds > 0 ? row.completed / wall_seconds : 0;
    return row;
}

namespace detail {

inline RequestEvent timed_request(ServiceClient& client, const LoadPlan& plan)
{
    RequestEvent ev;
    try {
        const auto r = client.invoke(plan.payload, plan.use_session);
        ev.elapsed_ms = r.elapsed_ms;
        ev.reply_bytes = r.response_bytes;
        ev.ok = true;
    } catch (const std::exception& e) {
        ev.error = e.what();
    }
    return ev;
}

} // namespace detail

/// Runs every batch of the plan. Each virtual user keeps one connection and
/// sends a warm-up request before the first batch; a failing warm-up means
/// the target is unavailable.
inline BenchReport run_load(const LoadPlan& plan)
{
    plan.validate();
    std::vector<std::unique_ptr<ServiceClient>> clients;
    for (int w = 0; w < plan.virtual_users; ++w) {
        clients.push_back(std::make_unique<ServiceClient>(plan.client));
        const auto warm = detail::timed_request(*clients.back(), plan);
        if (!warm.ok)
            throw TargetUnavailable("warm-up request to " + plan.client.url + " failed: " + warm.error);
    }

    BenchReport report;
    report.scenario = plan.client.scenario;
    report.virtual_users = plan.virtual_users;
    for (const int n : plan.request_counts) {
        std::vector<std::vector<RequestEvent>> per_worker(static_cast<std::size_t>(plan.virtual_users));
        const auto start = std::chrono::steady_clock::now();
        std::vector<std::thread> workers;
        for (int w = 0; w < plan.virtual_users; ++w) {
            workers.emplace_back([&, w] {
                auto& log = per_worker[static_cast<std::size_t>(w)];
                for (int i = w; i < n; i += plan.virtual_users) {
                    auto ev = detail::timed_request(*clients[static_cast<std::size_t>(w)], plan);
                    ev.requests = n;
                    ev.worker = w;
                    ev.sequence = i;
                    log.push_back(std::move(ev));
                }
            });
        }
        for (auto& t : workers)
            t.join();
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        std::vector<RequestEvent> batch;
        for (auto& log : per_worker)
            batch.insert(batch.end(), std::make_move_iterator(log.begin()), std::make_move_iterator(log.end()));
        std::sort(batch.begin(), batch.end(), [](const auto& a, const auto& b) { return a.sequence < b.sequence; });
        report.rows.push_back(summarize(n, batch, wall));
        report.events.insert(report.events.end(), batch.begin(), batch.end());
    }
    return report;
}

// Output

inline std::string format_table(const std::vector<BenchReport>& reports)
{
    std::ostringstream os;
    os << std::left << std::setw(18) << "scenario" << std::right << std::setw(10) << "requests" << std::setw(12)
       << "avg_ms" << std::setw(12) << "tps" << std::setw(12) << "avg_bytes" << std::setw(8) << "errors" << '\n';
    os << std::fixed;
    for (const auto& rep : reports) {
        for (const auto& row : rep.rows) {
            os << std::left << std::setw(18) << soap::to_string(rep.scenario) << std::right << std::setw(10)
               << row.requests << std::setw(12) << std::setprecision(3) << row.avg_response_time_ms << std::setw(12)
               << std::setprecision(3) << row.throughput_tps << std::setw(12) << std::setprecision(1)
               << row.avg_reply_size_bytes << std::setw(8) << row.error_count << '\n';
        }
    }
    return os.str();
}

/// Schema: scenario,requests,avg_ms,tps,avg_bytes,errors
inline std::string to_csv(const std::vector<BenchReport>& reports)
{
    std::ostringstream os;
    os << "scenario,requests,avg_ms,tps,avg_bytes,errors\n";
    os << std::setprecision(10);
    for (const auto& rep : reports)
        for (const auto& row : rep.rows)
            os << soap::to_string(rep.scenario) << ',' << row.requests << ',' << row.avg_response_time_ms << ','
               << row.throughput_tps << ',' << row.avg_reply_size_bytes << ',' << row.error_count << '\n';
    return os.str();
}

/// Per-request log: scenario,requests,worker,sequence,elapsed_ms,reply_bytes,ok
/// plus one `wall` line per batch so every row can be recomputed.
inline std::string to_log_csv(const std::vector<BenchReport>& reports)
{
    std::ostringstream os;
    os << "scenario,requests,worker,sequence,elapsed_ms,reply_bytes,ok\n";
    os << std::setprecision(17);
    for (const auto& rep : reports) {
        for (const auto& e : rep.events)
            os << soap::to_string(rep.scenario) << ',' << e.requests << ',' << e.worker << ',' << e.sequence << ','
               << e.elapsed_ms << ',' << e.reply_bytes << ',' << (e.ok ? 1 : 0) << '\n';
        for (const auto& row : rep.rows)
            os << soap::to_string(rep.scenario) << ',' << row.requests << ",wall,," << row.wall_seconds << ",,\n";
    }
    return os.str();
}

enum class Metric
{
    ResponseTime,
    Throughput,
    ReplySize
};

inline std::string_view metric_label(Metric m)
{
    switch (m) {
    case Metric::ResponseTime:
        return "Average response time (ms)";
    case Metric::Throughput:
        return "Throughput (transactions/s)";
    case Metric::ReplySize:
        return "Reply size per request (bytes)";
    }
    return "";
}

inline double metric_value(const BenchRow& row, Metric m)
{
    switch (m) {
    case Metric::ResponseTime:
        return row.avg_response_time_ms;
    case Metric::Throughput:
        return row.throughput_tps;
    case Metric::ReplySize:
        return row.avg_reply_size_bytes;
    }
    return 0;
}

/// Line plot of `metric` against the request count, one series per report.
inline std::string render_svg(const std::vector<BenchReport>& reports, Metric metric)
{
    constexpr double width = 640, height = 400, left = 70, right = 170, top = 30, bottom = 50;
    constexpr const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

    double max_x = 1, max_y = 0;
    for (const auto& rep : reports)
        for (const auto& row : rep.rows) {
            max_x = std::max(max_x, static_cast<double>(row.requests));
            max_y = std::max(max_y, metric_value(row, metric));
        }
    max_y = max_y > 0 ? max_y * 1.1 : 1;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    auto px = [&](double x) { return left + plot_w * x / max_x; };
    auto py = [&](double y) { return top + plot_h * (1 - y / max_y); };

    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\">" << metric_label(metric) << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
       << top + plot_h << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double yv = max_y * i / 5, xv = max_x * i / 5;
        os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(2)
           << yv << "</text>\n";
        os << "<text x=\"" << px(xv) << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">"
           << std::setprecision(0) << xv << "</text>\n";
        os << std::setprecision(1);
    }
    os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
       << "\" text-anchor=\"middle\">Number of requests</text>\n";

    for (std::size_t s = 0; s < reports.size(); ++s) {
        const char* color = colors[s % std::size(colors)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& row : reports[s].rows)
            os << px(row.requests) << ',' << py(metric_value(row, metric)) << ' ';
        os << "\"/>\n";
        for (const auto& row : reports[s].rows)
            os << "<circle cx=\"" << px(row.requests) << "\" cy=\"" << py(metric_value(row, metric))
               << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        const double ly = top + 16.0 * static_cast<double>(s + 1);
        os << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + plot_w + 30
           << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left + plot_w + 36 << "\" y=\"" << ly << "\">" << soap::to_string(reports[s].scenario)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Writes bench.csv, bench_log.csv and, when `plots`, one SVG per metric.
inline std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& out_dir,
                                                        const std::vector<BenchReport>& reports, bool plots = true)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written{out_dir / "bench.csv", out_dir / "bench_log.csv"};
    write_file(written[0], to_csv(reports));
    write_file(written[1], to_log_csv(reports));
    if (plots) {
        const std::pair<Metric, const char*> panels[] = {{Metric::ResponseTime, "response_time.svg"},
                                                         {Metric::Throughput, "throughput.svg"},
                                                         {Metric::ReplySize, "reply_size.svg"}};
        for (const auto& [m, name] : panels) {
            written.push_back(out_dir / name);
            write_file(written.back(), render_svg(reports, m));
        }
    }
    return written;
}

} // namespace httpi::bench
