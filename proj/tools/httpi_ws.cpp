// httpi-ws: serve, invoke, bench and keygen.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include <httpi/httpi.hpp>

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int)
{
    g_stop = true;
}

struct ClientOptions
{
    std::string url;
    std::string scenario = "NoSecurity";
    std::string key_file;
    std::string cert_file;
    std::string trust_dir;
    std::string peer_cert;
    std::string user;
    std::string password;
    std::string digest_order = "paper";
    int clock_skew_s = 300;

    void add_to(CLI::App& cmd)
    {
        cmd.add_option("--url", url, "Service URL, e.g. http://127.0.0.1:8080/service")->required();
        cmd.add_option("--scenario", scenario, "NoSecurity | UsernamePassword | HttpiSign | SignEncrypt")
            ->capture_default_str();
        cmd.add_option("--key", key_file, "Client private key PEM");
        cmd.add_option("--cert", cert_file, "Client certificate PEM");
        cmd.add_option("--trust", trust_dir, "Directory of trusted server certificates");
        cmd.add_option("--peer-cert", peer_cert, "Server certificate for body encryption");
        cmd.add_option("--user", user, "UsernameToken user");
        cmd.add_option("--password", password, "UsernameToken password");
        cmd.add_option("--digest-order", digest_order, "paper | oasis")->capture_default_str();
        cmd.add_option("--clock-skew", clock_skew_s, "Accepted clock skew in seconds")->capture_default_str();
    }

    httpi::ClientSettings settings() const
    {
        httpi::ClientSettings s;
        s.url = url;
        auto sc = httpi::soap::parse_scenario(scenario);
        if (!sc)
            throw UsageError("unknown scenario '" + scenario + "'");
        s.scenario = *sc;
        auto order = httpi::digest_order_from_string(digest_order);
        if (!order)
            throw UsageError("--digest-order must be paper or oasis");
        s.credentials.digest_order = *order;
        s.clock_skew = httpi::Seconds{clock_skew_s};

        const auto policy = httpi::soap::ScenarioPolicy::of(*sc);
        if (policy.require_username_token) {
            if (user.empty())
                throw UsageError(scenario + " needs --user and --password");
            s.credentials.username_password = std::make_pair(user, password);
        }
        if (policy.sign_body) {
            if (key_file.empty() || cert_file.empty() || trust_dir.empty())
                throw UsageError(scenario + " needs --key, --cert and --trust");
            s.credentials.keypair = httpi::crypto::load_keypair_files(key_file, cert_file);
            s.trust = httpi::crypto::TrustStore::load_directory(trust_dir);
        }
        if (policy.encrypt_body) {
            if (!peer_cert.empty())
                s.peer_certificate = httpi::crypto::Certificate::from_pem(httpi::crypto::read_file(peer_cert));
            else if (s.trust.size() != 1)
                throw UsageError(scenario + " needs --peer-cert unless the trust directory holds one certificate");
        }
        return s;
    }
};

int cmd_serve(const std::string& config_path)
{
    auto cfg = httpi::ServiceConfig::load(config_path);
    auto running = httpi::serve(cfg);
    std::cout << "serving " << httpi::soap::to_string(cfg.policy.kind) << " at " << running->url() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop)
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    running->stop();
    return 0;
}

int cmd_invoke(const ClientOptions& opts, const std::string& payload_file, bool use_session)
{
    const auto settings = opts.settings();
    const auto payload = httpi::xml::parse(httpi::crypto::read_file(payload_file)).root;
    const auto result = httpi::invoke(settings, payload, use_session);
    std::cout << httpi::xml::serialize(result.body) << '\n';
    std::cerr << result.response_bytes << " bytes in " << result.elapsed_ms << " ms\n";
    return 0;
}

int cmd_bench(const ClientOptions& opts, int users, int max_requests, const std::string& out_dir,
              const std::string& payload_file, bool use_session, bool plots)
{
    httpi::bench::LoadPlan plan;
    plan.client = opts.settings();
    plan.virtual_users = users;
    plan.request_counts = httpi::bench::default_schedule(max_requests);
    plan.use_session = use_session;
    if (!payload_file.empty())
        plan.payload = httpi::xml::parse(httpi::crypto::read_file(payload_file)).root;
    try {
        plan.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const std::vector<httpi::bench::BenchReport> reports{httpi::bench::run_load(plan)};
    std::cout << httpi::bench::format_table(reports);
    for (const auto& path : httpi::bench::write_outputs(out_dir, reports, plots))
        std::cerr << "wrote " << path.string() << '\n';
    return 0;
}

int cmd_keygen(const std::string& out_dir, const std::vector<std::string>& subjects, int days)
{
    for (const auto& path : httpi::keygen(out_dir, subjects, days))
        std::cout << path.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Message-level SOAP security service, client and load generator"};
    app.require_subcommand(1);

    std::string config_path;
    auto* serve = app.add_subcommand("serve", "Run the sample service");
    serve->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);

    ClientOptions invoke_opts;
    std::string payload_file;
    bool use_session = false;
    auto* invoke = app.add_subcommand("invoke", "Send one request and print the verified response body");
    invoke_opts.add_to(*invoke);
    invoke->add_option("--payload", payload_file, "XML file holding the operation element")
        ->required()
        ->check(CLI::ExistingFile);
    invoke->add_flag("--session", use_session, "Run the session handshake first (signing scenarios)");

    ClientOptions bench_opts;
    int users = 5;
    int max_requests = 500;
    std::string out_dir = "bench-out";
    std::string bench_payload;
    bool bench_session = false;
    bool no_plots = false;
    auto* bench = app.add_subcommand("bench", "Load-test a running service");
    bench_opts.add_to(*bench);
    bench->add_option("--users", users, "Virtual users")->capture_default_str()->check(CLI::PositiveNumber);
    bench->add_option("--max-requests", max_requests, "Largest request count of the schedule")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    bench->add_option("--out", out_dir, "Output directory for CSV and SVG files")->capture_default_str();
    bench->add_option("--payload", bench_payload, "XML operation file (default: Echo)")->check(CLI::ExistingFile);
    bench->add_flag("--session", bench_session, "Wrap every request in a session");
    bench->add_flag("--no-plots", no_plots, "Skip SVG output");

    std::string keygen_out;
    std::vector<std::string> subjects;
    int days = 365;
    auto* keygen = app.add_subcommand("keygen", "Generate RSA-2048 keys and self-signed certificates");
    keygen->add_option("--out", keygen_out, "Output directory")->required();
    keygen->add_option("--subjects", subjects, "Comma-separated subject names")->required()->delimiter(',');
    keygen->add_option("--days", days, "Certificate validity in days")->capture_default_str()->check(
        CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsageError;
    }

    try {
        if (*serve)
            return cmd_serve(config_path);
        if (*invoke)
            return cmd_invoke(invoke_opts, payload_file, use_session);
        if (*bench)
            return cmd_bench(bench_opts, users, max_requests, out_dir, bench_payload, bench_session, !no_plots);
        if (*keygen)
            return cmd_keygen(keygen_out, subjects, days);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsageError;
    } catch (const httpi::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kUsageError;
}
