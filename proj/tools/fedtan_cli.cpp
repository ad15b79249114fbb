// Command-line front end: run and compare experiments, verify invariants, print accounting.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedtan/cli/config.hpp"
#include "fedtan/cli/experiment.hpp"
#include "fedtan/diag/verify.hpp"
#include "fedtan/metrics/comm.hpp"
#include "fedtan/metrics/csv.hpp"

namespace {

using namespace fedtan;

cli::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return cli::parse_config(ss.str());
}

fl::History run_one(const cli::ExperimentConfig& c, const std::string& label) {
  const int every = std::max(1, c.scheme.iterations / 10);
  return cli::run_config(c, [&](const fl::Federation& fed, const fl::RoundResult& res) {
    const int r = fed.server.round;
    if (r % every == 0 || r == c.scheme.iterations)
      std::cerr << label << " iteration " << r << "/" << c.scheme.iterations << " loss " << res.train_loss
                << std::endl;
  });
}

int cmd_run(const std::string& path, const std::string& output) {
  auto c = load_config(path);
  if (!output.empty()) c.output = output;
  const auto history = run_one(c, std::string(fl::to_string(c.scheme.scheme)));
  metrics::export_csv(history, c.output);
  std::cerr << "wrote " << c.output << std::endl;
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& output) {
  fl::History all;
  std::string target = output;
  for (const auto& p : paths) {
    const auto c = load_config(p);
    if (target.empty()) target = c.output;
    const auto h = run_one(c, std::string(fl::to_string(c.scheme.scheme)));
    all.insert(all.end(), h.begin(), h.end());
  }
  metrics::export_csv(all, target);
  std::cerr << "wrote " << target << std::endl;
  return 0;
}

int cmd_verify(const std::string& mnist) {
  std::vector<diag::CheckResult> results;
  auto emit = [&](diag::CheckResult r) {
    std::cout << diag::report_line(r) << std::endl;
    results.push_back(std::move(r));
  };
  emit(diag::timed([] { return diag::check_gradients(); }));
  emit(diag::timed([] { return diag::check_aggregation(); }));
  emit(diag::timed([] { return diag::check_oracle_equivalence(); }));
  emit(diag::timed([] { return diag::check_necessity(); }));
  emit(diag::timed([] { return diag::check_accounting(); }));
  if (!mnist.empty()) {
    auto suite = diag::MnistSuite::load(mnist);
    suite.progress = [](const std::string& key) { std::cerr << "running " << key << std::endl; };
    emit(diag::timed([&] { return diag::check_mnist(suite); }));
    emit(diag::timed([&] { return diag::check_fedtan2(suite); }));
  }
  emit(diag::timed([] { return diag::check_moving_average(); }));
  bool ok = true;
  for (const auto& r : results) ok = ok && r.passed;
  return ok ? 0 : 1;
}

int cmd_comm(std::uint64_t p, std::uint64_t s, std::uint64_t n, const std::string& scheme_name,
             std::uint64_t iterations, std::uint64_t switch_at, std::uint64_t layers) {
  const auto scheme = fl::parse_scheme(scheme_name);
  if (!scheme) throw CLI::ValidationError("scheme", "unknown scheme '" + scheme_name + "'");
  const metrics::ModelSizeSpec size{p, s, n, 0};
  std::cout << "scheme " << scheme_name << "  P " << p << "  s " << s << "  N " << n << '\n';
  std::cout << "per-iteration exchange " << metrics::format_mb(metrics::per_iteration_bytes(size, *scheme))
            << " MB\n";
  if (iterations > 0) {
    const auto a = metrics::cumulative_accounting({*scheme, iterations, switch_at, layers}, size);
    char gb[32];
    std::snprintf(gb, sizeof gb, "%.4f", static_cast<double>(a.bytes) / metrics::kBytesPerGB);
    std::cout << "over " << iterations << " iterations: " << gb << " GB, " << a.rounds << " rounds, extra rounds "
              << metrics::format_percent(a.extra_round_fraction()) << ", extra bytes "
              << metrics::format_percent(a.extra_byte_fraction()) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning with batch normalization: FedTAN and baselines"};
  app.require_subcommand(1);

  std::string config_path, output;
  auto* run = app.add_subcommand("run", "Run one experiment and write its history CSV");
  run->add_option("config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", output, "CSV path (overrides run.output)");

  std::vector<std::string> configs;
  std::string compare_output;
  auto* compare = app.add_subcommand("compare", "Run several configs into one CSV");
  compare->add_option("configs", configs, "Experiment config files")->required()->check(CLI::ExistingFile);
  compare->add_option("-o,--output", compare_output, "CSV path (default: first config's run.output)");

  std::string mnist;
  auto* verify = app.add_subcommand("verify", "Run the invariant and oracle checks");
  verify->add_option("--mnist", mnist, "MNIST directory; adds the desk-scale experiments")
      ->check(CLI::ExistingDirectory);

  std::uint64_t p = 0, s = 0, n = 0, iterations = 0, switch_at = 0, layers = 0;
  std::string scheme;
  auto* comm = app.add_subcommand("comm", "Print per-iteration communication accounting");
  comm->add_option("P", p, "Exchanged model parameters")->required();
  comm->add_option("s", s, "Statistical parameters")->required();
  comm->add_option("N", n, "Clients")->required();
  comm->add_option("scheme", scheme, "Scheme name")->required();
  comm->add_option("-R,--iterations", iterations, "Also total a run of this many iterations");
  comm->add_option("-M,--switch", switch_at, "FedTAN-II switch iteration");
  comm->add_option("-L,--bn-layers", layers, "BN layer count, for round totals");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, output);
    if (*compare) return cmd_compare(configs, compare_output);
    if (*verify) return cmd_verify(mnist);
    if (*comm) return cmd_comm(p, s, n, scheme, iterations, switch_at, layers);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
