#include <charconv>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli/run.hpp"

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  const char* p = s.data();
  const char* end = p + s.size();
  while (p < end) {
    double v = 0.0;
    auto [q, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) throw CLI::ValidationError("expected comma-separated numbers: " + s);
    out.push_back(v);
    p = q;
    if (p < end) {
      if (*p != ',') throw CLI::ValidationError("expected comma-separated numbers: " + s);
      ++p;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keller-Segel numerical laboratory"};
  app.require_subcommand(1);

  kslab::cli::RunOptions opts;
  std::string center, blow_down;
  std::uint64_t seed = 0;
  double lambda = 1.0;

  for (const char* name : {"simulate", "pointdyn", "critical", "hybrid", "rescale", "diagnose"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opts.config, "scenario JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "output directory")->required();
    sub->add_option("--jobs", opts.jobs, "concurrent sweep entries")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "seed for randomized starts");
    if (std::string(name) == "rescale") {
      sub->add_option("--lambda", lambda, "parabolic scale factor")->check(CLI::PositiveNumber);
      sub->add_option("--center", center, "rescaling center x,y");
      sub->add_flag("--self-similar", opts.self_similar, "map to similarity variables");
      sub->add_option("--blow-down", blow_down, "increasing lambda list l1,l2,...");
    }
  }

  try {
    app.parse(argc, argv);
    auto* sub = app.get_subcommands().front();
    opts.command = sub->get_name();
    if (sub->count("--seed")) opts.seed = seed;
    if (opts.command == "rescale") {
      if (sub->count("--lambda")) opts.lambda = lambda;
      if (!center.empty()) {
        const auto c = parse_list(center);
        if (c.size() != 2) throw CLI::ValidationError("--center expects x,y");
        opts.center = kslab::Vec2{c[0], c[1]};
      }
      if (!blow_down.empty()) opts.blow_down = parse_list(blow_down);
    }
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kslab::cli::kExitConfig;
  }
  return kslab::cli::run(opts, std::cout, std::cerr);
}
