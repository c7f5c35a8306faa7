#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "matchprior/bayes.hpp"
#include "matchprior/conditional.hpp"
#include "matchprior/coverage.hpp"
#include "matchprior/error.hpp"
#include "matchprior/lambda.hpp"
#include "matchprior/likelihood.hpp"
#include "matchprior/matching.hpp"
#include "matchprior/model.hpp"
#include "matchprior/prior.hpp"
#include "matchprior/rng.hpp"

using namespace matchprior;
using nlohmann::json;

namespace {

constexpr int exit_config = 2;
constexpr int exit_integrity = 3;

// "normal-ls:scale" -> ("normal-ls", "scale"); theta on the command line is
// always in the base family's order (mu, sigma) or (shape, rate).
Eigen::VectorXd slot_theta(const std::string& key, const std::vector<double>& natural) {
  ExperimentConfig c;
  const auto colon = key.find(':');
  c.family = key.substr(0, colon);
  c.interest = colon == std::string::npos ? make_family(key)->parameter_names()[0] : key.substr(colon + 1);
  if (c.interest == "mu") c.interest = "loc";
  c.theta = natural;
  return c.theta_slots();
}

std::vector<double> read_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read data file " + path);
  std::vector<double> y;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    for (char& ch : line)
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        y.push_back(v);
      } catch (const std::exception&) {
        if (first) break;  // header line
        throw ConfigError("data file holds a non-numeric value '" + tok + "'");
      }
    }
    first = false;
  }
  if (y.empty()) throw ConfigError("data file " + path + " holds no values");
  return y;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("cannot read '" + tok + "' as a number");
    }
  }
  return out;
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matchprior: signed root asymptotics and probability matching priors"};
  app.require_subcommand(1);

  // lambda-check
  std::string family_key, prior_key, data_path, psi_grid, theta_text = "0,1", grid_text, alpha_text = "0.05";
  std::size_t n = 10, mc_reps = 200000;
  std::uint64_t seed = 1;
  auto* lambda_check = app.add_subcommand("lambda-check", "Bartlett identity residuals for analytic and Monte Carlo arrays");
  lambda_check->add_option("--family", family_key, "family key, e.g. cauchy-ls:loc")->required();
  lambda_check->add_option("--theta", theta_text, "parameter point (mu,sigma) or (shape,rate)");
  lambda_check->add_option("--n", n, "sample size");
  lambda_check->add_option("--mc-reps", mc_reps, "Monte Carlo replicates (0 skips)");
  lambda_check->add_option("--seed", seed, "root seed");

  auto* signed_root_cmd = app.add_subcommand("signed-root", "W and R over a grid of interest values");
  signed_root_cmd->add_option("--family", family_key)->required();
  signed_root_cmd->add_option("--data", data_path, "one column of observations")->required();
  signed_root_cmd->add_option("--psi-grid", psi_grid, "a:b:k")->required();

  std::string method = "quadrature";
  auto* posterior_cmd = app.add_subcommand("posterior", "posterior summary of the interest parameter");
  posterior_cmd->add_option("--family", family_key)->required();
  posterior_cmd->add_option("--data", data_path)->required();
  posterior_cmd->add_option("--prior", prior_key)->required();
  posterior_cmd->add_option("--alpha", alpha_text, "comma separated");
  posterior_cmd->add_option("--method", method, "quadrature, laplace or conjugate")
      ->check(CLI::IsMember({"quadrature", "laplace", "conjugate"}));

  int order = 2;
  double grid_n = 10.0;
  auto* match_cmd = app.add_subcommand("match-check", "matching-condition residuals over a theta grid");
  match_cmd->add_option("--family", family_key)->required();
  match_cmd->add_option("--prior", prior_key)->required();
  match_cmd->add_option("--theta", theta_text, "reference point for default axes");
  match_cmd->add_option("--theta-grid", grid_text, "axes as name=v1,v2;name=w1,w2 (missing axes use defaults)");
  match_cmd->add_option("--order", order)->check(CLI::IsMember({1, 2}));
  match_cmd->add_option("--n", grid_n, "sample size");

  std::string config_source = "sample", config_file;
  double alpha = 0.05;
  auto* cond_cmd = app.add_subcommand("conditional-coverage", "coverage given the configuration, by quadrature");
  cond_cmd->add_option("--family", family_key)->required();
  cond_cmd->add_option("--prior", prior_key)->required();
  cond_cmd->add_option("--n", n);
  cond_cmd->add_option("--alpha", alpha);
  cond_cmd->add_option("--config-source", config_source)->check(CLI::IsMember({"sample", "file"}));
  cond_cmd->add_option("--config-file", config_file, "residuals, comma separated, first line used");
  cond_cmd->add_option("--seed", seed);
  cond_cmd->add_option("--theta", theta_text, "point for the conditional matching residual");

  std::string run_config, study = "unconditional";
  auto* run_cmd = app.add_subcommand("run", "coverage experiment from a JSON config");
  run_cmd->add_option("--config", run_config)->required();
  run_cmd->add_option("--study", study)->check(CLI::IsMember({"unconditional", "rate", "conditional"}));
  run_cmd->add_option("--config-source", config_source)->check(CLI::IsMember({"sample", "file"}));
  run_cmd->add_option("--config-file", config_file);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_config;
  }

  try {
    if (*lambda_check) {
      const FamilyPtr f = make_family(family_key);
      const Eigen::VectorXd theta = slot_theta(family_key, parse_list(theta_text));
      json out;
      out["family"] = family_key;
      out["parameters"] = f->parameter_names();
      out["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
      out["n"] = n;
      if (f->has_expectation_rule()) {
        const LambdaArrays a = analytic_lambda(*f, theta, static_cast<double>(n));
        const IdentityReport r = check_identities(a);
        out["analytic"] = {{"second_order", r.second_order}, {"third_order", r.third_order},
                           {"tolerance", r.tolerance}, {"flagged", r.flagged}, {"lambda_rs", to_json(a.lambda_rs)}};
      }
      if (mc_reps > 0) {
        const MonteCarloLambda mc = monte_carlo_lambda(*f, theta, n, mc_reps, Stream(seed));
        const IdentityReport r = check_identities(mc);
        out["monte_carlo"] = {{"reps", mc_reps},
                              {"second_order", r.second_order},
                              {"third_order", r.third_order},
                              {"max_z", r.max_z},
                              {"flagged", r.flagged},
                              {"lambda_rs", to_json(mc.arrays.lambda_rs)},
                              {"lambda_rs_se", to_json(mc.se.lambda_rs)}};
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*signed_root_cmd) {
      const FamilyPtr f = make_family(family_key);
      const Sample sample(read_data(data_path));
      const auto first = psi_grid.find(':'), last = psi_grid.rfind(':');
      if (first == std::string::npos || first == last) throw ConfigError("--psi-grid must read a:b:k");
      const double a = std::stod(psi_grid.substr(0, first));
      const double b = std::stod(psi_grid.substr(first + 1, last - first - 1));
      const int k = std::stoi(psi_grid.substr(last + 1));
      if (k < 1) throw ConfigError("--psi-grid needs k >= 1");
      const FitResult mle = fit_mle(*f, sample);
      std::cout << "psi,W,R\n";
      std::cout.precision(12);
      for (int i = 0; i < k; ++i) {
        const double psi = k == 1 ? a : a + (b - a) * i / (k - 1);
        const ProfilePoint p = signed_root(*f, sample, psi, mle);
        std::cout << psi << "," << p.W << "," << p.R << "\n";
      }
      return 0;
    }

    if (*posterior_cmd) {
      const FamilyPtr f = make_family(family_key);
      const PriorSpec prior = make_prior(prior_key, *f);
      const Profile profile(*f, Sample(read_data(data_path)));
      const std::vector<double> alphas = parse_list(alpha_text);
      PosteriorSummary s;
      if (method == "quadrature")
        s = quadrature_posterior(profile, prior, alphas);
      else if (method == "laplace")
        s = laplace_posterior(profile, prior, alphas);
      else
        s = conjugate_normal_posterior(profile, prior, alphas);
      json q = json::object();
      for (const auto& [a, v] : s.quantiles) {
        std::ostringstream key;
        key << a;
        q[key.str()] = v;
      }
      json out = {{"mu_B", s.mu_B}, {"a_B", s.a_B}, {"sigma2_B", s.sigma2_B}, {"quantiles", q},
                  {"method", to_string(s.method)}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*match_cmd) {
      const FamilyPtr f = make_family(family_key);
      const PriorSpec prior = make_prior(prior_key, *f);
      const Eigen::VectorXd ref = slot_theta(family_key, parse_list(theta_text));
      const auto names = f->parameter_names();
      std::vector<std::vector<double>> axes(names.size());
      std::stringstream ss(grid_text);
      std::string part;
      while (std::getline(ss, part, ';')) {
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw ConfigError("--theta-grid entries read name=v1,v2,...");
        const auto it = std::find(names.begin(), names.end(), part.substr(0, eq));
        if (it == names.end()) throw ConfigError("unknown parameter '" + part.substr(0, eq) + "'");
        axes[static_cast<std::size_t>(it - names.begin())] = parse_list(part.substr(eq + 1));
      }
      MatchingOptions opt;
      opt.order = order;
      opt.n = grid_n;
      const auto reports = matching_grid(*f, prior, theta_grid(*f, ref, axes), opt);
      for (const auto& name : names) std::cout << name << ",";
      std::cout << "wp_residual,so_residual,mu_F,a_F,sigma2_F\n";
      std::cout.precision(10);
      for (const auto& r : reports) {
        for (Eigen::Index k = 0; k < r.theta.size(); ++k) std::cout << r.theta[k] << ",";
        std::cout << r.wp_residual << "," << (order == 2 ? r.so_residual : NAN) << "," << r.mu_F << "," << r.a_F
                  << "," << r.sigma2_F << "\n";
      }
      return 0;
    }

    if (*cond_cmd) {
      const FamilyPtr f = make_family(family_key);
      const PriorSpec prior = make_prior(prior_key, *f);
      Configuration config;
      if (config_source == "file") {
        if (config_file.empty()) throw ConfigError("--config-source file needs --config-file");
        config = load_configurations(*f, config_file).front();
      } else {
        Stream s = Stream(seed).split(hash_string("configuration|" + family_key + "|" + std::to_string(n)));
        config = simulate_configuration(*f, n, s);
      }
      const ConditionalContext ctx = conditional_context(f, config);
      const ConditionalCoverage cov = conditional_coverage(*ctx.grid, *f, prior, alpha);
      const Eigen::VectorXd theta = slot_theta(family_key, parse_list(theta_text));
      const ConditionalResidual res = conditional_matching_residual(ctx, prior, theta);
      json out = {{"a", config.a},       {"B", ctx.B}, {"C", ctx.C}, {"D", ctx.D}, {"E", ctx.E},
                  {"coverage", cov.coverage}, {"residual4", res.residual}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*run_cmd) {
      const ExperimentConfig config = load_config(run_config);
      if (study == "unconditional") {
        try {
          const CoverageTable t = run_unconditional(config);
          write_text(config.out, to_csv(t));
          if (!config.out.empty() && !t.failures.empty()) write_text(config.out + ".failures.csv", failures_csv(t.failures));
        } catch (const CoverageIntegrityError& e) {
          write_text(config.out, to_csv(e.table()));
          if (!config.out.empty()) write_text(config.out + ".failures.csv", failures_csv(e.table().failures));
          throw;
        }
      } else if (study == "rate") {
        const RateStudy r = run_rate_study(config);
        write_text(config.out, to_csv(r.table));
        json reports = json::array();
        for (const auto& rep : r.reports) {
          json pts = json::array();
          for (const auto& p : rep.points) pts.push_back({{"n", p.n}, {"error", p.error}, {"se", p.se}});
          reports.push_back({{"prior", rep.prior},
                             {"alpha", rep.alpha},
                             {"points", pts},
                             {"chi2", rep.chi2},
                             {"chi2_bound", rep.chi2_bound},
                             {"resolvable", rep.resolvable},
                             {"outcome", rep.resolvable ? "slope" : "rate unresolvable"},
                             {"slope", rep.slope},
                             {"slope_ci", {rep.slope_lo, rep.slope_hi}},
                             {"wp_residual", rep.wp_residual},
                             {"so_residual", rep.so_residual}});
        }
        const std::string text = reports.dump(2) + "\n";
        if (config.out.empty())
          std::cout << text;
        else
          write_text(config.out + ".rate.json", text);
      } else {
        ConfigurationSource src;
        if (config_source == "file") {
          if (config_file.empty()) throw ConfigError("--config-source file needs --config-file");
          src.kind = ConfigurationSource::Kind::file;
          src.path = config_file;
        }
        const ConditionalStudy c = run_conditional(config, src);
        write_text(config.out, to_csv(c.averaged));
        if (config.out.empty())
          std::cout << conditional_csv(c.per_a);
        else
          write_text(config.out + ".per_a.csv", conditional_csv(c.per_a));
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity failure: " << e.what() << "\n";
    return exit_integrity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
