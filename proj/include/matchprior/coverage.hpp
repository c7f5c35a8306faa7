#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "matchprior/conditional.hpp"
#include "matchprior/error.hpp"
#include "matchprior/model.hpp"

namespace matchprior {

enum class QuantileMethod { quadrature, refined, conjugate };
enum class LambdaSource { analytic, mc };

std::string to_string(QuantileMethod m);
std::string to_string(LambdaSource s);

struct ExperimentConfig {
  std::string family;  // base key, e.g. "normal-ls"
  std::string interest;  // slot suffix: "loc", "scale", "shape" or "rate"
  std::vector<std::string> priors;
  std::vector<double> theta;  // true value in the base family's order (mu, sigma) or (shape, rate)
  std::vector<std::size_t> n;
  std::vector<double> alpha;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  QuantileMethod quantile = QuantileMethod::quadrature;
  LambdaSource lambda = LambdaSource::analytic;
  std::size_t lambda_reps = 20000;  // per-theta Monte Carlo size when lambda = mc
  std::string out;
  bool timing = true;  // false writes runtime_s = 0 so tables compare bytewise

  std::string family_key() const { return family + ":" + interest; }
  // true theta in the slot order of family_key()
  Eigen::VectorXd theta_slots() const;
};

// Throws ConfigError on any missing, malformed or unresolvable field.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);
void validate(const ExperimentConfig& config);

struct CoverageRow {
  std::string family;
  std::string prior;
  std::string interest;
  std::size_t n = 0;
  double alpha = 0.0;
  double coverage = 0.0;
  double mc_se = 0.0;
  double mean_mu_B = 0.0;
  double mean_sigma2_B = 0.0;
  double runtime_s = 0.0;
  std::size_t replicates = 0;  // used, after exclusions
};

struct ReplicateFailure {
  std::string prior;
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::string reason;
};

struct CoverageTable {
  std::vector<CoverageRow> rows;
  std::vector<ReplicateFailure> failures;
};

inline constexpr std::string_view coverage_csv_header =
    "family,prior,interest,n,alpha,coverage,mc_se,mean_mu_B,mean_sigma2_B,runtime_s";

std::string to_csv(const CoverageTable& table);
std::string failures_csv(const std::vector<ReplicateFailure>& failures);

// Per-replicate data stream: the root seed split by replicate index xor a
// hash of (family, interest, theta, n). Priors and alphas share datasets.
Stream replicate_stream(const ExperimentConfig& config, std::size_t n, std::size_t replicate);

// Failures above 1% of the replicates of any (prior, n) cell raise
// IntegrityError after the table is complete; the table is then attached.
class CoverageIntegrityError : public IntegrityError {
 public:
  CoverageIntegrityError(const std::string& what, CoverageTable table)
      : IntegrityError(what), table_(std::move(table)) {}
  const CoverageTable& table() const { return table_; }

 private:
  CoverageTable table_;
};

CoverageTable run_unconditional(const ExperimentConfig& config);

struct RatePoint {
  std::size_t n = 0;
  double error = 0.0;  // coverage - (1 - alpha)
  double se = 0.0;
};

struct RateReport {
  std::string prior;
  double alpha = 0.0;
  std::vector<RatePoint> points;
  // sum (error / se)^2 and its 0.99 chi-square bound with one degree of
  // freedom per n
  double chi2 = 0.0;
  double chi2_bound = 0.0;
  bool resolvable = false;  // false: error indistinguishable from zero at every n
  double slope = 0.0;
  double slope_lo = 0.0;  // 95% parametric bootstrap interval
  double slope_hi = 0.0;
  double wp_residual = 0.0;  // matching conditions at the true theta
  double so_residual = 0.0;
};

struct RateStudy {
  CoverageTable table;
  std::vector<RateReport> reports;
};

// Weighted least squares of log|error| on log n with weights (error / se)^2.
double weighted_log_slope(const std::vector<RatePoint>& points);

RateStudy run_rate_study(const ExperimentConfig& config, std::size_t bootstrap = 2000);

struct ConfigurationSource {
  enum class Kind { sample, file } kind = Kind::sample;
  std::string path;  // file: one configuration per line, comma separated residuals
};

std::vector<Configuration> load_configurations(const ModelFamily& family, const std::string& path);

struct ConditionalRow {
  std::string prior;
  std::size_t n = 0;
  double alpha = 0.0;
  std::size_t index = 0;
  std::vector<double> a;
  double B = 0.0, C = 0.0, D = 0.0, E = 0.0;
  double coverage = 0.0;
  double residual4 = 0.0;  // conditional matching residual at the true theta
};

struct ConditionalStudy {
  std::vector<ConditionalRow> per_a;
  CoverageTable averaged;  // mc_se is the spread over configurations / sqrt(count)
};

// `reps` configurations per n when sampling; every configuration of the file otherwise.
ConditionalStudy run_conditional(const ExperimentConfig& config, const ConfigurationSource& source,
                                 const ConditionalCoverageOptions& opt = {});

std::string conditional_csv(const std::vector<ConditionalRow>& rows);

}  // namespace matchprior
