#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace matchprior {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameter outside the model's open domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Log-likelihood (or a derivative) came out non-finite.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<Eigen::VectorXd> trajectory)
      : Error(what), trajectory_(std::move(trajectory)) {}
  const std::vector<Eigen::VectorXd>& trajectory() const { return trajectory_; }

 private:
  std::vector<Eigen::VectorXd> trajectory_;
};

class SaddleError : public Error {
 public:
  using Error::Error;
};

// Constrained optimum runs into the edge of the domain (e.g. sigma -> 0).
class BoundaryError : public Error {
 public:
  using Error::Error;
};

// W(psi) came out clearly negative: the profile solver missed the maximum.
class InconsistencyError : public Error {
 public:
  using Error::Error;
};

class CurvatureError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, std::vector<std::string> trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<std::string>& trace() const { return trace_; }

 private:
  std::vector<std::string> trace_;
};

class BracketError : public Error {
 public:
  using Error::Error;
};

class MissingArrayError : public Error {
 public:
  using Error::Error;
};

// Fitted values fail the score equations they should satisfy.
class FitQualityError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace matchprior
