#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace bgwsr {

// Malformed or out-of-range input data (CSV contents, dataset invariants).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A factorization or solve failed. `pivot` is the first failing Cholesky
// pivot when known.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what,
                            std::optional<std::size_t> pivot = std::nullopt)
      : std::runtime_error(what), pivot_(pivot) {}

  std::optional<std::size_t> pivot() const noexcept { return pivot_; }

 private:
  std::optional<std::size_t> pivot_;
};

// Local weighted least-squares system is rank deficient.
class SingularFit : public NumericalFailure {
 public:
  SingularFit(const std::string& what, std::size_t site)
      : NumericalFailure(what), site_(site) {}

  std::size_t site() const noexcept { return site_; }

 private:
  std::size_t site_;
};

// Every candidate bandwidth failed during cross validation.
class SelectionFailure : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

// A prediction site receives zero total weight.
class IsolatedSite : public std::runtime_error {
 public:
  IsolatedSite(const std::string& what, std::size_t site)
      : std::runtime_error(what), site_(site) {}

  std::size_t site() const noexcept { return site_; }

 private:
  std::size_t site_;
};

// Scenario generation could not satisfy the requested split.
class GenerationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bgwsr
