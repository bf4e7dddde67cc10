#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wordlens {

// Malformed input, missing ids, violated preconditions. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-convergence, rank deficiency and similar failures of the numerics. Exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unidentifiable least-squares fit. `pairs` lists near-collinear word pairs with their
// absolute correlation; `dependent` lists the words the pivoted QR flagged as redundant.
class RankDeficiencyError : public NumericalError {
public:
    struct Pair {
        std::string first;
        std::string second;
        double correlation;
    };

    RankDeficiencyError(const std::string& what, std::vector<Pair> pairs, std::vector<std::string> dependent)
        : NumericalError(what), pairs_(std::move(pairs)), dependent_(std::move(dependent)) {}

    const std::vector<Pair>& pairs() const noexcept { return pairs_; }
    const std::vector<std::string>& dependent() const noexcept { return dependent_; }

private:
    std::vector<Pair> pairs_;
    std::vector<std::string> dependent_;
};

}  // namespace wordlens
