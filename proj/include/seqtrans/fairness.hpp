#pragma once

#include "seqtrans/dataset.hpp"
#include "seqtrans/linalg.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqtrans {

// m(x, s) = sigmoid(intercept + coefficients . x + sensitive_coefficient * s).
// An unaware model ignores s.
struct LogisticModel {
    std::vector<std::string> feature_names;
    std::vector<double> coefficients;
    double intercept = 0.0;
    bool includes_sensitive = false;
    double sensitive_coefficient = 0.0;
    bool converged = true;
    std::size_t iterations = 0;
    std::vector<std::string> warnings;

    std::string tag() const { return includes_sensitive ? "aware" : "unaware"; }
};

struct LogisticFitOptions {
    std::size_t max_iter = 100;
    double tol = 1e-8;
};

// Newton / IRLS maximum likelihood. Features are standardized internally and
// the coefficients reported in raw units. Constant features are dropped (zero
// coefficient, warning).
LogisticModel fit_logistic(const Dataset& dataset, std::string_view target, const std::vector<std::string>& features,
                           bool include_sensitive, const LogisticFitOptions& options = {});

// Design-matrix form; `sensitive` may be empty for unaware models.
LogisticModel fit_logistic(const Matrix& features, std::span<const double> target, std::span<const int> sensitive,
                           std::vector<std::string> feature_names, bool include_sensitive,
                           const LogisticFitOptions& options = {});

double score(const LogisticModel& model, std::span<const double> x, int s);

struct DecompositionStep {
    std::string label;
    double before = 0.0;
    double after = 0.0;
    double delta = 0.0;
};

struct DecompositionPath {
    std::vector<DecompositionStep> steps;

    double total() const;  // final score minus initial score
    double sum_of_deltas() const;
};

inline constexpr const char* kCeterisParibusLabel = "ceteris paribus s-flip";

// Step 0 flips s from `s_from` to `s_to` holding x; then each feature listed in
// `order` (positions into the model's features, topological order) is replaced
// by its counterfactual value, keeping earlier substitutions.
DecompositionPath decompose_individual(const LogisticModel& model, std::span<const double> original,
                                       std::span<const double> counterfactual, std::span<const std::size_t> order,
                                       int s_from = 0, int s_to = 1);

struct IndividualScore {
    double score0 = 0.0;  // m(s_from, x)
    double score1 = 0.0;  // m(s_to, x*)
    double delta = 0.0;
};

struct FairnessReport {
    double cdp = 0.0;
    std::size_t n0 = 0;
    std::size_t n1 = 0;
    std::string model;
    std::optional<std::vector<IndividualScore>> individuals;
};

// Counterfactual demographic parity: mean of m(s_to, x*_i) - m(s_from, x_i)
// over the source group. Rows are matched by index, in model feature layout.
FairnessReport cdp(const LogisticModel& model, const Matrix& originals, const Matrix& counterfactuals,
                   std::size_t target_count, bool keep_individuals = false, int s_from = 0, int s_to = 1);

std::string to_json(const FairnessReport& report, int indent = 2);

}  // namespace seqtrans
