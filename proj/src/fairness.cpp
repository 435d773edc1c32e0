#include "seqtrans/fairness.hpp"

#include "seqtrans/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace seqtrans {

namespace {

// Linear predictors are clipped so scores stay strictly inside (0,1).
constexpr double kEtaClip = 30.0;

double sigmoid(double eta) {
    eta = std::clamp(eta, -kEtaClip, kEtaClip);
    return 1.0 / (1.0 + std::exp(-eta));
}

}  // namespace

LogisticModel fit_logistic(const Matrix& features, std::span<const double> target, std::span<const int> sensitive,
                           std::vector<std::string> feature_names, bool include_sensitive,
                           const LogisticFitOptions& options) {
    const std::size_t n = features.rows();
    const std::size_t p = features.cols();
    if (feature_names.size() != p) throw ValidationError("fit_logistic: feature name count mismatch");
    if (p == 0 && !include_sensitive) throw ValidationError("fit_logistic needs at least one feature");
    if (target.size() != n) throw ValidationError("fit_logistic: target length mismatch");
    if (n == 0) throw ValidationError("fit_logistic: no rows");
    if (include_sensitive && sensitive.size() != n) throw ValidationError("fit_logistic: sensitive length mismatch");
    if (!(options.tol > 0.0) || options.max_iter == 0) throw ValidationError("fit_logistic: invalid options");
    for (double y : target)
        if (y != 0.0 && y != 1.0) throw ValidationError("fit_logistic: target is not binary");

    LogisticModel model;
    model.feature_names = std::move(feature_names);
    model.coefficients.assign(p, 0.0);
    model.includes_sensitive = include_sensitive;

    // Standardize; drop constant columns.
    std::vector<std::size_t> used;
    std::vector<double> mean(p, 0.0);
    std::vector<double> sd(p, 0.0);
    for (std::size_t c = 0; c < p; ++c) {
        for (std::size_t r = 0; r < n; ++r) mean[c] += features(r, c);
        mean[c] /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) sd[c] += (features(r, c) - mean[c]) * (features(r, c) - mean[c]);
        sd[c] = std::sqrt(sd[c] / static_cast<double>(n));
        if (sd[c] > 1e-12 * std::max(1.0, std::abs(mean[c]))) {
            used.push_back(c);
        } else {
            model.warnings.push_back("dropped constant feature '" + model.feature_names[c] + "'");
        }
    }
    bool use_s = include_sensitive;
    if (use_s) {
        std::set<int> levels(sensitive.begin(), sensitive.end());
        if (levels.size() < 2) {
            use_s = false;
            model.warnings.push_back("dropped constant sensitive attribute");
        }
    }

    // Design: [1, standardized used features, s]
    const std::size_t q = 1 + used.size() + (use_s ? 1 : 0);
    Matrix x(n, q);
    for (std::size_t r = 0; r < n; ++r) {
        x(r, 0) = 1.0;
        for (std::size_t k = 0; k < used.size(); ++k) x(r, 1 + k) = (features(r, used[k]) - mean[used[k]]) / sd[used[k]];
        if (use_s) x(r, q - 1) = static_cast<double>(sensitive[r]);
    }

    std::vector<double> beta(q, 0.0);
    std::vector<double> grad(q);
    std::vector<double> prob(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    model.converged = false;
    for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
        for (std::size_t r = 0; r < n; ++r) {
            double eta = 0.0;
            for (std::size_t k = 0; k < q; ++k) eta += x(r, k) * beta[k];
            prob[r] = sigmoid(eta);
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        Matrix hess(q, q);
        for (std::size_t r = 0; r < n; ++r) {
            const double resid = target[r] - prob[r];
            const double w = prob[r] * (1.0 - prob[r]);
            for (std::size_t a = 0; a < q; ++a) {
                grad[a] += x(r, a) * resid * inv_n;
                const double xa = x(r, a) * w * inv_n;
                for (std::size_t b = 0; b <= a; ++b) hess(a, b) += xa * x(r, b);
            }
        }
        for (std::size_t a = 0; a < q; ++a)
            for (std::size_t b = 0; b < a; ++b) hess(b, a) = hess(a, b);

        std::vector<double> step;
        try {
            step = cholesky_solve(hess, grad);
        } catch (const NumericError&) {
            for (std::size_t a = 0; a < q; ++a) hess(a, a) += 1e-10;
            try {
                step = cholesky_solve(hess, grad);
            } catch (const NumericError&) {
                model.warnings.push_back("singular Hessian; stopped at iteration " + std::to_string(iter));
                model.iterations = iter;
                break;
            }
        }
        double max_grad = 0.0;
        double max_step = 0.0;
        for (std::size_t a = 0; a < q; ++a) {
            max_grad = std::max(max_grad, std::abs(grad[a]));
            max_step = std::max(max_step, std::abs(step[a]));
        }
        model.iterations = iter + 1;
        // A vanishing gradient alone is not enough: under separation the
        // gradient underflows while Newton steps stay O(1).
        if (max_grad <= options.tol && max_step <= std::sqrt(options.tol)) {
            model.converged = true;
            break;
        }
        for (std::size_t a = 0; a < q; ++a) beta[a] += step[a];
    }
    if (!model.converged) {
        model.warnings.push_back("logistic fit did not converge in " + std::to_string(model.iterations) +
                                 " iterations (possible separation)");
    }

    // Back to raw units.
    model.intercept = beta[0];
    for (std::size_t k = 0; k < used.size(); ++k) {
        const std::size_t c = used[k];
        model.coefficients[c] = beta[1 + k] / sd[c];
        model.intercept -= model.coefficients[c] * mean[c];
    }
    if (use_s) model.sensitive_coefficient = beta[q - 1];
    return model;
}

LogisticModel fit_logistic(const Dataset& dataset, std::string_view target, const std::vector<std::string>& features,
                           bool include_sensitive, const LogisticFitOptions& options) {
    if (features.empty() && !include_sensitive) throw ValidationError("fit_logistic needs at least one feature");
    std::vector<std::size_t> cols;
    for (const auto& f : features) cols.push_back(dataset.column_index(f));
    Matrix x(dataset.rows(), cols.size());
    for (std::size_t r = 0; r < dataset.rows(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) x(r, c) = dataset.values()(r, cols[c]);
    const auto y = dataset.column(target);
    return fit_logistic(x, y, dataset.sensitive(), features, include_sensitive, options);
}

double score(const LogisticModel& model, std::span<const double> x, int s) {
    if (x.size() != model.coefficients.size()) {
        throw ValidationError("score: expected " + std::to_string(model.coefficients.size()) + " features, got " +
                              std::to_string(x.size()));
    }
    double eta = model.intercept;
    for (std::size_t k = 0; k < x.size(); ++k) eta += model.coefficients[k] * x[k];
    if (model.includes_sensitive) eta += model.sensitive_coefficient * static_cast<double>(s);
    return sigmoid(eta);
}

double DecompositionPath::total() const {
    if (steps.empty()) return 0.0;
    return steps.back().after - steps.front().before;
}

double DecompositionPath::sum_of_deltas() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.delta;
    return s;
}

DecompositionPath decompose_individual(const LogisticModel& model, std::span<const double> original,
                                       std::span<const double> counterfactual, std::span<const std::size_t> order,
                                       int s_from, int s_to) {
    const std::size_t p = model.coefficients.size();
    if (original.size() != p || counterfactual.size() != p) {
        throw ValidationError("decompose_individual: feature vectors do not match the model");
    }
    std::vector<bool> seen(p, false);
    for (std::size_t j : order) {
        if (j >= p || seen[j]) throw ValidationError("decompose_individual: order is not a set of feature positions");
        seen[j] = true;
    }
    for (std::size_t j = 0; j < p; ++j) {
        if (!seen[j] && original[j] != counterfactual[j]) {
            throw ValidationError("decompose_individual: feature '" + model.feature_names[j] +
                                  "' changed but is missing from the order");
        }
    }

    DecompositionPath path;
    std::vector<double> current(original.begin(), original.end());
    double before = score(model, current, s_from);
    double after = score(model, current, s_to);
    path.steps.push_back({kCeterisParibusLabel, before, after, after - before});
    for (std::size_t j : order) {
        before = after;
        current[j] = counterfactual[j];
        after = score(model, current, s_to);
        path.steps.push_back({model.feature_names[j], before, after, after - before});
    }
    return path;
}

FairnessReport cdp(const LogisticModel& model, const Matrix& originals, const Matrix& counterfactuals,
                   std::size_t target_count, bool keep_individuals, int s_from, int s_to) {
    if (originals.rows() != counterfactuals.rows() || originals.cols() != counterfactuals.cols()) {
        throw ValidationError("cdp: originals and counterfactuals differ in shape");
    }
    if (originals.rows() == 0) throw ValidationError("cdp: empty source group");

    FairnessReport rep;
    rep.n0 = originals.rows();
    rep.n1 = target_count;
    rep.model = model.tag();
    std::vector<IndividualScore> ind;
    ind.reserve(rep.n0);
    double sum = 0.0;
    for (std::size_t r = 0; r < rep.n0; ++r) {
        const double s0 = score(model, originals.row(r), s_from);
        const double s1 = score(model, counterfactuals.row(r), s_to);
        ind.push_back({s0, s1, s1 - s0});
        sum += s1 - s0;
    }
    rep.cdp = sum / static_cast<double>(rep.n0);
    if (keep_individuals) rep.individuals = std::move(ind);
    return rep;
}

std::string to_json(const FairnessReport& report, int indent) {
    nlohmann::ordered_json j;
    j["cdp"] = report.cdp;
    j["n0"] = report.n0;
    j["n1"] = report.n1;
    j["model"] = report.model;
    if (report.individuals) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& i : *report.individuals) {
            nlohmann::ordered_json e;
            e["score0"] = i.score0;
            e["score1"] = i.score1;
            e["delta"] = i.delta;
            arr.push_back(std::move(e));
        }
        j["individuals"] = std::move(arr);
    }
    return j.dump(indent);
}

}  // namespace seqtrans
