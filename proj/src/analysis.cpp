#include "lorashift/analysis.hpp"

#include <cmath>

namespace lorashift {

namespace {

void require_base_trace(const TransformerModel& model, const ActivationTrace& trace) {
    if (trace.model_fingerprint != model.fingerprint()) {
        throw StaleTraceError("trace does not belong to this model; first-order terms need the base trace");
    }
}

/// ε·ΔW applied to z_l at every position.
Matrix site_increment(const ActivationTrace& trace, const LoraAdapter& adapter, double epsilon) {
    return matmul_transposed(trace.input_at(adapter.site), scale(delta_w(adapter), epsilon));
}

Vector readout_row(const TransformerModel& model, TokenId y) {
    require_token(model, y);
    return model.unembedding().row(y).transpose();
}

}  // namespace

double exact_logit_shift(const TransformerModel& model, const LoraSet& set, std::span<const TokenId> tokens,
                         TokenId y) {
    require_token(model, y);
    const ActivationTrace base = forward(model, tokens);
    const ActivationTrace perturbed = forward(apply(model, set), tokens);
    return perturbed.logits(y) - base.logits(y);
}

double first_order_along(const TransformerModel& model, const ActivationTrace& trace, const LoraAdapter& adapter,
                         double epsilon, const Vector& readout) {
    require_base_trace(model, trace);
    adapter.validate_against(model);
    const Vector jv = jvp_from_site(model, trace, adapter.site, site_increment(trace, adapter, epsilon));
    return dot(readout, jv);
}

double first_order_single(const TransformerModel& model, const ActivationTrace& trace, const LoraAdapter& adapter,
                          double epsilon, TokenId y) {
    return first_order_along(model, trace, adapter, epsilon, readout_row(model, y));
}

FirstOrder first_order_total(const TransformerModel& model, const ActivationTrace& trace, const LoraSet& set,
                             TokenId y) {
    const Vector u = readout_row(model, y);
    FirstOrder out;
    for (const auto& [site, adapter] : set.adapters()) {
        const double c = first_order_along(model, trace, adapter, set.epsilon(), u);
        out.per_site[site] = c;
        out.total += c;
    }
    return out;
}

ShiftReport logit_remainder(const TransformerModel& model, const LoraSet& set, std::span<const TokenId> tokens,
                            TokenId y) {
    require_token(model, y);
    const ActivationTrace base = forward(model, tokens);
    const ActivationTrace perturbed = forward(apply(model, set), tokens);
    const FirstOrder fo = first_order_total(model, base, set, y);

    ShiftReport r;
    r.token = y;
    r.exact_shift = perturbed.logits(y) - base.logits(y);
    r.first_order_total = fo.total;
    r.per_site = fo.per_site;
    r.remainder = r.exact_shift - r.first_order_total;
    r.delta_norm = perturbation_norm(set);
    return r;
}

MarginReport margin_report(const TransformerModel& model, const LoraSet& set, std::span<const TokenId> tokens,
                           TokenId y_doc, TokenId y_pre) {
    require_token(model, y_doc, "y_doc");
    require_token(model, y_pre, "y_pre");
    if (y_doc == y_pre) throw InputError("y_doc and y_pre must differ");

    const ActivationTrace base = forward(model, tokens);
    const ActivationTrace perturbed = forward(apply(model, set), tokens);
    const Vector direction = readout_row(model, y_doc) - readout_row(model, y_pre);

    MarginReport r;
    r.y_doc = y_doc;
    r.y_pre = y_pre;
    r.m0 = base.logits(y_doc) - base.logits(y_pre);
    r.m = perturbed.logits(y_doc) - perturbed.logits(y_pre);
    for (const auto& [site, adapter] : set.adapters()) {
        const double c = first_order_along(model, base, adapter, set.epsilon(), direction);
        r.per_site_margin[site] = c;
        r.first_order_margin += c;
    }
    r.margin_remainder = r.m - r.m0 - r.first_order_margin;
    r.flip_actual = r.m > 0.0;
    r.flip_predicted = r.m0 + r.first_order_margin > 0.0;
    return r;
}

FlipDiagnostic flip_criterion(const MarginReport& report) {
    FlipDiagnostic d;
    d.lhs = report.first_order_margin;
    d.rhs = -report.m0 - report.margin_remainder;
    d.inequality_holds = d.lhs > d.rhs;
    d.flip_actual = report.m > 0.0;
    d.identity_consistent = d.inequality_holds == d.flip_actual;
    d.first_order_prediction = report.flip_predicted;
    d.prediction_correct = report.flip_predicted == d.flip_actual;
    return d;
}

void validate_eps_grid(std::span<const double> eps_grid) {
    if (eps_grid.size() < 3) throw InputError("eps_grid needs at least 3 points");
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
        if (!(eps_grid[i] > 0.0) || !std::isfinite(eps_grid[i])) {
            throw InputError("eps_grid[" + std::to_string(i) + "] must be positive and finite");
        }
        if (i > 0 && !(eps_grid[i] < eps_grid[i - 1])) {
            throw InputError("eps_grid must be strictly decreasing (index " + std::to_string(i) + ")");
        }
    }
}

SweepResult sweep_remainder(std::span<const double> eps_grid, const std::function<ShiftSample(double)>& evaluate) {
    validate_eps_grid(eps_grid);
    SweepResult out;
    out.eps_grid.assign(eps_grid.begin(), eps_grid.end());
    for (double eps : eps_grid) {
        const ShiftSample s = evaluate(eps);
        SweepRow row;
        row.epsilon = eps;
        row.exact_shift = s.exact_shift;
        row.first_order = s.first_order;
        row.remainder = s.exact_shift - s.first_order;
        row.remainder_over_eps = row.remainder / eps;
        row.remainder_over_eps_sq = row.remainder / (eps * eps);
        out.rows.push_back(row);
    }
    for (const auto& row : out.rows) {
        if (std::fabs(row.remainder) > kRemainderFloor) ++out.rows_used;
    }
    if (out.rows_used == 0) {
        out.linear_exact = true;
    } else {
        out.fitted_slope = fit_loglog_slope(out.rows);
    }
    return out;
}

SweepResult remainder_sweep(const TransformerModel& model, const LoraSet& set, std::span<const TokenId> tokens,
                            TokenId y, std::span<const double> eps_grid) {
    validate_eps_grid(eps_grid);
    require_token(model, y);
    const ActivationTrace base = forward(model, tokens);
    return sweep_remainder(eps_grid, [&](double eps) {
        const LoraSet scaled = scale(set, eps);
        const ActivationTrace perturbed = forward(apply(model, scaled), tokens);
        return ShiftSample{perturbed.logits(y) - base.logits(y), first_order_total(model, base, scaled, y).total};
    });
}

double fit_loglog_slope(std::span<const SweepRow> rows) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : rows) {
        if (std::fabs(row.remainder) > kRemainderFloor && row.epsilon > 0.0) {
            pts.emplace_back(std::log(row.epsilon), std::log(std::fabs(row.remainder)));
        }
    }
    if (pts.size() < 2) {
        throw InsufficientDataError("slope fit needs at least 2 rows with |remainder| > 1e-13, got " +
                                    std::to_string(pts.size()));
    }
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : pts) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 0.0)) throw InsufficientDataError("slope fit needs at least 2 distinct epsilon values");
    return sxy / sxx;
}

}  // namespace lorashift
