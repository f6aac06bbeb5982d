#pragma once

// First-order logit-shift analysis around the base trajectory.
//
// For a joint perturbation Δ the exact logit shift G_y(Δ) − G_y(0) splits as
//   Σ_sites u_yᵀ J_{l+1→L}(x) (ε ΔW_l z_l)   +   R_y(Δ)
// where the first term is computed by JVPs on the base trajectory and the
// remainder is obtained by subtraction.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "lorashift/lora.hpp"
#include "lorashift/model.hpp"

namespace lorashift {

struct ShiftReport {
    TokenId token = 0;
    double exact_shift = 0.0;
    double first_order_total = 0.0;
    std::map<SiteId, double> per_site;
    double remainder = 0.0;
    double delta_norm = 0.0;
};

struct MarginReport {
    TokenId y_doc = 0;
    TokenId y_pre = 0;
    double m0 = 0.0;
    double m = 0.0;
    double first_order_margin = 0.0;
    std::map<SiteId, double> per_site_margin;
    double margin_remainder = 0.0;
    bool flip_predicted = false;
    bool flip_actual = false;
};

/// Both sides of "first-order margin > −m0 − R_m", evaluated with the
/// measured remainder, plus the remainder-free prediction.
struct FlipDiagnostic {
    double lhs = 0.0;  // first-order margin correction
    double rhs = 0.0;  // −m0 − R_m
    bool inequality_holds = false;
    bool flip_actual = false;
    /// inequality_holds == flip_actual; an algebraic identity.
    bool identity_consistent = false;
    bool first_order_prediction = false;
    bool prediction_correct = false;
};

struct SweepRow {
    double epsilon = 0.0;
    double exact_shift = 0.0;
    double first_order = 0.0;
    double remainder = 0.0;
    double remainder_over_eps = 0.0;
    double remainder_over_eps_sq = 0.0;
};

struct SweepResult {
    std::vector<double> eps_grid;
    std::vector<SweepRow> rows;
    /// Absent exactly when linear_exact is set.
    std::optional<double> fitted_slope;
    bool linear_exact = false;
    std::size_t rows_used = 0;
};

/// Rows with |remainder| at or below this are float noise and excluded from the fit.
inline constexpr double kRemainderFloor = 1e-13;

/// forward(apply(model, set)).logits[y] − forward(model).logits[y]
double exact_logit_shift(const TransformerModel& model, const LoraSet& set, std::span<const TokenId> tokens,
                         TokenId y);

/// u_yᵀ J_{l+1→L}(x) (ε·ΔW·z_l), with z_l read from the base trace.
double first_order_single(const TransformerModel& model, const ActivationTrace& trace, const LoraAdapter& adapter,
                          double epsilon, TokenId y);

/// Same contraction with an arbitrary readout direction (e.g. u_doc − u_pre).
double first_order_along(const TransformerModel& model, const ActivationTrace& trace, const LoraAdapter& adapter,
                         double epsilon, const Vector& readout);

struct FirstOrder {
    double total = 0.0;
    std::map<SiteId, double> per_site;
};

FirstOrder first_order_total(const TransformerModel& model, const ActivationTrace& trace, const LoraSet& set,
                             TokenId y);

ShiftReport logit_remainder(const TransformerModel& model, const LoraSet& set, std::span<const TokenId> tokens,
                            TokenId y);

MarginReport margin_report(const TransformerModel& model, const LoraSet& set, std::span<const TokenId> tokens,
                           TokenId y_doc, TokenId y_pre);

FlipDiagnostic flip_criterion(const MarginReport& report);

/// One evaluation of the shift at a given ε.
struct ShiftSample {
    double exact_shift = 0.0;
    double first_order = 0.0;
};

/// Throws InputError unless the grid is positive, strictly decreasing and has ≥ 3 points.
void validate_eps_grid(std::span<const double> eps_grid);

/// Sweep harness over any ε ↦ (exact, first-order) map.
SweepResult sweep_remainder(std::span<const double> eps_grid, const std::function<ShiftSample(double)>& evaluate);

SweepResult remainder_sweep(const TransformerModel& model, const LoraSet& set, std::span<const TokenId> tokens,
                            TokenId y, std::span<const double> eps_grid);

/// OLS slope of log|remainder| against log ε over rows with
/// |remainder| > kRemainderFloor. Throws InsufficientDataError with < 2 such rows.
double fit_loglog_slope(std::span<const SweepRow> rows);

}  // namespace lorashift
