#include "kdv/feedback.hpp"

#include <cmath>

#include "kdv/errors.hpp"

namespace kdv {

double smoothstep(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / x);
  const double b = std::exp(-1.0 / (1.0 - x));
  return a / (a + b);
}

double theta(double t, double delta) {
  if (!(delta > 0.0 && delta < 0.1)) throw ParameterError("theta: delta must lie in (0, 1/10)");
  const double tau = t - 2.0 * std::floor(t / 2.0);
  if (tau >= 1.0) return 0.0;
  if (tau < delta) return smoothstep(tau / delta);
  if (tau > 1.0 - delta) return smoothstep((1.0 - tau) / delta);
  return 1.0;
}

double rho(double r, double r0) {
  if (!(r0 > 0.0 && r0 < 1.0)) throw ParameterError("rho: r0 must lie in (0, 1)");
  if (r < 0.0) throw ParameterError("rho: argument must be >= 0");
  return 1.0 - smoothstep((r - r0) / (1.0 - r0));
}

std::pair<double, double> time_varying_weights(const TimeVarying& tv, const Field& u, double t) {
  const double r = std::pow(hs_norm(mean_project(u), tv.s), 2);
  const double weight = rho(r, tv.r0);
  const double on = theta(t / tv.t_switch, tv.delta_switch);
  const double off = theta((t - tv.t_switch) / tv.t_switch, tv.delta_switch);
  return {weight * on, weight * off + (1.0 - weight)};
}

FeedbackLaw::FeedbackLaw(const ControlProfile& p, Variant v)
    : profile_(std::make_shared<const ControlProfile>(p)), variant_(std::move(v)) {}

FeedbackLaw FeedbackLaw::none(const ControlProfile& p) { return FeedbackLaw(p, NoFeedback{}); }

FeedbackLaw FeedbackLaw::damping(const ControlProfile& p) { return FeedbackLaw(p, Damping{}); }

namespace {

void check_gramian(const ControlProfile& p, const std::shared_ptr<const OperatorMatrix>& L) {
  if (!L) throw ParameterError("feedback: missing L_lambda operator");
  if (L->kind() != OperatorKind::LLambda) throw ParameterError("feedback: operator is not L_lambda");
  if (L->n_modes() != p.grid().size()) throw DimensionError("feedback: L_lambda built on another grid");
  if (!(L->param() > 0.0)) throw ParameterError("feedback: lambda must be > 0");
  if (!L->positive_definite()) throw IllConditionedError("feedback: L_lambda is not positive definite");
}

}  // namespace

FeedbackLaw FeedbackLaw::gramian_rate(const ControlProfile& p, std::shared_ptr<const OperatorMatrix> L) {
  check_gramian(p, L);
  return FeedbackLaw(p, GramianRate{std::move(L)});
}

FeedbackLaw FeedbackLaw::time_varying(const ControlProfile& p, std::shared_ptr<const OperatorMatrix> L,
                                      double t_switch, double delta_switch, double r0, double s) {
  check_gramian(p, L);
  if (!(t_switch > 0.0)) throw ParameterError("time-varying law: t_switch must be > 0");
  if (!(delta_switch > 0.0 && delta_switch < 0.1)) {
    throw ParameterError("time-varying law: delta_switch must lie in (0, 1/10)");
  }
  if (!(r0 > 0.0 && r0 < 1.0)) throw ParameterError("time-varying law: r0 must lie in (0, 1)");
  if (!(s >= 0.0)) throw ParameterError("time-varying law: s must be >= 0");
  return FeedbackLaw(p, TimeVarying{std::move(L), t_switch, delta_switch, r0, s});
}

std::string FeedbackLaw::name() const {
  struct Visitor {
    std::string operator()(const NoFeedback&) const { return "none"; }
    std::string operator()(const Damping&) const { return "damping"; }
    std::string operator()(const GramianRate&) const { return "gramian_rate"; }
    std::string operator()(const TimeVarying&) const { return "time_varying"; }
  };
  return std::visit(Visitor{}, variant_);
}

double FeedbackLaw::lambda() const {
  if (auto* g = std::get_if<GramianRate>(&variant_)) return g->L->param();
  if (auto* tv = std::get_if<TimeVarying>(&variant_)) return tv->L->param();
  return 0.0;
}

Field eval_feedback(const FeedbackLaw& law, const Field& u, double t) {
  const ControlProfile& p = law.profile();
  auto damping = [&] { return apply_G(apply_Gstar(u, p), p); };
  struct Visitor {
    const Field& u;
    double t;
    const ControlProfile& p;
    decltype(damping)& gg;

    Field operator()(const NoFeedback&) const { return Field(u.grid()); }
    Field operator()(const Damping&) const { return -gg(); }
    Field operator()(const GramianRate& g) const { return -apply_K_lambda(u, *g.L, p); }
    Field operator()(const TimeVarying& tv) const {
      const auto [c_gramian, c_damping] = time_varying_weights(tv, u, t);
      // Exact plateau values reproduce the static laws bit for bit.
      if (c_gramian == 0.0) {
        if (c_damping == 0.0) return Field(u.grid());
        return c_damping == 1.0 ? -gg() : -(gg() * c_damping);
      }
      const Field k = apply_K_lambda(u, *tv.L, p);
      if (c_damping == 0.0) return c_gramian == 1.0 ? -k : -(k * c_gramian);
      return -(k * c_gramian + gg() * c_damping);
    }
  };
  return std::visit(Visitor{u, t, p, damping}, law.variant());
}

Forcing as_forcing(const FeedbackLaw& law) {
  if (std::holds_alternative<NoFeedback>(law.variant())) return {};
  return [law](const Field& u, double t) { return eval_feedback(law, u, t); };
}

namespace {

std::vector<cplx> ggstar_diagonal(const ControlProfile& p) {
  const OperatorMatrix gg = build_ggstar(p);
  const int K = p.grid().max_wavenumber();
  std::vector<cplx> d(p.grid().half_size(), 0.0);
  for (int k = 1; k <= K; ++k) d[k] = gg.entries()(mode_index(k, K), mode_index(k, K));
  return d;
}

std::vector<cplx> k_lambda_diagonal(const ControlProfile& p, const OperatorMatrix& L) {
  const OperatorMatrix gg = build_ggstar(p);
  const Eigen::MatrixXcd inv =
      L.entries().llt().solve(Eigen::MatrixXcd::Identity(L.entries().rows(), L.entries().cols()));
  const int K = p.grid().max_wavenumber();
  std::vector<cplx> d(p.grid().half_size(), 0.0);
  for (int k = 1; k <= K; ++k) {
    const int i = mode_index(k, K);
    d[k] = (gg.entries().row(i) * inv.col(i)).value();
  }
  return d;
}

}  // namespace

std::vector<cplx> diagonal_shift(const FeedbackLaw& law) {
  if (std::holds_alternative<NoFeedback>(law.variant())) return {};
  if (auto* g = std::get_if<GramianRate>(&law.variant())) return k_lambda_diagonal(law.profile(), *g->L);
  return ggstar_diagonal(law.profile());
}

TrajectoryRecord simulate(const Field& u0, double t_final, const StepperConfig& cfg, const LinearSymbol& sym,
                          const FeedbackLaw& law, SimulateOptions opts) {
  if (!(u0.grid() == law.profile().grid())) throw DimensionError("simulate: profile and initial data grids differ");
  opts.law = law.name();
  if (opts.linear_shift.empty()) opts.linear_shift = diagonal_shift(law);
  if (auto* tv = std::get_if<TimeVarying>(&law.variant()); tv && !opts.shift_schedule) {
    auto dk = std::make_shared<const std::vector<cplx>>(k_lambda_diagonal(law.profile(), *tv->L));
    auto dg = std::make_shared<const std::vector<cplx>>(opts.linear_shift);
    opts.shift_schedule = [tv = *tv, dk, dg](double t, const Field& u) {
      const auto [a, b] = time_varying_weights(tv, u, t);
      std::vector<cplx> d(dk->size());
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = a * (*dk)[k] + b * (*dg)[k];
      return d;
    };
  }
  return simulate(u0, t_final, cfg, sym, as_forcing(law), opts);
}

}  // namespace kdv
