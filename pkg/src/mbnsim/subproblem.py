"""Inner convex step of the joint association/beamforming solvers.

At each outer iteration the utility's fractional SINR terms have been replaced
by their concave quadratic surrogates (given the auxiliary variables), and the
binary-association penalty by its tangent linearization, so what remains is a
concave maximization over digital beams, per-link power shares and relaxed
associations subject to second-order-cone linking constraints (the big-M
decoupling), per-BS budgets, cluster caps, blockage bounds and optional
QoS / handover-retention constraints.

Everything here runs in normalized units: per-BS digital budgets are 1 and
per-band noise power is 1, so the effective channels passed in through
:class:`SubproblemSpec` must absorb sqrt(budget / noise_power).

Problems are compiled once per structure signature and re-solved with updated
parameter values (channel-times-auxiliary matrices, penalty coefficients,
bounds), keeping the per-iteration cost at the conic solve itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

LN2 = float(np.log(2.0))

SUM_RATE = "sum_rate"
HO_COST = "ho_cost"
WEIGHTED = "weighted_rate"


class Infeasible(RuntimeError):
    """The constraint set admits no point (typically an unattainable QoS)."""


class MaxIterations(RuntimeError):
    """The conic solver gave up; carries the best available iterate, if any."""

    def __init__(self, message: str, solution: "SubproblemSolution | None" = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 5000
    stationarity_tol: float = 1e-5
    feasibility_tol: float = 1e-6
    solver: str | None = None
    debug_trace: str | None = None  # append one line per solve to this file


@dataclass(frozen=True)
class HOTerms:
    """Handover-aware objective data: per-band cost fractions and which users
    keep each band's log term (a band with zero attainable rate is dropped)."""

    eta_t: float
    eta_u: float
    band_t_active: tuple[int, ...]
    band_u_active: tuple[int, ...]


@dataclass
class SubproblemSpec:
    """One inner problem instance in normalized units."""

    n_users: int
    # THz side (n_tbs == 0 disables)
    n_tbs: int = 0
    n_rf_t: int = 0
    eff_thz: np.ndarray | None = None        # (n_tbs * n_rf_t, K)
    eff_thz_abs: np.ndarray | None = None
    alpha_lb: np.ndarray | None = None       # (n_tbs, K)
    alpha_ub: np.ndarray | None = None
    cluster_t: np.ndarray | None = None      # (K,)
    bw_t_gbps: float = 0.0
    mu: np.ndarray | None = None             # (K,) complex
    sinr_prev_t: np.ndarray | None = None    # (K,) conditioning scale, see _Compiled
    lin_alpha: np.ndarray | None = None      # objective += sum(lin_alpha * alpha)
    prev_thz: np.ndarray | None = None
    # UMB side
    n_ubs: int = 0
    n_rf_u: int = 0
    eff_umb: np.ndarray | None = None
    beta_lb: np.ndarray | None = None
    beta_ub: np.ndarray | None = None
    cluster_u: np.ndarray | None = None
    bw_u_gbps: float = 0.0
    zeta: np.ndarray | None = None
    sinr_prev_u: np.ndarray | None = None
    lin_beta: np.ndarray | None = None
    prev_umb: np.ndarray | None = None
    # shared
    qos_gbps: np.ndarray | None = None       # (K,), zeros disable
    retain_min: np.ndarray | None = None     # (K,) per-user retention floor
    mode: str = SUM_RATE
    ho: HOTerms | None = None
    weight_t: np.ndarray | None = None       # (K,) per-user rate weights (weighted mode)
    weight_u: np.ndarray | None = None
    obj_const: float = 0.0

    def structure_key(self) -> tuple:
        qos_active = ()
        if self.qos_gbps is not None:
            qos_active = tuple(int(k) for k in np.flatnonzero(self.qos_gbps > 0))
        band_t = self.ho.band_t_active if self.ho else ()
        band_u = self.ho.band_u_active if self.ho else ()
        return (
            self.n_tbs,
            self.n_rf_t,
            self.n_ubs,
            self.n_rf_u,
            self.n_users,
            round(self.bw_t_gbps, 12),
            round(self.bw_u_gbps, 12),
            self.mode,
            qos_active,
            self.retain_min is not None,
            band_t,
            band_u,
        )


@dataclass
class SubproblemSolution:
    """Normalized-unit solution: beams scaled by sqrt(budget), powers by budget."""

    w: np.ndarray | None
    u: np.ndarray | None
    p: np.ndarray | None
    delta: np.ndarray | None
    alpha: np.ndarray | None
    beta: np.ndarray | None
    objective: float
    status: str
    residuals: dict = field(default_factory=dict)


def build_bigM_constraints(w, power, assoc, budget, n_rf) -> list:
    """Couple beams, power shares and associations for one band.

    Per (BS, user) the cone ||[2 w; assoc - power]|| <= assoc + power squares to
    ||w||^2 <= assoc * power; per BS, sum_k power <= budget and
    power <= assoc * budget force beams to zero wherever the association is.
    """
    n_bs, n_users = assoc.shape
    cons = []
    for b in range(n_bs):
        rows = slice(b * n_rf, (b + 1) * n_rf)
        z = cp.vstack(
            [
                2.0 * cp.real(w[rows, :]),
                2.0 * cp.imag(w[rows, :]),
                cp.reshape(assoc[b, :] - power[b, :], (1, n_users), order="C"),
            ]
        )
        cons.append(cp.SOC(assoc[b, :] + power[b, :], z, axis=0))
    cons.append(cp.sum(power, axis=1) <= budget)
    cons.append(power <= budget * assoc)
    return cons


class _Compiled:
    """A parametrized problem for one structure signature."""

    def __init__(self, key: tuple):
        (
            n_tbs,
            n_rf_t,
            n_ubs,
            n_rf_u,
            n_users,
            bw_t,
            bw_u,
            mode,
            qos_active,
            retain_on,
            band_t_active,
            band_u_active,
        ) = key
        self.key = key
        self.n_tbs, self.n_rf_t = n_tbs, n_rf_t
        self.n_ubs, self.n_rf_u = n_ubs, n_rf_u
        self.n_users = n_users
        self.qos_active = qos_active
        self.band_t_active = band_t_active
        self.band_u_active = band_u_active
        self.mode = mode
        maskoff = np.ones((n_users, n_users)) - np.eye(n_users)
        cons: list = []
        obj_terms: list = []
        self.param: dict[str, cp.Parameter] = {}
        self.var: dict[str, cp.Variable] = {}

        rate_t = rate_u = None
        cs_t = cs_u = None
        if n_tbs:
            W = cp.Variable((n_tbs * n_rf_t, n_users), complex=True, name="w")
            p = cp.Variable((n_tbs, n_users), nonneg=True, name="p")
            al = cp.Variable((n_tbs, n_users), nonneg=True, name="alpha")
            self.var.update(w=W, p=p, alpha=al)
            # The log argument is pre-scaled by sigma = 1/(1 + previous SINR),
            # folded into the parameter values, so the conic data stays O(1)
            # even at very high SINR:  log(1+g) = log(sigma (1+g)) - log sigma.
            clin = cp.Parameter((n_tbs * n_rf_t, n_users), complex=True, name="clin_t")
            cquad = cp.Parameter((n_tbs * n_rf_t, n_users), complex=True, name="cquad_t")
            ctil = cp.Parameter((n_tbs * n_rf_t, n_users), complex=True, name="ctil")
            noi = cp.Parameter(n_users, nonneg=True, name="noi_t")
            base = cp.Parameter(n_users, nonneg=True, name="base_t")
            nlog = cp.Parameter(n_users, nonneg=True, name="nlog_t")
            lin_a = cp.Parameter((n_tbs, n_users), name="lin_alpha")
            a_lb = cp.Parameter((n_tbs, n_users), nonneg=True, name="alpha_lb")
            a_ub = cp.Parameter((n_tbs, n_users), nonneg=True, name="alpha_ub")
            clus_t = cp.Parameter(n_users, nonneg=True, name="cluster_t")
            self.param.update(
                clin_t=clin, cquad_t=cquad, ctil=ctil, noi_t=noi, base_t=base, nlog_t=nlog,
                lin_alpha=lin_a, alpha_lb=a_lb, alpha_ub=a_ub, cluster_t=clus_t,
            )
            slin = clin.H @ W
            squad = cquad.H @ W
            stil = ctil.H @ W
            interf = cp.sum(cp.square(cp.abs(cp.multiply(maskoff, squad))), axis=1)
            absorb = cp.sum(cp.square(cp.abs(stil)), axis=1)
            arg_t = base + 2.0 * cp.real(cp.diag(slin)) - (interf + absorb + noi)
            rate_t = bw_t / LN2 * (cp.log(arg_t) + nlog)
            cons += build_bigM_constraints(W, p, al, 1.0, n_rf_t)
            cons += [al >= a_lb, al <= a_ub, cp.sum(al, axis=0) <= clus_t]
            obj_terms.append(cp.sum(cp.multiply(lin_a, al)))

        if n_ubs:
            U = cp.Variable((n_ubs * n_rf_u, n_users), complex=True, name="u")
            de = cp.Variable((n_ubs, n_users), nonneg=True, name="delta")
            be = cp.Variable((n_ubs, n_users), nonneg=True, name="beta")
            self.var.update(u=U, delta=de, beta=be)
            clin_u = cp.Parameter((n_ubs * n_rf_u, n_users), complex=True, name="clin_u")
            cquad_u = cp.Parameter((n_ubs * n_rf_u, n_users), complex=True, name="cquad_u")
            noi_u = cp.Parameter(n_users, nonneg=True, name="noi_u")
            base_u = cp.Parameter(n_users, nonneg=True, name="base_u")
            nlog_u = cp.Parameter(n_users, nonneg=True, name="nlog_u")
            lin_b = cp.Parameter((n_ubs, n_users), name="lin_beta")
            b_lb = cp.Parameter((n_ubs, n_users), nonneg=True, name="beta_lb")
            b_ub = cp.Parameter((n_ubs, n_users), nonneg=True, name="beta_ub")
            clus_u = cp.Parameter(n_users, nonneg=True, name="cluster_u")
            self.param.update(
                clin_u=clin_u, cquad_u=cquad_u, noi_u=noi_u, base_u=base_u, nlog_u=nlog_u,
                lin_beta=lin_b, beta_lb=b_lb, beta_ub=b_ub, cluster_u=clus_u,
            )
            slin_u = clin_u.H @ U
            squad_u = cquad_u.H @ U
            interf_u = cp.sum(cp.square(cp.abs(cp.multiply(maskoff, squad_u))), axis=1)
            arg_u = base_u + 2.0 * cp.real(cp.diag(slin_u)) - (interf_u + noi_u)
            rate_u = bw_u / LN2 * (cp.log(arg_u) + nlog_u)
            cons += build_bigM_constraints(U, de, be, 1.0, n_rf_u)
            cons += [be >= b_lb, be <= b_ub, cp.sum(be, axis=0) <= clus_u]
            obj_terms.append(cp.sum(cp.multiply(lin_b, be)))

        if retain_on:
            retain = cp.Parameter(n_users, nonneg=True, name="retain")
            self.param["retain"] = retain
            kept = []
            if n_tbs:
                prev_a = cp.Parameter((n_tbs, n_users), nonneg=True, name="prev_alpha")
                self.param["prev_alpha"] = prev_a
                kept.append(cp.sum(cp.multiply(prev_a, self.var["alpha"]), axis=0))
            if n_ubs:
                prev_b = cp.Parameter((n_ubs, n_users), nonneg=True, name="prev_beta")
                self.param["prev_beta"] = prev_b
                kept.append(cp.sum(cp.multiply(prev_b, self.var["beta"]), axis=0))
            if kept:
                cons.append(sum(kept) >= retain)

        if mode == HO_COST:
            # per-user handover load eta * count, built from cost-scaled
            # coefficients so the cost fraction stays a parameter value
            if n_tbs:
                coef_t = cp.Parameter((n_tbs, n_users), nonneg=True, name="ho_coef_t")
                self.param["ho_coef_t"] = coef_t
                cs_t = cp.sum(cp.multiply(coef_t, self.var["alpha"]), axis=0)
                cons.append(cs_t <= 1.0)
            if n_ubs:
                coef_u = cp.Parameter((n_ubs, n_users), nonneg=True, name="ho_coef_u")
                self.param["ho_coef_u"] = coef_u
                cs_u = cp.sum(cp.multiply(coef_u, self.var["beta"]), axis=0)
                cons.append(cs_u <= 1.0)
            jensen = []
            if band_t_active and rate_t is not None:
                idx = list(band_t_active)
                jensen.append(cp.sum(cp.log((1.0 - cs_t)[idx])) + cp.sum(cp.log(rate_t[idx])))
            if band_u_active and rate_u is not None:
                idx = list(band_u_active)
                jensen.append(cp.sum(cp.log((1.0 - cs_u)[idx])) + cp.sum(cp.log(rate_u[idx])))
            if not jensen:
                raise Infeasible("handover-aware objective has no usable band for any user")
            obj_terms.append(sum(jensen) / (2.0 * n_users))
            if qos_active:
                self._build_ho_qos(cons, rate_t, rate_u, cs_t, cs_u)
        elif mode == WEIGHTED:
            # per-user weighted rates through epigraph variables, so the
            # weights stay parameters (used by the frozen-association
            # refinement of the handover-cost method, where the weights are
            # the fixed interruption factors)
            total = 0
            if rate_t is not None:
                t_t = cp.Variable(n_users, name="rate_epi_t")
                w_t = cp.Parameter(n_users, nonneg=True, name="weight_t")
                self.var["rate_epi_t"] = t_t
                self.param["weight_t"] = w_t
                cons.append(t_t <= rate_t)
                obj_terms.append(cp.sum(cp.multiply(w_t, t_t)))
                total = total + cp.multiply(w_t, t_t)
            if rate_u is not None:
                t_u = cp.Variable(n_users, name="rate_epi_u")
                w_u = cp.Parameter(n_users, nonneg=True, name="weight_u")
                self.var["rate_epi_u"] = t_u
                self.param["weight_u"] = w_u
                cons.append(t_u <= rate_u)
                obj_terms.append(cp.sum(cp.multiply(w_u, t_u)))
                total = total + cp.multiply(w_u, t_u)
            if qos_active:
                idx = list(qos_active)
                qos_par = cp.Parameter(len(idx), nonneg=True, name="qos")
                self.param["qos"] = qos_par
                cons.append(total[idx] >= qos_par)
        else:
            if rate_t is not None:
                obj_terms.append(cp.sum(rate_t))
            if rate_u is not None:
                obj_terms.append(cp.sum(rate_u))
            if qos_active:
                idx = list(qos_active)
                total = 0
                if rate_t is not None:
                    total = total + rate_t[idx]
                if rate_u is not None:
                    total = total + rate_u[idx]
                qos_par = cp.Parameter(len(idx), nonneg=True, name="qos")
                self.param["qos"] = qos_par
                cons.append(total >= qos_par)

        self.problem = cp.Problem(cp.Maximize(sum(obj_terms)), cons)
        if not self.problem.is_dcp(dpp=True):
            raise AssertionError("compiled subproblem is not DPP; parameter reuse would be slow")

    def _build_ho_qos(self, cons, rate_t, rate_u, cs_t, cs_u) -> None:
        """Transformed QoS: mean of per-band log effective rates above the
        log of half the threshold (full threshold for a single-band user)."""
        both = [k for k in self.qos_active if k in self.band_t_active and k in self.band_u_active]
        only_t = [k for k in self.qos_active if k in self.band_t_active and k not in self.band_u_active]
        only_u = [k for k in self.qos_active if k not in self.band_t_active and k in self.band_u_active]
        self.qos_both, self.qos_only_t, self.qos_only_u = both, only_t, only_u
        if both:
            rhs = cp.Parameter(len(both), name="qos_log_both")
            self.param["qos_log_both"] = rhs
            expr = 0.5 * (
                cp.log((1.0 - cs_t)[both])
                + cp.log(rate_t[both])
                + cp.log((1.0 - cs_u)[both])
                + cp.log(rate_u[both])
            )
            cons.append(expr >= rhs)
        if only_t:
            rhs = cp.Parameter(len(only_t), name="qos_log_t")
            self.param["qos_log_t"] = rhs
            cons.append(cp.log((1.0 - cs_t)[only_t]) + cp.log(rate_t[only_t]) >= rhs)
        if only_u:
            rhs = cp.Parameter(len(only_u), name="qos_log_u")
            self.param["qos_log_u"] = rhs
            cons.append(cp.log((1.0 - cs_u)[only_u]) + cp.log(rate_u[only_u]) >= rhs)

    def assign(self, spec: SubproblemSpec) -> None:
        par = self.param
        if self.n_tbs:
            mu = spec.mu if spec.mu is not None else np.zeros(self.n_users, complex)
            prev = spec.sinr_prev_t if spec.sinr_prev_t is not None else np.zeros(self.n_users)
            sig = 1.0 / (1.0 + prev)
            par["clin_t"].value = spec.eff_thz * (np.conj(mu) * sig)[None, :]
            par["cquad_t"].value = spec.eff_thz * (np.abs(mu) * np.sqrt(sig))[None, :]
            par["ctil"].value = spec.eff_thz_abs * (np.abs(mu) * np.sqrt(sig))[None, :]
            par["noi_t"].value = sig * np.abs(mu) ** 2
            par["base_t"].value = sig
            par["nlog_t"].value = np.log1p(prev)
            par["lin_alpha"].value = (
                spec.lin_alpha if spec.lin_alpha is not None else np.zeros((self.n_tbs, self.n_users))
            )
            par["alpha_lb"].value = (
                spec.alpha_lb if spec.alpha_lb is not None else np.zeros((self.n_tbs, self.n_users))
            )
            par["alpha_ub"].value = (
                spec.alpha_ub if spec.alpha_ub is not None else np.ones((self.n_tbs, self.n_users))
            )
            par["cluster_t"].value = (
                spec.cluster_t if spec.cluster_t is not None else np.full(self.n_users, self.n_tbs, float)
            )
        if self.n_ubs:
            ze = spec.zeta if spec.zeta is not None else np.zeros(self.n_users, complex)
            prev = spec.sinr_prev_u if spec.sinr_prev_u is not None else np.zeros(self.n_users)
            sig = 1.0 / (1.0 + prev)
            par["clin_u"].value = spec.eff_umb * (np.conj(ze) * sig)[None, :]
            par["cquad_u"].value = spec.eff_umb * (np.abs(ze) * np.sqrt(sig))[None, :]
            par["noi_u"].value = sig * np.abs(ze) ** 2
            par["base_u"].value = sig
            par["nlog_u"].value = np.log1p(prev)
            par["lin_beta"].value = (
                spec.lin_beta if spec.lin_beta is not None else np.zeros((self.n_ubs, self.n_users))
            )
            par["beta_lb"].value = (
                spec.beta_lb if spec.beta_lb is not None else np.zeros((self.n_ubs, self.n_users))
            )
            par["beta_ub"].value = (
                spec.beta_ub if spec.beta_ub is not None else np.ones((self.n_ubs, self.n_users))
            )
            par["cluster_u"].value = (
                spec.cluster_u if spec.cluster_u is not None else np.full(self.n_users, self.n_ubs, float)
            )
        if "retain" in par:
            par["retain"].value = spec.retain_min
            if self.n_tbs:
                par["prev_alpha"].value = spec.prev_thz
            if self.n_ubs:
                par["prev_beta"].value = spec.prev_umb
        if self.mode == HO_COST:
            if self.n_tbs:
                par["ho_coef_t"].value = spec.ho.eta_t * (1.0 - spec.prev_thz)
            if self.n_ubs:
                par["ho_coef_u"].value = spec.ho.eta_u * (1.0 - spec.prev_umb)
            if self.qos_active:
                q = spec.qos_gbps
                if self.qos_both:
                    par["qos_log_both"].value = np.log([q[k] / 2.0 for k in self.qos_both])
                if self.qos_only_t:
                    par["qos_log_t"].value = np.log([q[k] for k in self.qos_only_t])
                if self.qos_only_u:
                    par["qos_log_u"].value = np.log([q[k] for k in self.qos_only_u])
        else:
            if self.mode == WEIGHTED:
                if self.n_tbs:
                    par["weight_t"].value = (
                        spec.weight_t if spec.weight_t is not None else np.ones(self.n_users)
                    )
                if self.n_ubs:
                    par["weight_u"].value = (
                        spec.weight_u if spec.weight_u is not None else np.ones(self.n_users)
                    )
            if self.qos_active:
                par["qos"].value = np.asarray([spec.qos_gbps[k] for k in self.qos_active])


_CACHE: dict[tuple, _Compiled] = {}


def _compiled_for(spec: SubproblemSpec) -> _Compiled:
    key = spec.structure_key()
    if key not in _CACHE:
        _CACHE[key] = _Compiled(key)
    return _CACHE[key]


def clear_cache() -> None:
    _CACHE.clear()


def surrogate_rates(spec: SubproblemSpec, w: np.ndarray | None, u: np.ndarray | None) -> tuple:
    """Numpy mirror of the surrogate per-user rates (Gbps) at a given point."""
    k = spec.n_users
    rate_t = np.zeros(k)
    rate_u = np.zeros(k)
    if spec.n_tbs and w is not None:
        mu = spec.mu if spec.mu is not None else np.zeros(k, complex)
        s = (spec.eff_thz * np.conj(mu)[None, :]).conj().T @ w
        st = (spec.eff_thz_abs * np.conj(mu)[None, :]).conj().T @ w
        off = np.sum(np.abs(s) ** 2, axis=1) - np.abs(np.diag(s)) ** 2
        gam = 2.0 * np.real(np.diag(s)) - (off + np.sum(np.abs(st) ** 2, axis=1) + np.abs(mu) ** 2)
        rate_t = spec.bw_t_gbps / LN2 * np.log(np.maximum(1.0 + gam, 1e-300))
    if spec.n_ubs and u is not None:
        ze = spec.zeta if spec.zeta is not None else np.zeros(k, complex)
        s = (spec.eff_umb * np.conj(ze)[None, :]).conj().T @ u
        off = np.sum(np.abs(s) ** 2, axis=1) - np.abs(np.diag(s)) ** 2
        gam = 2.0 * np.real(np.diag(s)) - (off + np.abs(ze) ** 2)
        rate_u = spec.bw_u_gbps / LN2 * np.log(np.maximum(1.0 + gam, 1e-300))
    return rate_t, rate_u


def _feasibility(spec: SubproblemSpec, sol: "SubproblemSolution") -> dict:
    res: dict[str, float] = {}
    viol = 0.0

    def track(name: str, value: float) -> None:
        nonlocal viol
        res[name] = float(value)
        viol = max(viol, value)

    if spec.n_tbs and sol.w is not None:
        wsq = np.add.reduceat(np.abs(sol.w) ** 2, np.arange(0, spec.n_tbs * spec.n_rf_t, spec.n_rf_t), axis=0)
        track("cone_t", np.max(wsq - sol.alpha * sol.p, initial=0.0))
        track("budget_t", np.max(np.sum(sol.p, axis=1) - 1.0, initial=0.0))
        track("cap_t", np.max(sol.p - sol.alpha, initial=0.0))
        ub = spec.alpha_ub if spec.alpha_ub is not None else np.ones_like(sol.alpha)
        lb = spec.alpha_lb if spec.alpha_lb is not None else np.zeros_like(sol.alpha)
        track("box_t", max(np.max(sol.alpha - ub, initial=0.0), np.max(lb - sol.alpha, initial=0.0)))
        if spec.cluster_t is not None:
            track("cluster_t", np.max(np.sum(sol.alpha, axis=0) - spec.cluster_t, initial=0.0))
    if spec.n_ubs and sol.u is not None:
        usq = np.add.reduceat(np.abs(sol.u) ** 2, np.arange(0, spec.n_ubs * spec.n_rf_u, spec.n_rf_u), axis=0)
        track("cone_u", np.max(usq - sol.beta * sol.delta, initial=0.0))
        track("budget_u", np.max(np.sum(sol.delta, axis=1) - 1.0, initial=0.0))
        track("cap_u", np.max(sol.delta - sol.beta, initial=0.0))
        ub = spec.beta_ub if spec.beta_ub is not None else np.ones_like(sol.beta)
        lb = spec.beta_lb if spec.beta_lb is not None else np.zeros_like(sol.beta)
        track("box_u", max(np.max(sol.beta - ub, initial=0.0), np.max(lb - sol.beta, initial=0.0)))
        if spec.cluster_u is not None:
            track("cluster_u", np.max(np.sum(sol.beta, axis=0) - spec.cluster_u, initial=0.0))
    if spec.retain_min is not None:
        kept = np.zeros(spec.n_users)
        if spec.n_tbs and sol.alpha is not None:
            kept += np.sum(spec.prev_thz * sol.alpha, axis=0)
        if spec.n_ubs and sol.beta is not None:
            kept += np.sum(spec.prev_umb * sol.beta, axis=0)
        track("retain", np.max(spec.retain_min - kept, initial=0.0))
    if spec.qos_gbps is not None and np.any(spec.qos_gbps > 0) and spec.mode == SUM_RATE:
        rate_t, rate_u = surrogate_rates(spec, sol.w, sol.u)
        total = rate_t + rate_u
        active = spec.qos_gbps > 0
        rel = (spec.qos_gbps[active] - total[active]) / np.maximum(spec.qos_gbps[active], 1e-12)
        track("qos", np.max(rel, initial=0.0))
    res["max_violation"] = viol
    return res


def solve(
    spec: SubproblemSpec,
    warm_start: SubproblemSolution | None = None,
    opts: SolveOptions | None = None,
) -> SubproblemSolution:
    """Solve one inner problem; raises Infeasible / MaxIterations."""
    opts = opts or SolveOptions()
    compiled = _compiled_for(spec)
    compiled.assign(spec)
    prob = compiled.problem
    solver = opts.solver or "CLARABEL"
    conclusive = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE, cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)
    status = None
    try:
        # warm_start=False: the cached-solver update path rejects parameter
        # values whose sparsity pattern changed since the previous solve
        prob.solve(solver=solver, warm_start=False, max_iter=opts.max_iters)
        status = prob.status
    except Exception:
        status = None
    if status not in conclusive:
        try:
            prob.solve(solver="SCS", warm_start=False, max_iters=max(opts.max_iters, 20000), eps=1e-7)
            status = prob.status
        except Exception as exc:
            raise MaxIterations(f"conic solvers failed: {exc}") from exc
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise Infeasible("inner problem has no feasible point")
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise MaxIterations(f"solver returned status {status!r}")

    def val(name: str):
        v = compiled.var.get(name)
        return None if v is None else np.asarray(v.value)

    sol = SubproblemSolution(
        w=val("w"),
        u=val("u"),
        p=val("p"),
        delta=val("delta"),
        alpha=val("alpha"),
        beta=val("beta"),
        objective=float(prob.value) + spec.obj_const,
        status="optimal" if status == cp.OPTIMAL else "inaccurate",
    )
    sol.residuals = _feasibility(spec, sol)
    if warm_start is not None:
        sol.residuals["warm_start_objective_gap"] = sol.objective - warm_start.objective
    if opts.debug_trace:
        with open(opts.debug_trace, "a") as handle:
            handle.write(
                f"{spec.mode} status={sol.status} objective={sol.objective:.9g} "
                f"max_violation={sol.residuals['max_violation']:.3e}\n"
            )
    return sol
