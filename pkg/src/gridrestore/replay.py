"""Replay a fixed restoration schedule through per-period AC OPF.

Each period is a continuous load-shedding AC optimal power flow: the
energization statuses from the plan are constants, de-energized lines
and their flows are removed from the problem entirely (so zero flow
holds exactly, not numerically), and buses in islands without an
energized source are fixed at V = 0 with full shed before any solver
runs. Live islands are solved independently with one angle reference
each; the lower voltage bound is soft, charged to the objective.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize as sopt
import scipy.sparse as sp

from .errors import GridRestoreError
from .model import Network
from .rop import RestorationPlan, component_key
from .scenarios import EffectiveCase

DEFAULT_PENALTY_WEIGHT = 1.0
DEFAULT_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class Island:
    buses: tuple[int, ...]
    lines: tuple[int, ...]
    generators: tuple[int, ...]
    demands: tuple[int, ...]
    live: bool
    reference: int


@dataclass
class AcOpfProblem:
    """One period of the implementation problem, statuses fixed."""

    case: EffectiveCase
    z_bar: dict[str, int]
    period: int
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT

    energized_bus_ids: frozenset[int] = field(init=False)
    energized_line_ids: frozenset[int] = field(init=False)
    energized_gen_ids: frozenset[int] = field(init=False)
    energized_demand_ids: frozenset[int] = field(init=False)
    islands: tuple[Island, ...] = field(init=False)

    def __post_init__(self):
        net = self.case.network
        self.energized_bus_ids = frozenset(
            b.id
            for b in net.buses
            if not b.damaged or self.z_bar.get(component_key("bus", b.id), 0)
        )
        self.energized_line_ids = frozenset(
            l.id
            for l in net.lines
            if (not l.damaged or self.z_bar.get(component_key("line", l.id), 0))
            and l.from_bus in self.energized_bus_ids
            and l.to_bus in self.energized_bus_ids
        )
        self.energized_gen_ids = frozenset(
            g.id
            for g in net.generators
            if (not g.damaged or self.z_bar.get(component_key("gen", g.id), 0))
            and g.bus in self.energized_bus_ids
        )
        self.energized_demand_ids = frozenset(
            d.id
            for d in net.demands
            if (not d.damaged or self.z_bar.get(component_key("demand", d.id), 0))
            and d.bus in self.energized_bus_ids
        )
        self.islands = _split_islands(net, self)


def _split_islands(net: Network, p: AcOpfProblem) -> tuple[Island, ...]:
    adj: dict[int, list[tuple[int, int]]] = {b: [] for b in p.energized_bus_ids}
    for l in net.lines:
        if l.id in p.energized_line_ids:
            adj[l.from_bus].append((l.to_bus, l.id))
            adj[l.to_bus].append((l.from_bus, l.id))
    seen: set[int] = set()
    islands = []
    ref_bus = net.reference_bus.id
    for start in sorted(p.energized_bus_ids):
        if start in seen:
            continue
        stack, members, lines = [start], {start}, set()
        while stack:
            u = stack.pop()
            for v, lid in adj[u]:
                lines.add(lid)
                if v not in members:
                    members.add(v)
                    stack.append(v)
        seen |= members
        gens = tuple(
            g.id
            for g in net.generators
            if g.id in p.energized_gen_ids and g.bus in members
        )
        demands = tuple(
            d.id
            for d in net.demands
            if d.id in p.energized_demand_ids and d.bus in members
        )
        reference = ref_bus if ref_bus in members else min(members)
        islands.append(
            Island(
                buses=tuple(sorted(members)),
                lines=tuple(sorted(lines)),
                generators=gens,
                demands=demands,
                live=bool(gens),
                reference=reference,
            )
        )
    return tuple(islands)


@dataclass
class AcState:
    """Solution of one period: voltages, flows, dispatch and shed."""

    v: dict[int, float]
    theta: dict[int, float]
    v_violation: dict[int, float]
    served: dict[int, float]
    p_gen: dict[int, float]
    q_gen: dict[int, float]
    p_flow_fr: dict[int, float]
    p_flow_to: dict[int, float]
    q_flow_fr: dict[int, float]
    q_flow_to: dict[int, float]
    objective: float
    converged: bool
    max_residual: float
    message: str = ""

    def to_dict(self) -> dict:
        def fmt(d):
            return {str(k): float(v) for k, v in sorted(d.items())}

        return {
            "v": fmt(self.v),
            "theta": fmt(self.theta),
            "v_violation": fmt(self.v_violation),
            "served": fmt(self.served),
            "p_gen": fmt(self.p_gen),
            "q_gen": fmt(self.q_gen),
            "p_flow_fr": fmt(self.p_flow_fr),
            "p_flow_to": fmt(self.p_flow_to),
            "q_flow_fr": fmt(self.q_flow_fr),
            "q_flow_to": fmt(self.q_flow_to),
            "objective": self.objective,
            "converged": self.converged,
            "max_residual": self.max_residual,
        }


@dataclass
class RipResult:
    states: tuple[AcState, ...]
    demand_ids: tuple[int, ...]
    served_fraction: np.ndarray  # demands x periods
    served_mwh: float
    ens_mwh: float
    step_hours: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "periods": [s.to_dict() for s in self.states],
            "served_mwh": self.served_mwh,
            "ens_mwh": self.ens_mwh,
            "step_hours": self.step_hours,
            "converged": self.converged,
            "max_residual": max(s.max_residual for s in self.states),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    def write_served_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["demand_id"] + [f"t{t}" for t in range(len(self.states))])
            for i, did in enumerate(self.demand_ids):
                w.writerow([did] + [f"{v:.9f}" for v in self.served_fraction[i]])


# --- AC branch flow (pi model with ideal from-side tap) ---------------------


class _LineBlock:
    """Vectorized flows and first derivatives for a set of lines."""

    def __init__(self, lines, bus_index: dict[int, int]):
        self.ids = np.array([l.id for l in lines], dtype=np.int64)
        self.i = np.array([bus_index[l.from_bus] for l in lines], dtype=np.int64)
        self.j = np.array([bus_index[l.to_bus] for l in lines], dtype=np.int64)
        g = np.array([l.g for l in lines])
        bb = np.array([l.b for l in lines])
        g_fr = np.array([l.g_fr for l in lines])
        b_fr = np.array([l.b_fr for l in lines])
        g_to = np.array([l.g_to for l in lines])
        b_to = np.array([l.b_to for l in lines])
        tm2 = np.array([l.t_m**2 for l in lines])
        tr = np.array([l.t_r for l in lines])
        ti = np.array([l.t_i for l in lines])
        self.ap = (g + g_fr) / tm2
        self.cp = (-g * tr + bb * ti) / tm2
        self.sp = (-bb * tr - g * ti) / tm2
        self.a2p = (g + g_to) / tm2
        self.c2p = (-g * tr - bb * ti) / tm2
        self.s2p = (-bb * tr + g * ti) / tm2
        self.aq = -(bb + b_fr) / tm2
        self.cq = (bb * tr + g * ti) / tm2
        self.sq = (-g * tr + bb * ti) / tm2
        self.a2q = -(bb + b_to) / tm2
        self.c2q = (bb * tr - g * ti) / tm2
        self.s2q = (-g * tr - bb * ti) / tm2
        self.t_lim = np.array([l.thermal_limit for l in lines])
        self.a_min = np.array([l.angle_min for l in lines])
        self.a_max = np.array([l.angle_max for l in lines])

    def flows(self, v: np.ndarray, th: np.ndarray):
        vi, vj = v[self.i], v[self.j]
        d = th[self.i] - th[self.j]
        cos_d, sin_d = np.cos(d), np.sin(d)
        vv = vi * vj
        pfr = self.ap * vi**2 + vv * (self.cp * cos_d + self.sp * sin_d)
        qfr = self.aq * vi**2 + vv * (self.cq * cos_d + self.sq * sin_d)
        # to-side angle is -d; cos(-d) = cos d, sin(-d) = -sin d
        pto = self.a2p * vj**2 + vv * (self.c2p * cos_d - self.s2p * sin_d)
        qto = self.a2q * vj**2 + vv * (self.c2q * cos_d - self.s2q * sin_d)
        return pfr, pto, qfr, qto

    def flow_partials(self, v: np.ndarray, th: np.ndarray):
        """d(flow)/d(vi, vj, thi, thj) for the four directed quantities."""
        vi, vj = v[self.i], v[self.j]
        d = th[self.i] - th[self.j]
        cos_d, sin_d = np.cos(d), np.sin(d)
        out = {}
        kfr_p = self.cp * cos_d + self.sp * sin_d
        kfr_p_d = -self.cp * sin_d + self.sp * cos_d
        out["pfr"] = (
            2 * self.ap * vi + vj * kfr_p,
            vi * kfr_p,
            vi * vj * kfr_p_d,
            -vi * vj * kfr_p_d,
        )
        kfr_q = self.cq * cos_d + self.sq * sin_d
        kfr_q_d = -self.cq * sin_d + self.sq * cos_d
        out["qfr"] = (
            2 * self.aq * vi + vj * kfr_q,
            vi * kfr_q,
            vi * vj * kfr_q_d,
            -vi * vj * kfr_q_d,
        )
        kto_p = self.c2p * cos_d - self.s2p * sin_d
        kto_p_d = -self.c2p * sin_d - self.s2p * cos_d
        out["pto"] = (
            vj * kto_p,
            2 * self.a2p * vj + vi * kto_p,
            vi * vj * kto_p_d,
            -vi * vj * kto_p_d,
        )
        kto_q = self.c2q * cos_d - self.s2q * sin_d
        kto_q_d = -self.c2q * sin_d - self.s2q * cos_d
        out["qto"] = (
            vj * kto_q,
            2 * self.a2q * vj + vi * kto_q,
            vi * vj * kto_q_d,
            -vi * vj * kto_q_d,
        )
        return out


class _IslandNlp:
    """Load-shedding AC OPF over one live island."""

    def __init__(self, net: Network, island: Island, penalty: float):
        self.net = net
        self.island = island
        self.penalty = penalty
        self.buses = [net.bus_by_id[b] for b in island.buses]
        self.bus_index = {b: k for k, b in enumerate(island.buses)}
        self.lines = [net.line_by_id[l] for l in island.lines]
        self.gens = [net.generator_by_id[g] for g in island.generators]
        self.demands = [net.demand_by_id[d] for d in island.demands]
        self.block = _LineBlock(self.lines, self.bus_index) if self.lines else None

        nb, nl = len(self.buses), len(self.lines)
        nd, ng = len(self.demands), len(self.gens)
        self.nb, self.nl, self.nd, self.ng = nb, nl, nd, ng
        self.iv = np.arange(nb)
        self.ith = nb + np.arange(nb)
        self.ix = 2 * nb + np.arange(nd)
        self.ipg = 2 * nb + nd + np.arange(ng)
        self.iqg = 2 * nb + nd + ng + np.arange(ng)
        self.ivt = 2 * nb + nd + 2 * ng + np.arange(nb)
        self.n_var = 3 * nb + nd + 2 * ng

        self.pd = np.array([d.p for d in self.demands])
        self.qd = np.array([d.q for d in self.demands])
        self.v_min = np.array([b.v_min for b in self.buses])
        self.v_max = np.array([b.v_max for b in self.buses])

    def bounds(self) -> sopt.Bounds:
        lo = np.empty(self.n_var)
        hi = np.empty(self.n_var)
        lo[self.iv], hi[self.iv] = 0.0, self.v_max
        lo[self.ith], hi[self.ith] = -math.pi, math.pi
        ref = self.bus_index[self.island.reference]
        lo[self.ith[ref]] = hi[self.ith[ref]] = 0.0
        lo[self.ix], hi[self.ix] = 0.0, 1.0
        lo[self.ipg] = [g.p_min for g in self.gens]
        hi[self.ipg] = [g.p_max for g in self.gens]
        lo[self.iqg] = [g.q_min for g in self.gens]
        hi[self.iqg] = [g.q_max for g in self.gens]
        lo[self.ivt], hi[self.ivt] = 0.0, self.v_min
        return sopt.Bounds(lo, hi)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_var)
        c[self.ix] = -self.pd  # minimize the negative of served power
        c[self.ivt] = self.penalty
        return c

    def start_point(self) -> np.ndarray:
        u = np.zeros(self.n_var)
        u[self.iv] = 1.0
        total_load = float(self.pd.sum())
        cap = float(sum(g.p_max for g in self.gens))
        has_slack = any(g.p_min < 0 or g.kind == "substation" for g in self.gens)
        x0 = 1.0 if has_slack or total_load <= cap else (cap / total_load if total_load else 1.0)
        u[self.ix] = x0
        want_p = x0 * total_load
        want_q = x0 * float(self.qd.sum())
        for k, g in enumerate(self.gens):
            share = g.p_max / cap if cap > 0 else 0.0
            u[self.ipg[k]] = np.clip(want_p * share, g.p_min, g.p_max)
            u[self.iqg[k]] = np.clip(want_q * share, g.q_min, g.q_max)
        return u

    # -- balance equalities ---------------------------------------------
    def balance(self, u: np.ndarray) -> np.ndarray:
        v, th = u[self.iv], u[self.ith]
        out = np.zeros(2 * self.nb)
        for k, g in enumerate(self.gens):
            bi = self.bus_index[g.bus]
            out[bi] += u[self.ipg[k]]
            out[self.nb + bi] += u[self.iqg[k]]
        for k, d in enumerate(self.demands):
            bi = self.bus_index[d.bus]
            out[bi] -= u[self.ix[k]] * d.p
            out[self.nb + bi] -= u[self.ix[k]] * d.q
        if self.block is not None:
            pfr, pto, qfr, qto = self.block.flows(v, th)
            np.subtract.at(out, self.block.i, pfr)
            np.subtract.at(out, self.block.j, pto)
            np.subtract.at(out, self.nb + self.block.i, qfr)
            np.subtract.at(out, self.nb + self.block.j, qto)
        return out

    def balance_jac(self, u: np.ndarray) -> np.ndarray:
        v, th = u[self.iv], u[self.ith]
        J = np.zeros((2 * self.nb, self.n_var))
        for k, g in enumerate(self.gens):
            bi = self.bus_index[g.bus]
            J[bi, self.ipg[k]] = 1.0
            J[self.nb + bi, self.iqg[k]] = 1.0
        for k, d in enumerate(self.demands):
            bi = self.bus_index[d.bus]
            J[bi, self.ix[k]] = -d.p
            J[self.nb + bi, self.ix[k]] = -d.q
        if self.block is not None:
            parts = self.block.flow_partials(v, th)
            bi, bj = self.block.i, self.block.j
            for name, row_base, at in (
                ("pfr", 0, bi),
                ("pto", 0, bj),
                ("qfr", self.nb, bi),
                ("qto", self.nb, bj),
            ):
                dvi, dvj, dthi, dthj = parts[name]
                rows = row_base + at
                np.subtract.at(J, (rows, self.iv[bi]), dvi)
                np.subtract.at(J, (rows, self.iv[bj]), dvj)
                np.subtract.at(J, (rows, self.ith[bi]), dthi)
                np.subtract.at(J, (rows, self.ith[bj]), dthj)
        return J

    # -- thermal inequalities (squared apparent power) -------------------
    def thermal(self, u: np.ndarray) -> np.ndarray:
        pfr, pto, qfr, qto = self.block.flows(u[self.iv], u[self.ith])
        return np.concatenate(
            [pfr**2 + qfr**2 - self.block.t_lim**2, pto**2 + qto**2 - self.block.t_lim**2]
        )

    def thermal_jac(self, u: np.ndarray) -> np.ndarray:
        v, th = u[self.iv], u[self.ith]
        pfr, pto, qfr, qto = self.block.flows(v, th)
        parts = self.block.flow_partials(v, th)
        nl = self.nl
        J = np.zeros((2 * nl, self.n_var))
        bi, bj = self.block.i, self.block.j
        rows_fr = np.arange(nl)
        rows_to = nl + rows_fr
        for rows, p, q, pn, qn in (
            (rows_fr, pfr, qfr, "pfr", "qfr"),
            (rows_to, pto, qto, "pto", "qto"),
        ):
            dp = parts[pn]
            dq = parts[qn]
            for off, cols in ((0, self.iv[bi]), (1, self.iv[bj]), (2, self.ith[bi]), (3, self.ith[bj])):
                np.add.at(J, (rows, cols), 2 * p * dp[off] + 2 * q * dq[off])
        return J

    # -- linear pieces ----------------------------------------------------
    def linear_constraints(self) -> list:
        cons = []
        rows, cols, vals = [], [], []
        for k in range(self.nb):
            rows += [k, k]
            cols += [int(self.iv[k]), int(self.ivt[k])]
            vals += [1.0, 1.0]
        a_soft = sp.csr_matrix((vals, (rows, cols)), shape=(self.nb, self.n_var)).toarray()
        cons.append(sopt.LinearConstraint(a_soft, self.v_min, np.inf))
        if self.nl:
            rows, cols, vals = [], [], []
            for k in range(self.nl):
                rows += [k, k]
                cols += [int(self.ith[self.block.i[k]]), int(self.ith[self.block.j[k]])]
                vals += [1.0, -1.0]
            a_ang = sp.csr_matrix((vals, (rows, cols)), shape=(self.nl, self.n_var)).toarray()
            cons.append(
                sopt.LinearConstraint(a_ang, self.block.a_min, self.block.a_max)
            )
        return cons

    def violation(self, u: np.ndarray) -> float:
        viol = float(np.max(np.abs(self.balance(u)), initial=0.0))
        if self.nl:
            viol = max(viol, float(np.max(self.thermal(u), initial=0.0)))
            th = u[self.ith]
            diff = th[self.block.i] - th[self.block.j]
            viol = max(
                viol,
                float(np.max(diff - self.block.a_max, initial=0.0)),
                float(np.max(self.block.a_min - diff, initial=0.0)),
            )
        soft = self.v_min - u[self.iv] - u[self.ivt]
        return max(viol, float(np.max(soft, initial=0.0)))

    def solve(self, tol: float, x0: np.ndarray | None = None) -> np.ndarray:
        """SLSQP from a flat start; interior-point retry if residuals stall."""
        c = self.objective_vector()
        lb, hi = self.bounds().lb, self.bounds().ub
        best_u = None
        best_viol = np.inf

        def record(u):
            nonlocal best_u, best_viol
            u = np.clip(u, lb, hi)
            v = self.violation(u)
            if v < best_viol:
                best_u, best_viol = u, v
            return v

        starts = [self.start_point() if x0 is None else x0]
        for attempt, u0 in enumerate(starts):
            res = sopt.minimize(
                lambda z: float(c @ z),
                u0,
                jac=lambda z: c,
                bounds=list(zip(lb, hi)),
                constraints=self._slsqp_constraints(),
                method="SLSQP",
                options={"maxiter": 400, "ftol": 1e-12},
            )
            if record(res.x) <= tol:
                return best_u
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = sopt.minimize(
                lambda z: float(c @ z),
                best_u if best_u is not None else self.start_point(),
                jac=lambda z: c,
                hess=lambda z: np.zeros((self.n_var, self.n_var)),
                bounds=self.bounds(),
                constraints=self._trust_constraints(),
                method="trust-constr",
                options={"gtol": 1e-10, "xtol": 1e-12, "maxiter": 500, "verbose": 0},
            )
        if record(res.x) <= tol:
            return best_u
        # last resort: re-polish the best point with SLSQP
        res = sopt.minimize(
            lambda z: float(c @ z),
            best_u,
            jac=lambda z: c,
            bounds=list(zip(lb, hi)),
            constraints=self._slsqp_constraints(),
            method="SLSQP",
            options={"maxiter": 800, "ftol": 1e-14},
        )
        record(res.x)
        return best_u

    def _trust_constraints(self) -> list:
        cons = [
            sopt.NonlinearConstraint(self.balance, 0.0, 0.0, jac=self.balance_jac)
        ]
        if self.nl:
            cons.append(
                sopt.NonlinearConstraint(
                    self.thermal, -np.inf, 0.0, jac=self.thermal_jac
                )
            )
        cons.extend(self.linear_constraints())
        return cons

    def _slsqp_constraints(self):
        cons = [
            {"type": "eq", "fun": self.balance, "jac": self.balance_jac},
        ]
        if self.nl:
            cons.append(
                {
                    "type": "ineq",
                    "fun": lambda z: -self.thermal(z),
                    "jac": lambda z: -self.thermal_jac(z),
                }
            )
        for lc in self.linear_constraints():
            A = lc.A.toarray() if sp.issparse(lc.A) else np.asarray(lc.A)
            lb = np.asarray(lc.lb, dtype=float) * np.ones(A.shape[0])
            ub = np.asarray(lc.ub, dtype=float) * np.ones(A.shape[0])
            fin_lb = np.isfinite(lb)
            fin_ub = np.isfinite(ub)
            if fin_lb.any():
                cons.append(
                    {
                        "type": "ineq",
                        "fun": lambda z, A=A[fin_lb], b=lb[fin_lb]: A @ z - b,
                        "jac": lambda z, A=A[fin_lb]: A,
                    }
                )
            if fin_ub.any():
                cons.append(
                    {
                        "type": "ineq",
                        "fun": lambda z, A=A[fin_ub], b=ub[fin_ub]: b - A @ z,
                        "jac": lambda z, A=A[fin_ub]: -A,
                    }
                )
        return cons


def build_rip_step(
    case: EffectiveCase,
    plan: RestorationPlan,
    t: int,
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT,
) -> AcOpfProblem:
    """Fix the plan's statuses at period t over the actual case."""
    net = case.network
    damaged_keys = set()
    for b in net.buses:
        if b.damaged:
            damaged_keys.add(component_key("bus", b.id))
    for l in net.lines:
        if l.damaged:
            damaged_keys.add(component_key("line", l.id))
    for g in net.generators:
        if g.damaged:
            damaged_keys.add(component_key("gen", g.id))
    for d in net.demands:
        if d.damaged:
            damaged_keys.add(component_key("demand", d.id))
    if damaged_keys != set(plan.energization):
        raise GridRestoreError(
            "plan's damaged components do not match the case damage set"
        )
    if not (0 <= t < plan.n_periods):
        raise GridRestoreError(f"period {t} outside plan horizon {plan.n_periods}")
    energized = plan.energized_at(t)
    z_bar = {k: (1 if k in energized else 0) for k in plan.energization}
    return AcOpfProblem(case=case, z_bar=z_bar, period=t, penalty_weight=penalty_weight)


def solve_ac_opf(problem: AcOpfProblem, tol: float = DEFAULT_RESIDUAL_TOL) -> AcState:
    """Solve every live island; dead islands are fixed structurally."""
    net = problem.case.network
    v: dict[int, float] = {}
    theta: dict[int, float] = {}
    vt: dict[int, float] = {}
    served: dict[int, float] = {}
    p_gen: dict[int, float] = {}
    q_gen: dict[int, float] = {}
    pfr: dict[int, float] = {}
    pto: dict[int, float] = {}
    qfr: dict[int, float] = {}
    qto: dict[int, float] = {}

    # structural zeros for everything de-energized or dead
    for b in net.buses:
        v[b.id] = 0.0
        theta[b.id] = 0.0
        vt[b.id] = 0.0 if (b.damaged and b.id not in problem.energized_bus_ids) else b.v_min
    for l in net.lines:
        pfr[l.id] = pto[l.id] = qfr[l.id] = qto[l.id] = 0.0
    for g in net.generators:
        p_gen[g.id] = q_gen[g.id] = 0.0
    for d in net.demands:
        served[d.id] = 0.0

    converged = True
    messages = []
    for island in problem.islands:
        if not island.live:
            continue
        nlp = _IslandNlp(net, island, problem.penalty_weight)
        u = nlp.solve(tol)
        for bid, k in nlp.bus_index.items():
            v[bid] = float(u[nlp.iv[k]])
            theta[bid] = float(u[nlp.ith[k]])
            vt[bid] = float(u[nlp.ivt[k]])
        for k, d in enumerate(nlp.demands):
            served[d.id] = float(np.clip(u[nlp.ix[k]], 0.0, 1.0))
        for k, g in enumerate(nlp.gens):
            p_gen[g.id] = float(u[nlp.ipg[k]])
            q_gen[g.id] = float(u[nlp.iqg[k]])
        if nlp.block is not None:
            f_p, f_pto, f_q, f_qto = nlp.block.flows(u[nlp.iv], u[nlp.ith])
            for idx, lid in enumerate(nlp.block.ids):
                pfr[int(lid)] = float(f_p[idx])
                pto[int(lid)] = float(f_pto[idx])
                qfr[int(lid)] = float(f_q[idx])
                qto[int(lid)] = float(f_qto[idx])

    objective = sum(served[d.id] * d.p for d in net.demands) - problem.penalty_weight * sum(
        vt.values()
    )
    state = AcState(
        v=v,
        theta=theta,
        v_violation=vt,
        served=served,
        p_gen=p_gen,
        q_gen=q_gen,
        p_flow_fr=pfr,
        p_flow_to=pto,
        q_flow_fr=qfr,
        q_flow_to=qto,
        objective=float(objective),
        converged=True,
        max_residual=0.0,
    )
    rep = residuals(state, problem)
    worst = max(rep.values()) if rep else 0.0
    state.max_residual = float(worst)
    state.converged = worst <= tol
    if not state.converged:
        state.message = f"constraint residual {worst:.3e} above tolerance {tol:.1e}"
    return state


def residuals(state: AcState, problem: AcOpfProblem) -> dict[str, float]:
    """Max absolute violation per constraint family, recomputed from scratch."""
    net = problem.case.network
    e_lines = problem.energized_line_ids
    v = np.array([state.v[b.id] for b in net.buses])
    th = np.array([state.theta[b.id] for b in net.buses])
    bus_index = {b.id: k for k, b in enumerate(net.buses)}
    live = {b for isl in problem.islands if isl.live for b in isl.buses}

    flow_err = 0.0
    thermal = 0.0
    angle = 0.0
    inj_p = np.zeros(len(net.buses))
    inj_q = np.zeros(len(net.buses))
    for l in net.lines:
        if l.id not in e_lines or l.from_bus not in live:
            # de-energized or dead-island line: flows must be exactly zero
            flow_err = max(
                flow_err,
                abs(state.p_flow_fr[l.id]),
                abs(state.p_flow_to[l.id]),
                abs(state.q_flow_fr[l.id]),
                abs(state.q_flow_to[l.id]),
            )
            continue
        blk = _LineBlock([l], {l.from_bus: 0, l.to_bus: 1})
        vv = np.array([v[bus_index[l.from_bus]], v[bus_index[l.to_bus]]])
        tt = np.array([th[bus_index[l.from_bus]], th[bus_index[l.to_bus]]])
        f = blk.flows(vv, tt)
        flow_err = max(
            flow_err,
            abs(f[0][0] - state.p_flow_fr[l.id]),
            abs(f[1][0] - state.p_flow_to[l.id]),
            abs(f[2][0] - state.q_flow_fr[l.id]),
            abs(f[3][0] - state.q_flow_to[l.id]),
        )
        s_fr = math.hypot(state.p_flow_fr[l.id], state.q_flow_fr[l.id])
        s_to = math.hypot(state.p_flow_to[l.id], state.q_flow_to[l.id])
        thermal = max(thermal, s_fr - l.thermal_limit, s_to - l.thermal_limit, 0.0)
        diff = th[bus_index[l.from_bus]] - th[bus_index[l.to_bus]]
        angle = max(angle, diff - l.angle_max, l.angle_min - diff, 0.0)
        inj_p[bus_index[l.from_bus]] -= state.p_flow_fr[l.id]
        inj_p[bus_index[l.to_bus]] -= state.p_flow_to[l.id]
        inj_q[bus_index[l.from_bus]] -= state.q_flow_fr[l.id]
        inj_q[bus_index[l.to_bus]] -= state.q_flow_to[l.id]

    for g in net.generators:
        if g.id in problem.energized_gen_ids and g.bus in live:
            inj_p[bus_index[g.bus]] += state.p_gen[g.id]
            inj_q[bus_index[g.bus]] += state.q_gen[g.id]

    balance_p = 0.0
    balance_q = 0.0
    voltage = 0.0
    # de-energized units and demands must sit at exactly zero
    shed = max(
        (
            max(abs(state.p_gen[g.id]), abs(state.q_gen[g.id]))
            for g in net.generators
            if g.id not in problem.energized_gen_ids
        ),
        default=0.0,
    )
    shed = max(
        shed,
        max(
            (
                abs(state.served[d.id])
                for d in net.demands
                if d.id not in problem.energized_demand_ids
            ),
            default=0.0,
        ),
    )
    for b in net.buses:
        k = bus_index[b.id]
        for d in net.demands_at.get(b.id, ()):
            inj_p[k] -= state.served[d.id] * d.p
            inj_q[k] -= state.served[d.id] * d.q
            shed = max(shed, -state.served[d.id], state.served[d.id] - 1.0, 0.0)
        if b.id in live:
            balance_p = max(balance_p, abs(inj_p[k]))
            balance_q = max(balance_q, abs(inj_q[k]))
            voltage = max(
                voltage,
                v[k] - b.v_max,
                (b.v_min - state.v_violation[b.id]) - v[k],
                0.0,
            )
        else:
            # dead or de-energized: no voltage, no service
            voltage = max(voltage, abs(v[k]))
            for d in net.demands_at.get(b.id, ()):
                shed = max(shed, abs(state.served[d.id]))
    return {
        "balance_p": float(balance_p),
        "balance_q": float(balance_q),
        "flow": float(flow_err),
        "voltage": float(voltage),
        "thermal": float(thermal),
        "angle": float(angle),
        "shed": float(shed),
    }


def simulate_plan(
    actual_case: EffectiveCase,
    plan: RestorationPlan,
    tol: float = DEFAULT_RESIDUAL_TOL,
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT,
    step_hours: float = 1.0,
) -> RipResult:
    """Solve every period of the horizon independently and aggregate."""
    net = actual_case.network
    states = []
    for t in range(plan.n_periods):
        problem = build_rip_step(actual_case, plan, t, penalty_weight=penalty_weight)
        states.append(solve_ac_opf(problem, tol=tol))
    demand_ids = tuple(d.id for d in net.demands)
    x = np.array(
        [[s.served[did] for s in states] for did in demand_ids], dtype=float
    )
    p = np.array([d.p for d in net.demands])
    base = net.base_mva
    served_mwh = float((x * p[:, None]).sum() * step_hours * base)
    total_mwh = float(p.sum() * len(states) * step_hours * base)
    return RipResult(
        states=tuple(states),
        demand_ids=demand_ids,
        served_fraction=x,
        served_mwh=served_mwh,
        ens_mwh=total_mwh - served_mwh,
        step_hours=step_hours,
        converged=all(s.converged for s in states),
    )
