"""Full AC power flow: polar Newton-Raphson with generator reactive-limit enforcement."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .netmodel import Network, is_connected

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 30
MAX_SWITCH_CYCLES = 5


class PowerFlowError(RuntimeError):
    """The power-flow equations cannot be set up or factorised (e.g. an islanded bus)."""


@dataclass
class PowerFlowSolution:
    bus_ids: np.ndarray
    v_mag: np.ndarray
    v_ang: np.ndarray
    gen_ids: np.ndarray
    p_gen: np.ndarray  # MW
    q_gen: np.ndarray  # MVAr
    branch_ids: np.ndarray
    branch_flow_from: np.ndarray  # complex MVA
    branch_flow_to: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float
    q_limited: dict[int, str] = field(default_factory=dict)  # bus -> "max" | "min"

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)

    def bus_voltage(self, bus_id: int) -> tuple[float, float]:
        i = int(np.searchsorted(self.bus_ids, bus_id))
        if i >= len(self.bus_ids) or self.bus_ids[i] != bus_id:
            raise KeyError(f"unknown bus {bus_id}")
        return float(self.v_mag[i]), float(self.v_ang[i])

    @property
    def branch_mva(self) -> np.ndarray:
        """Loading magnitude per branch: larger of the two terminal MVA flows."""
        return np.maximum(np.abs(self.branch_flow_from), np.abs(self.branch_flow_to))


Start = Union[str, PowerFlowSolution]


# -- admittances -------------------------------------------------------------

@dataclass(frozen=True)
class _BranchModel:
    f: np.ndarray
    t: np.ndarray
    yff: np.ndarray
    yft: np.ndarray
    ytf: np.ndarray
    ytt: np.ndarray


def _branch_model(net: Network) -> _BranchModel:
    idx = net.bus_index
    brs = list(net.branches.values())
    n = len(brs)
    f = np.fromiter((idx[b.from_bus] for b in brs), dtype=np.int64, count=n)
    t = np.fromiter((idx[b.to_bus] for b in brs), dtype=np.int64, count=n)
    r = np.array([b.r for b in brs], dtype=float)
    x = np.array([b.x for b in brs], dtype=float)
    bc = np.array([b.b_charging for b in brs], dtype=float)
    tap = np.array([b.tap_ratio for b in brs], dtype=float)
    shift = np.array([b.phase_shift for b in brs], dtype=float)
    status = np.array([b.in_service for b in brs], dtype=float)
    ys = status / (r + 1j * x)
    ybc = status * 1j * bc / 2
    a = tap * np.exp(1j * shift)
    ytt = ys + ybc
    return _BranchModel(
        f=f, t=t,
        yff=ytt / (a * np.conj(a)),
        yft=-ys / np.conj(a),
        ytf=-ys / a,
        ytt=ytt,
    )


def make_ybus(net: Network) -> sp.csr_matrix:
    bm = _branch_model(net)
    nb = len(net.buses)
    ysh = np.array([b.shunt_g + 1j * b.shunt_b for b in net.buses.values()])
    rows = np.concatenate([bm.f, bm.f, bm.t, bm.t, np.arange(nb)])
    cols = np.concatenate([bm.f, bm.t, bm.f, bm.t, np.arange(nb)])
    vals = np.concatenate([bm.yff, bm.yft, bm.ytf, bm.ytt, ysh])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nb, nb))


def branch_flows(net: Network, sol: PowerFlowSolution) -> tuple[np.ndarray, np.ndarray]:
    """Complex MVA flows at the from and to ends of every branch (zero when open)."""
    if len(sol.v_mag) != len(net.buses) or not np.array_equal(sol.bus_ids, net.bus_ids):
        raise ValueError("solution does not cover the network's buses")
    return _flows(net, _branch_model(net), sol.v_mag * np.exp(1j * sol.v_ang))


def _flows(net: Network, bm: _BranchModel, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vf, vt = v[bm.f], v[bm.t]
    s_from = vf * np.conj(bm.yff * vf + bm.yft * vt) * net.base_mva
    s_to = vt * np.conj(bm.ytf * vf + bm.ytt * vt) * net.base_mva
    return s_from, s_to


# -- Newton-Raphson ----------------------------------------------------------

def _jacobian_pattern(ybus, pvpq, pq):
    """Index maps placing dS/dVa and dS/dVm entries into the reduced Jacobian."""
    nb = ybus.shape[0]
    coo = ybus.tocoo()
    # bus-diagonal terms are kept as a separate block so every bus has one
    r = np.concatenate([coo.row, np.arange(nb)])
    c = np.concatenate([coo.col, np.arange(nb)])
    pa = np.full(nb, -1)
    pa[pvpq] = np.arange(len(pvpq))
    pm = np.full(nb, -1)
    pm[pq] = len(pvpq) + np.arange(len(pq))
    blocks = []
    for rows, cols in ((pa, pa), (pa, pm), (pm, pa), (pm, pm)):
        keep = (rows[r] >= 0) & (cols[c] >= 0)
        blocks.append((keep, rows[r[keep]], cols[c[keep]]))
    return coo, blocks


def _newton(ybus, sbus, v, pv, pq, tol, max_iter):
    pvpq = np.concatenate([pv, pq])
    npvpq = len(pvpq)
    n = npvpq + len(pq)
    va, vm = np.angle(v), np.abs(v)
    coo, blocks = _jacobian_pattern(ybus, pvpq, pq)
    yr, yc, y = coo.row, coo.col, coo.data
    jrows = np.concatenate([b[1] for b in blocks])
    jcols = np.concatenate([b[2] for b in blocks])

    def mismatch(v):
        mis = v * np.conj(ybus @ v) - sbus
        return np.concatenate([mis[pvpq].real, mis[pq].imag])

    F = mismatch(v)
    norm = np.max(np.abs(F)) if F.size else 0.0
    it = 0
    while norm > tol and it < max_iter:
        it += 1
        ibus = ybus @ v
        vn = v / np.abs(v)
        # dS/dVa = j diag(V) conj(diag(I) - Y diag(V)); dS/dVm = diag(V) conj(Y diag(Vn)) + diag(conj I) Vn
        dva = np.concatenate([-1j * v[yr] * np.conj(y * v[yc]), 1j * v * np.conj(ibus)])
        dvm = np.concatenate([v[yr] * np.conj(y * vn[yc]), np.conj(ibus) * vn])
        vals = np.concatenate([
            dva[blocks[0][0]].real, dvm[blocks[1][0]].real,
            dva[blocks[2][0]].imag, dvm[blocks[3][0]].imag,
        ])
        jac = sp.csc_matrix((vals, (jrows, jcols)), shape=(n, n))
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                dx = spsolve(jac, -F)
            except (MatrixRankWarning, RuntimeError) as exc:
                raise PowerFlowError(f"singular Jacobian: {exc}") from exc
        if not np.all(np.isfinite(dx)):
            break
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:]
        v = vm * np.exp(1j * va)
        F = mismatch(v)
        norm = np.max(np.abs(F)) if F.size else 0.0
        if not np.isfinite(norm):
            break
    return v, it, float(norm), bool(norm <= tol)


def solve(
    net: Network,
    start: Start = "flat",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    enforce_q_limits: bool = True,
) -> PowerFlowSolution:
    """Solve the AC power flow of a connected network.

    ``start`` is ``"flat"`` or a previous solution of a network with the same
    buses (warm start; its reactive-limit state is inherited). Divergence is
    reported through ``converged=False``; a network that cannot be solved at
    all (bus without a path to the slack, singular Jacobian) raises
    :class:`PowerFlowError`.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not is_connected(net):
        raise PowerFlowError("network is not connected; every bus needs a path to the slack")

    base = net.base_mva
    nb = len(net.buses)
    idx = net.bus_index
    buses = list(net.buses.values())
    gens = [g for g in net.generators.values() if g.in_service]

    pd = np.array([b.p_load for b in buses]) / base
    qd = np.array([b.q_load for b in buses]) / base
    pg = np.zeros(nb)
    qg_fixed = np.zeros(nb)
    qmax = np.zeros(nb)
    qmin = np.zeros(nb)
    vset = np.array([b.v_mag for b in buses], dtype=float)
    has_gen = np.zeros(nb, dtype=bool)
    for g in gens:
        i = idx[g.bus]
        pg[i] += g.p_out / base
        qg_fixed[i] += g.q_out / base
        qmax[i] += g.q_max / base
        qmin[i] += g.q_min / base
        if not has_gen[i]:
            vset[i] = g.v_set
        has_gen[i] = True

    slack = idx[net.slack_bus]
    kinds = [b.kind for b in buses]
    gen_pv = [i for i, k in enumerate(kinds) if k == "pv" and has_gen[i]]

    limited: dict[int, str] = {}
    if isinstance(start, PowerFlowSolution):
        if not np.array_equal(start.bus_ids, net.bus_ids):
            raise ValueError("warm start solution has different buses")
        v = start.v_mag * np.exp(1j * start.v_ang)
        if enforce_q_limits:
            limited = {idx[b]: side for b, side in start.q_limited.items()
                       if b in idx and idx[b] in gen_pv}
    elif start == "flat":
        vm0 = np.ones(nb)
        vm0[has_gen] = vset[has_gen]
        vm0[slack] = vset[slack]
        v = vm0 * np.exp(1j * buses[slack].v_ang) * np.ones(nb)
    else:
        raise ValueError(f"unknown start {start!r}")

    ybus = make_ybus(net)
    total_iter = 0
    cycles = 0
    converged = False
    norm = np.inf
    while True:
        pv = np.array(sorted(i for i in gen_pv if i not in limited), dtype=np.int64)
        pq = np.array(
            sorted(i for i in range(nb) if i != slack and (i not in gen_pv or i in limited)),
            dtype=np.int64,
        )
        qg = np.where(np.isin(np.arange(nb), gen_pv), 0.0, qg_fixed)
        for i, side in limited.items():
            qg[i] = qmax[i] if side == "max" else qmin[i]
        sbus = (pg - pd) + 1j * (qg - qd)
        vm = np.abs(v)
        vm[pv] = vset[pv]
        vm[slack] = vset[slack]
        v = vm * np.exp(1j * np.angle(v))

        v, it, norm, converged = _newton(ybus, sbus, v, pv, pq, tol, max_iter - total_iter)
        total_iter += it
        if not converged or not enforce_q_limits:
            break

        q_inj = (v * np.conj(ybus @ v)).imag
        changes: dict[int, str | None] = {}
        for i in pv:
            qi = q_inj[i] + qd[i]
            if qi > qmax[i] + tol:
                changes[int(i)] = "max"
            elif qi < qmin[i] - tol:
                changes[int(i)] = "min"
        for i, side in limited.items():
            if (side == "max" and abs(v[i]) > vset[i] + tol) or (
                side == "min" and abs(v[i]) < vset[i] - tol
            ):
                changes[i] = None
        if not changes:
            break
        cycles += 1
        if cycles > MAX_SWITCH_CYCLES:
            converged = False
            break
        for i, side in changes.items():
            if side is None:
                limited.pop(i, None)
            else:
                limited[i] = side

    return _package(net, ybus, v, pd, qd, gens, slack, limited, converged, total_iter, norm)


def _package(net, ybus, v, pd, qd, gens, slack, limited, converged, iterations, norm):
    base = net.base_mva
    idx = net.bus_index
    s_inj = v * np.conj(ybus @ v)
    p_bus_gen = (s_inj.real + pd) * base
    q_bus_gen = (s_inj.imag + qd) * base

    gen_index = {g: k for k, g in enumerate(net.generators)}
    p_gen = np.zeros(len(net.generators))
    q_gen = np.zeros(len(net.generators))
    by_bus: dict[int, list] = {}
    for g in gens:
        by_bus.setdefault(idx[g.bus], []).append(g)
    pv_like = {i for i, b in enumerate(net.buses.values()) if b.kind in ("pv", "slack")}
    for i, group in by_bus.items():
        k = [gen_index[g.id] for g in group]
        if i == slack:
            extra = p_bus_gen[i] - sum(g.p_out for g in group)
            weight = np.array([max(g.p_max, 0.0) for g in group])
            weight = weight / weight.sum() if weight.sum() > 0 else np.full(len(group), 1 / len(group))
            p_gen[k] = [g.p_out + extra * w for g, w in zip(group, weight)]
        else:
            p_gen[k] = [g.p_out for g in group]
        if i in pv_like:
            lo = np.array([g.q_min for g in group])
            span = np.array([g.q_max - g.q_min for g in group])
            if span.sum() > 0:
                q_gen[k] = lo + (q_bus_gen[i] - lo.sum()) * span / span.sum()
            else:
                q_gen[k] = q_bus_gen[i] / len(group)
        else:
            q_gen[k] = [g.q_out for g in group]

    s_from, s_to = _flows(net, _branch_model(net), v)
    bus_ids = net.bus_ids
    return PowerFlowSolution(
        bus_ids=bus_ids.copy(),
        v_mag=np.abs(v),
        v_ang=np.angle(v),
        gen_ids=net.gen_ids.copy(),
        p_gen=p_gen,
        q_gen=q_gen,
        branch_ids=net.branch_ids.copy(),
        branch_flow_from=s_from,
        branch_flow_to=s_to,
        converged=converged,
        iterations=iterations,
        max_mismatch=norm,
        q_limited={int(bus_ids[i]): side for i, side in sorted(limited.items())},
    )
