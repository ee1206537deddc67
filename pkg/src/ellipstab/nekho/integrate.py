"""Implicit-midpoint integration of polynomial Hamiltonians in real coordinates.

Coordinates are ``z = (x_1..x_n, y_1..y_n)`` with ``dx/dt = dH/dy``,
``dy/dt = -dH/dx`` and actions ``I_j = (x_j^2 + y_j^2) / 2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np

from ..errors import DomainError, StepSizeError
from ..poly import Polynomial

NEWTON_TOL = 1e-13
NEWTON_MAXIT = 50


def _flatten(parts):
    """Concatenate (exps, coefs) blocks into arrays plus offsets."""
    offs = [0]
    E, Cf = [], []
    for e, c in parts:
        E.append(e)
        Cf.append(c)
        offs.append(offs[-1] + len(c))
    d = parts[0][0].shape[1] if parts else 0
    E = np.concatenate(E).astype(np.int64) if E else np.zeros((0, d), np.int64)
    Cf = np.concatenate(Cf).astype(np.float64) if Cf else np.zeros(0)
    return E.reshape(-1, d), Cf, np.array(offs, dtype=np.int64)


def _deriv(e, c, j):
    mask = e[:, j] > 0
    e2 = e[mask].copy()
    c2 = c[mask] * e2[:, j]
    e2[:, j] -= 1
    return e2, c2


class CompiledHamiltonian:
    """Arrays describing H, its gradient and Hessian for the jitted kernels."""

    def __init__(self, H: Polynomial):
        if H.nvars % 2:
            raise DomainError("phase space dimension must be even")
        if not H.is_real(1e-12):
            raise DomainError("H must have real coefficients in real coordinates")
        Hr = H.real_part()
        items = Hr.sorted_items()
        d = H.nvars
        e = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, d)
        c = np.array([float(complex(v).real) for _, v in items], dtype=np.float64)
        self.nvars = d
        self.deg = max(1, Hr.degree)
        self.h = (e, c, np.array([0, len(c)], dtype=np.int64))
        grads = [_deriv(e, c, j) for j in range(d)]
        self.g = _flatten(grads)
        self.hs = _flatten([_deriv(ge, gc, k) for ge, gc in grads for k in range(d)])


@numba.njit(cache=True)
def _powers(z, deg):
    d = z.shape[0]
    P = np.ones((d, deg + 1))
    for v in range(d):
        for k in range(1, deg + 1):
            P[v, k] = P[v, k - 1] * z[v]
    return P


@numba.njit(cache=True)
def _eval_blocks(E, C, offs, P, out):
    nb = offs.shape[0] - 1
    d = E.shape[1]
    for b in range(nb):
        s = 0.0
        for t in range(offs[b], offs[b + 1]):
            m = C[t]
            for v in range(d):
                k = E[t, v]
                if k:
                    m *= P[v, k]
            s += m
        out[b] = s


@numba.njit(cache=True)
def _energy(E, C, offs, z, deg):
    out = np.empty(1)
    _eval_blocks(E, C, offs, _powers(z, deg), out)
    return out[0]


@numba.njit(cache=True)
def _run(z0, dt, steps, stride, escape, gE, gC, gO, hE, hC, hO, HE, HC, HO, deg, tol, maxit):
    d = z0.shape[0]
    n = d // 2
    nsamp = steps // stride + 2
    Z = np.empty((nsamp, d))
    Ts = np.empty(nsamp)
    Z[0] = z0
    Ts[0] = 0.0
    ns = 1
    z = z0.copy()
    grad = np.empty(d)
    hess = np.empty(d * d)
    A = np.empty((d, d))
    rhs = np.empty(d)
    status = 0
    worst_it = 0
    last_res = 0.0
    escaped_at = -1
    k = 0
    for k in range(1, steps + 1):
        # explicit Euler predictor
        _eval_blocks(gE, gC, gO, _powers(z, deg), grad)
        w = z.copy()
        for i in range(n):
            w[i] = z[i] + dt * grad[n + i]
            w[n + i] = z[n + i] - dt * grad[i]
        it = 0
        while True:
            mid = 0.5 * (z + w)
            P = _powers(mid, deg)
            _eval_blocks(gE, gC, gO, P, grad)
            res = 0.0
            for i in range(n):
                rhs[i] = w[i] - z[i] - dt * grad[n + i]
                rhs[n + i] = w[n + i] - z[n + i] + dt * grad[i]
            for i in range(d):
                a = abs(rhs[i])
                if a > res:
                    res = a
            scale = 1.0
            for i in range(d):
                if abs(w[i]) > scale:
                    scale = abs(w[i])
            if res <= tol * scale:
                break
            if it >= maxit:
                status = 1
                last_res = res
                break
            _eval_blocks(hE, hC, hO, P, hess)
            # Jacobian of the residual: I - dt/2 J Hess
            for i in range(d):
                for j in range(d):
                    A[i, j] = 1.0 if i == j else 0.0
            for i in range(n):
                for j in range(d):
                    A[i, j] -= 0.5 * dt * hess[(n + i) * d + j]
                    A[n + i, j] += 0.5 * dt * hess[i * d + j]
            w = w - np.linalg.solve(A, rhs)
            it += 1
        if it > worst_it:
            worst_it = it
        if status:
            break
        z = w
        r2 = 0.0
        for i in range(d):
            r2 += z[i] * z[i]
        if escape > 0 and math.sqrt(r2) >= escape:
            escaped_at = k
            Z[ns] = z
            Ts[ns] = k * dt
            ns += 1
            break
        if k % stride == 0:
            Z[ns] = z
            Ts[ns] = k * dt
            ns += 1
    if status == 0 and escaped_at < 0 and steps % stride != 0:
        Z[ns] = z
        Ts[ns] = steps * dt
        ns += 1
    return Z[:ns], Ts[:ns], status, k, worst_it, last_res, escaped_at


def actions(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z)
    n = Z.shape[-1] // 2
    return 0.5 * (Z[..., :n] ** 2 + Z[..., n:] ** 2)


@dataclass
class Trajectory:
    times: np.ndarray
    z: np.ndarray
    actions: np.ndarray
    energy: np.ndarray
    dt: float
    steps: int
    integrator: str = "implicit_midpoint"
    escape_radius: float | None = None
    escape_time: float | None = None
    newton_max_iterations: int = 0

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def energy_drift(self) -> float:
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / max(abs(e0), 1e-300))

    def summary(self) -> dict:
        return {"integrator": self.integrator, "dt": self.dt, "steps": self.steps,
                "samples": int(len(self.times)), "horizon": self.horizon,
                "escape_radius": self.escape_radius, "escape_time": self.escape_time,
                "relative_energy_drift": self.energy_drift,
                "newton_max_iterations": self.newton_max_iterations}

    def write_csv(self, path) -> None:
        n = self.actions.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"I{j + 1}" for j in range(n)] + ["energy"])
            for t, I, e in zip(self.times, self.actions, self.energy):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in I] + [repr(float(e))])


def integrate(H, z0, dt: float, steps: int, *, stride: int = 1, escape: float | None = None,
              tol: float = NEWTON_TOL, maxit: int = NEWTON_MAXIT) -> Trajectory:
    """Fixed-step implicit midpoint rule with Newton inner iterations.

    Samples every ``stride`` steps (and the last step).  With ``escape`` the run
    stops at the first step with ``|z| >= escape``.
    """
    ch = H if isinstance(H, CompiledHamiltonian) else CompiledHamiltonian(H)
    z0 = np.ascontiguousarray(np.asarray(z0, dtype=float))
    if z0.shape != (ch.nvars,):
        raise DomainError(f"z0 must have {ch.nvars} components")
    if not dt > 0:
        raise DomainError("dt must be positive")
    steps, stride = int(steps), max(1, int(stride))
    if steps < 0:
        raise DomainError("steps must be non-negative")
    Z, T, status, k, worst, res, esc = _run(z0, float(dt), steps, stride, float(escape or 0.0),
                                            *ch.g, *ch.hs, *ch.h, ch.deg, float(tol), int(maxit))
    if status:
        raise StepSizeError("Newton iteration did not converge", step=int(k), time=float(k * dt),
                            residual=float(res), dt=float(dt), iterations=int(maxit))
    E = np.array([_energy(*ch.h, z, ch.deg) for z in Z])
    return Trajectory(T, Z, actions(Z), E, float(dt), int(k if esc >= 0 else steps),
                      escape_radius=escape, escape_time=float(esc * dt) if esc >= 0 else None,
                      newton_max_iterations=int(worst))


@dataclass
class DriftReport:
    max_drift: float
    escape_time: float | None
    horizon: float
    escaped: bool

    @property
    def time_lower_bound(self) -> float:
        """Escape time if observed, else the horizon (a lower bound only)."""
        return self.escape_time if self.escaped else self.horizon

    def to_json_dict(self) -> dict:
        return {"max_drift": self.max_drift, "escape_time": self.escape_time, "horizon": self.horizon,
                "escaped": self.escaped, "time_lower_bound": self.time_lower_bound,
                "time_is_lower_bound_only": not self.escaped}


def measure_drift(traj: Trajectory, escape: float | None = None) -> DriftReport:
    """Sup over samples of ``max_j |I_j(z(t)) - I_j(z0)|`` and the first sample with ``|z| >= escape``."""
    if len(traj.times) == 0:
        raise DomainError("empty trajectory")
    I = actions(traj.z)
    drift = float(np.max(np.abs(I - I[0])))
    esc_t = traj.escape_time
    if escape is not None:
        hit = np.nonzero(np.linalg.norm(traj.z, axis=1) >= escape)[0]
        esc_t = float(traj.times[hit[0]]) if hit.size else None
    return DriftReport(drift, esc_t, traj.horizon, esc_t is not None)
