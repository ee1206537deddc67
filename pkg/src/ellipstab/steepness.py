"""Sampling-based certification of steepness for polynomials in the actions.

For a polynomial ``P`` without constant and linear part, a subspace ``Lambda``
with orthonormal basis ``B`` and a radius ``xi``, the margin is

    max_{0 <= eta <= xi}  min_{|y| = eta}  |B^T grad P(B y)|.

A certificate is one-sided: "certified" means no violation was found at the
sampled subspaces and radii, not a proof.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import DimensionError, DomainError, HypothesisViolation
from .poly import NumericPolynomial, Polynomial

REFUTE_TOL = 1e-10
INCONCLUSIVE_C = 1e-8
ETA_PER_DECADE = 256
ANGLES = 4096
STARTS = 64


@dataclass(frozen=True)
class SubspaceSample:
    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim != 2 or B.shape[1] < 1 or B.shape[1] > B.shape[0]:
            raise DimensionError("basis must be an n x l matrix with 1 <= l <= n")
        if not np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12):
            raise DomainError("basis columns must be orthonormal")
        object.__setattr__(self, "basis", B)

    @property
    def l(self) -> int:
        return self.basis.shape[1]

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def from_vectors(cls, vectors) -> "SubspaceSample":
        A = np.atleast_2d(np.asarray(vectors, dtype=float))
        if A.shape[0] == 1 and A.ndim == 2 and A.shape[1] > 1:
            A = A.T
        Qm, _ = np.linalg.qr(A)
        return cls(Qm)

    @classmethod
    def haar(cls, n: int, l: int, rng) -> "SubspaceSample":
        G = rng.standard_normal((n, l))
        Qm, R = np.linalg.qr(G)
        return cls(Qm * np.sign(np.diag(R)))

    @classmethod
    def coordinate(cls, n: int, idx) -> "SubspaceSample":
        B = np.zeros((n, len(idx)))
        for c, i in enumerate(idx):
            B[i, c] = 1.0
        return cls(B)

    def to_list(self):
        return self.basis.tolist()


def _numeric(P) -> NumericPolynomial:
    if isinstance(P, NumericPolynomial):
        return P
    if not isinstance(P, Polynomial):
        raise TypeError("expected a Polynomial")
    if not P.degree_range(0, 1).is_zero:
        raise DomainError("P must have no constant or linear part")
    if not P.is_real(1e-12):
        raise DomainError("P must have real coefficients")
    return NumericPolynomial(P.real_part())


def eta_grid(xi_grid, per_decade: int = ETA_PER_DECADE) -> np.ndarray:
    xi = np.asarray(xi_grid, dtype=float)
    lo, hi = xi.min() / 10, xi.max()
    k = max(2, int(math.ceil(per_decade * math.log10(hi / lo))) + 1)
    return np.unique(np.concatenate([np.geomspace(lo, hi, k), xi]))


def _proj_grad_norm(num, B, Y):
    """|B^T grad P(B y)| for an array of points y of shape (..., l)."""
    X = Y @ B.T
    G = num.gradient(X) @ B
    return np.linalg.norm(G, axis=-1)


def _inner_min_l1(num, B, etas):
    Y = np.stack([etas, -etas], axis=-1)[..., None]  # (k, 2, 1)
    return _proj_grad_norm(num, B, Y).min(axis=-1)


def _inner_min_l2(num, B, etas, angles=ANGLES):
    th = np.linspace(0, 2 * np.pi, angles, endpoint=False)
    U = np.stack([np.cos(th), np.sin(th)], axis=-1)
    out = np.empty(len(etas))
    step = 2 * np.pi / angles
    chunk = max(1, 262144 // angles)
    for s in range(0, len(etas), chunk):
        e = etas[s:s + chunk]
        vals = _proj_grad_norm(num, B, e[:, None, None] * U[None])
        best = vals.argmin(axis=1)
        # local refinement around the best grid angle
        center = th[best]
        width = step
        for _ in range(3):
            loc = center[:, None] + np.linspace(-width, width, 33)[None]
            Ul = np.stack([np.cos(loc), np.sin(loc)], axis=-1)
            v2 = _proj_grad_norm(num, B, e[:, None, None] * Ul)
            k = v2.argmin(axis=1)
            center = loc[np.arange(len(e)), k]
            width /= 16
        out[s:s + chunk] = np.minimum(vals.min(axis=1), v2.min(axis=1))
    return out


def _inner_min_multistart(num, B, etas, starts=STARTS, iters=300, seed=0):
    """Batched Riemannian gradient descent of |B^T grad P|^2 on spheres of radius eta."""
    l = B.shape[1]
    rng = np.random.default_rng(seed)
    U0 = rng.standard_normal((starts, l))
    U0 /= np.linalg.norm(U0, axis=1, keepdims=True)
    out = np.empty(len(etas))
    for i, eta in enumerate(etas):
        Y = eta * U0.copy()
        lr = np.full(starts, 0.1)
        def phi(Y):
            X = Y @ B.T
            g = num.gradient(X) @ B
            return (g * g).sum(-1), g, X
        f, g, X = phi(Y)
        for _ in range(iters):
            H = num.hessian(X)
            Hr = np.einsum("ia,sij,jb->sab", B, H, B)
            grad = 2 * np.einsum("sab,sb->sa", Hr, g)
            # tangent projection
            radial = (grad * Y).sum(-1, keepdims=True) / (eta * eta)
            tg = grad - radial * Y
            tn = np.linalg.norm(tg, axis=1)
            if np.all(tn * eta <= 1e-10 * np.maximum(f, 1e-300) + 1e-300):
                break
            step = lr[:, None] * eta * tg / np.maximum(tn[:, None], 1e-300)
            Yn = Y - step
            Yn *= eta / np.linalg.norm(Yn, axis=1, keepdims=True)
            fn, gn, Xn = phi(Yn)
            better = fn < f
            Y = np.where(better[:, None], Yn, Y)
            f = np.where(better, fn, f)
            g = np.where(better[:, None], gn, g)
            X = np.where(better[:, None], Xn, X)
            lr = np.where(better, lr * 1.2, lr * 0.5)
            if np.all(lr < 1e-12):
                break
        out[i] = math.sqrt(max(f.min(), 0.0))
    return out


def inner_minimum(P, basis, etas) -> np.ndarray:
    """min over |y| = eta of |B^T grad P(B y)| for every eta."""
    num = _numeric(P)
    B = np.asarray(basis.basis if isinstance(basis, SubspaceSample) else basis, dtype=float)
    etas = np.asarray(etas, dtype=float)
    l = B.shape[1]
    if l == 1:
        return _inner_min_l1(num, B, etas)
    if l == 2:
        return _inner_min_l2(num, B, etas)
    return _inner_min_multistart(num, B, etas)


def margin_curve(P, Lambda: SubspaceSample, xi_grid, per_decade: int = ETA_PER_DECADE,
                 allow_full: bool = False) -> np.ndarray:
    """Margins at each ``xi`` in the increasing grid ``xi_grid``."""
    num = _numeric(P)
    if not isinstance(Lambda, SubspaceSample):
        Lambda = SubspaceSample(np.asarray(Lambda, dtype=float))
    if Lambda.n != num.nvars:
        raise DimensionError("subspace and polynomial dimensions differ")
    if not allow_full and not 1 <= Lambda.l <= num.nvars - 1:
        raise DomainError("subspace dimension must lie in [1, n-1]")
    xi = np.asarray(xi_grid, dtype=float)
    if xi.ndim != 1 or np.any(xi <= 0) or np.any(np.diff(xi) <= 0):
        raise DomainError("xi grid must be increasing and positive")
    etas = eta_grid(xi, per_decade)
    inner = inner_minimum(num, Lambda, etas)
    run = np.maximum.accumulate(inner)
    idx = np.searchsorted(etas, xi, side="right") - 1
    out = run[idx]
    assert np.all(np.diff(out) >= 0)
    return out


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass
class SubspaceEvidence:
    l: int
    basis: list
    margins: list
    source: str

    def to_json_dict(self):
        return {"l": self.l, "basis": self.basis, "margins": self.margins, "source": self.source}


@dataclass
class SteepnessCertificate:
    verdict: str
    kappa: float
    C: float
    delta: float
    p: tuple
    xi_grid: list
    evidence: list = field(default_factory=list)
    witness: dict | None = None
    radius: float | None = None
    note: str = "sampling-based: certified means no violation found at the sampled subspaces and radii"

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def to_json_dict(self) -> dict:
        return {"verdict": self.verdict, "kappa": self.kappa, "C": self.C, "delta": self.delta,
                "p": list(self.p), "xi_grid": list(self.xi_grid), "radius": self.radius,
                "witness": self.witness, "note": self.note,
                "evidence": [e.to_json_dict() for e in self.evidence]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "SteepnessCertificate":
        ev = [SubspaceEvidence(e["l"], e["basis"], e["margins"], e.get("source", "")) for e in d.get("evidence", [])]
        return cls(d["verdict"], float(d["kappa"]), float(d["C"]), float(d["delta"]), tuple(int(v) for v in d["p"]),
                   list(d.get("xi_grid", [])), ev, d.get("witness"), d.get("radius"),
                   d.get("note", cls.note))


def default_xi_grid(delta: float = 0.1, decades: float = 2.0, per_decade: int = 10) -> np.ndarray:
    return np.geomspace(delta * 10 ** (-decades), delta, int(decades * per_decade) + 1)


def _fit_index(xi, margins, m):
    """Smallest integer index consistent with the first-decade log-log slope."""
    xi = np.asarray(xi)
    M = np.asarray(margins)
    lo = xi[0]
    k = np.searchsorted(xi, lo * 10, side="right") - 1
    k = max(k, 1)
    if M[0] <= 0 or M[k] <= 0:
        return max(1, m - 1)
    slope = (math.log(M[k]) - math.log(M[0])) / (math.log(xi[k]) - math.log(lo))
    return int(min(max(math.ceil(slope - 0.1), 1), max(m - 1, 1)))


def _terminal(num, B, xi_max, per_decade):
    return float(np.max(inner_minimum(num, B, eta_grid([xi_max], per_decade))))


def _refine_worst(num, n, l, xi_max, start_basis, rng):
    """Search the Grassmannian for the subspace with the smallest terminal margin."""
    if n == 2 and l == 1:
        def obj(t):
            return _terminal(num, np.array([[math.cos(t)], [math.sin(t)]]), xi_max, 32)
        ts = np.linspace(0, np.pi, 721)
        vals = np.array([obj(t) for t in ts])
        i = int(vals.argmin())
        h = np.pi / 720
        res = minimize_scalar(obj, bounds=(ts[i] - h, ts[i] + h), method="bounded", options={"xatol": 1e-12})
        t0 = float(res.x)
        # second pass in a local offset so the tolerance is not limited by |t|
        res2 = minimize_scalar(lambda u: obj(t0 + u), bounds=(-1e-6, 1e-6), method="bounded",
                               options={"xatol": 1e-15})
        t = t0 + float(res2.x)
        return np.array([[math.cos(t)], [math.sin(t)]])

    def basis_of(v):
        Qm, _ = np.linalg.qr(v.reshape(n, l))
        return Qm

    def obj(v):
        return _terminal(num, basis_of(v), xi_max, 16)

    res = minimize(obj, np.asarray(start_basis).ravel(), method="Nelder-Mead",
                   options={"maxiter": 150 * n * l, "xatol": 1e-10, "fatol": 1e-14})
    return basis_of(res.x)


def _degree(P) -> int:
    return P.degree if isinstance(P, Polynomial) else int(P.exps.sum(axis=1).max())


def certify_steep(P, xi_grid=None, samples: int = 8, seed: int = 0, *, fixed_p: int | None = None,
                  refine: bool = True, per_decade: int = ETA_PER_DECADE) -> SteepnessCertificate:
    """Fit steepness indices and a constant for ``P`` over sampled subspaces.

    Every coordinate subspace and ``samples`` Haar-random subspaces are used in
    each dimension ``l = 1..n-1``, plus one subspace found by minimizing the
    margin at the largest radius.  With ``fixed_p`` the index is not fitted.
    """
    num = _numeric(P)
    n = num.nvars
    m = _degree(P)
    if n < 2:
        raise DomainError("steepness needs n >= 2")
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    rng = np.random.default_rng(seed)
    evidence = []
    ps = []
    Cs = []
    for l in range(1, n):
        subs = [(SubspaceSample.coordinate(n, c), "coordinate") for c in itertools.combinations(range(n), l)]
        subs += [(SubspaceSample.haar(n, l, rng), "haar") for _ in range(samples)]
        curves = []
        for S, src in subs:
            M = margin_curve(num, S, xi, per_decade)
            curves.append((S, src, M))
        if refine:
            worst = min(curves, key=lambda c: c[2][-1])
            B = _refine_worst(num, n, l, float(xi[-1]), worst[0].basis, rng)
            S = SubspaceSample(B)
            curves.append((S, "refined", margin_curve(num, S, xi, per_decade)))
        for S, src, M in curves:
            evidence.append(SubspaceEvidence(l, S.to_list(), M.tolist(), src))
            if np.all(M <= REFUTE_TOL):
                return SteepnessCertificate("refuted", 0.0, 0.0, float(xi[-1]), tuple(),
                                            xi.tolist(), evidence,
                                            {"l": l, "basis": S.to_list(), "radius": float(xi[-1]),
                                             "max_margin": float(M.max())})
        p_l = fixed_p if fixed_p is not None else max(_fit_index(xi, M, m) for _, _, M in curves)
        ps.append(int(p_l))
        Cs.append(min(float(np.min(M / xi ** p_l)) for _, _, M in curves))
    C = min(Cs)
    kappa = float(inner_minimum(num, np.eye(n), np.array([xi[-1]]))[0])
    verdict = "certified" if C >= INCONCLUSIVE_C else "inconclusive"
    return SteepnessCertificate(verdict, kappa, C, float(xi[-1]), tuple(ps), xi.tolist(), evidence)


def _perturbations(P: Polynomial, radius, count, rng):
    n = P.nvars
    m = P.degree
    monos = []
    for d in range(2, m + 1):
        for combo in itertools.combinations_with_replacement(range(n), d):
            e = [0] * n
            for v in combo:
                e[v] += 1
            monos.append(tuple(e))
    base = P.to_float()
    for _ in range(count):
        delta = Polynomial(n, {e: float(rng.uniform(-radius, radius)) for e in monos}, "float")
        yield base + delta


def _combine(certs, radius, xi):
    for c in certs:
        if c.verdict == "refuted":
            c.radius = radius
            return c
    first = certs[0]
    C = min(c.C for c in certs)
    delta = min(c.delta for c in certs)
    kappa = min(c.kappa for c in certs)
    verdict = "certified" if all(c.verdict == "certified" for c in certs) else "inconclusive"
    return SteepnessCertificate(verdict, kappa, C, delta, first.p, list(xi), first.evidence, None, radius)


def _run_family(fn, P, radius, perturbation_samples, seed, jobs):
    rng = np.random.default_rng(seed)
    members = [P] + list(_perturbations(P, radius, perturbation_samples, rng)) if radius > 0 else [P]
    if jobs and jobs > 1 and len(members) > 1:
        from joblib import Parallel, delayed
        return Parallel(n_jobs=jobs)(delayed(fn)(Q, seed + k) for k, Q in enumerate(members))
    return [fn(Q, seed + k) for k, Q in enumerate(members)]


def certify_stably_steep(P: Polynomial, radius: float, perturbation_samples: int = 8, xi_grid=None,
                         samples: int = 8, seed: int = 0, jobs: int = 1) -> SteepnessCertificate:
    """Certify ``P`` and random coefficient perturbations of size ``<= radius`` at exponent ``m-1``."""
    if radius < 0:
        raise DomainError("radius must be non-negative")
    m = P.degree
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)

    def one(Q, s):
        return certify_steep(Q, xi, samples, s, fixed_p=max(m - 1, 1))

    certs = _run_family(one, P, radius, perturbation_samples, seed, jobs)
    return _combine(certs, radius, xi)


def certify_expanding(Q, xi_grid=None, per_decade: int = ETA_PER_DECADE) -> SteepnessCertificate:
    num = _numeric(Q)
    l = num.nvars
    m = _degree(Q)
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    M = margin_curve(num, SubspaceSample(np.eye(l)), xi, per_decade, allow_full=True)
    ev = [SubspaceEvidence(l, np.eye(l).tolist(), M.tolist(), "full")]
    p = max(m - 1, 1)
    if np.all(M <= REFUTE_TOL):
        return SteepnessCertificate("refuted", 0.0, 0.0, float(xi[-1]), (p,), xi.tolist(), ev,
                                    {"l": l, "basis": np.eye(l).tolist(), "radius": float(xi[-1])})
    C = float(np.min(M / xi ** p))
    return SteepnessCertificate("certified" if C >= INCONCLUSIVE_C else "inconclusive", float(M[-1]), C,
                                float(xi[-1]), (p,), xi.tolist(), ev)


def certify_stably_expanding(Q: Polynomial, radius: float, samples: int = 8, xi_grid=None, seed: int = 0,
                             jobs: int = 1) -> SteepnessCertificate:
    """Full-sphere version of :func:`certify_stably_steep` (no subspace restriction)."""
    if radius < 0:
        raise DomainError("radius must be non-negative")
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    certs = _run_family(lambda R, s: certify_expanding(R, xi), Q, radius, samples, seed, jobs)
    return _combine(certs, radius, xi)


# ---------------------------------------------------------------------------
# Taylor transfer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaylorSteepness:
    mu: float
    kappa: float
    C: float
    delta: float
    index: int
    mu_star: float
    delta_star: float

    def to_json_dict(self):
        return dict(self.__dict__)


def derivative_bound(h: Polynomial, order: int, rho: float) -> float:
    """Bound on the Frobenius norm of the order-th derivative tensor of h(I) on |I_j| <= rho^2/2."""
    n = h.nvars
    rad = rho * rho / 2
    total = 0.0
    for idx in itertools.product(range(n), repeat=order):
        D = h
        for k in idx:
            D = D.diff(k)
        v = math.fsum(abs(c) * rad ** sum(e) for e, c in D.items())
        total += v * v
    return math.sqrt(total)


def jet_bound(h: Polynomial, p: int, rho: float) -> float:
    """max over 2 <= j <= p of the order-j derivative bound."""
    return max(derivative_bound(h, j, rho) for j in range(2, p + 1))


def taylor_steepness_constants(h_jet: Polynomial | None, varpi: float | None, M: float | None, p: int,
                               base: SteepnessCertificate, mu_tilde: float | None = None,
                               rho: float | None = None) -> TaylorSteepness:
    """Steepness constants of ``h`` from a certificate for its Taylor part of degrees 2..p-1.

    ``kappa = varpi/2``, ``C = C0/2``, ``delta* = C0 / (2 M (p-1)!)`` and
    ``mu* = min(mu_tilde, sqrt(varpi/M))``.  ``mu_tilde`` defaults to the
    perturbation radius stored on ``base``; with ``rho`` the radii are also
    capped by ``rho/2`` and ``rho^2/4``.
    """
    if base.verdict != "certified":
        raise HypothesisViolation("base polynomial is not certified steep", verdict=base.verdict)
    p = int(p)
    if p < 3:
        raise DomainError("p must be >= 3")
    if varpi is None or M is None:
        if h_jet is None:
            raise DomainError("need h_jet to derive varpi or M")
        if varpi is None:
            varpi = float(np.linalg.norm([abs(h_jet.coefficient(tuple(int(i == j) for i in range(h_jet.nvars))))
                                          for j in range(h_jet.nvars)]))
        if M is None:
            M = jet_bound(h_jet, p, rho if rho is not None else 1.0)
    if varpi <= 0 or M <= 0:
        raise DomainError("varpi and M must be positive")
    C0 = base.C
    mt = mu_tilde if mu_tilde is not None else base.radius
    if mt is None or mt <= 0:
        raise DomainError("no admissible perturbation radius for mu_tilde")
    delta_star = C0 / (2 * M * math.factorial(p - 1))
    mu_star = min(mt, math.sqrt(varpi / M))
    mu = mu_star if rho is None else min(rho / 2, mu_star)
    delta = delta_star if rho is None else min(rho * rho / 4, delta_star)
    return TaylorSteepness(mu, varpi / 2, C0 / 2, delta, p - 2, mu_star, delta_star)
