"""Finite-dimensional quasi-Banach function spaces over atomic measures.

Four kinds: weighted Lebesgue, Lorentz via the decreasing rearrangement,
Orlicz with a tabulated Young function and the Luxemburg norm, and one level
of iteration (outer space of inner norms).  All norms are vectorized over
leading axes, so a (cells x atoms) array is normed per cell in one call.

The associate (Kothe dual) norm and the product-space norm have analytic
paths for Lebesgue spaces and seeded coordinate-search paths otherwise; the
searches are deterministic per seed and are cross-checked against dense-grid
oracles in the test suite at low dimension.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Sequence

import numpy as np

__all__ = [
    "AtomicMeasure",
    "Space",
    "LebesgueSpace",
    "LorentzSpace",
    "OrliczSpace",
    "IteratedSpace",
    "ConcavifiedSpace",
    "concavify",
    "associate_norm",
    "product_norm",
    "product_space",
    "space_to_json",
    "space_from_json",
    "phi_table_to_csv",
    "phi_table_from_csv",
]


class AtomicMeasure:
    """Finitely many atoms with strictly positive weights."""

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("measure needs a 1-d, nonempty weight vector")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("atom weights must be finite and strictly positive")
        self.weights = w
        self.n = w.size

    @classmethod
    def unit(cls, n: int) -> "AtomicMeasure":
        return cls(np.ones(n))

    def __eq__(self, other) -> bool:
        return isinstance(other, AtomicMeasure) and np.array_equal(
            self.weights, other.weights
        )

    def __repr__(self) -> str:
        return f"AtomicMeasure({self.weights.tolist()})"


def _as_scalar(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


class Space:
    """Base class: a quasi-normed function lattice over finitely many atoms."""

    kind = "abstract"

    def __init__(self, measure: AtomicMeasure, convexity: float):
        self.measure = measure
        self.convexity = float(convexity)

    @property
    def atom_shape(self) -> tuple[int, ...]:
        return (self.measure.n,)

    @property
    def mu(self) -> np.ndarray:
        """Weights in atom_shape layout (product weights when iterated)."""
        return self.measure.weights

    def _atoms(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        k = len(self.atom_shape)
        if xi.shape[xi.ndim - k:] != self.atom_shape:
            raise ValueError(
                f"vector shape {xi.shape} does not end with atoms {self.atom_shape}"
            )
        return np.abs(xi)

    def norm(self, xi):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError


class LebesgueSpace(Space):
    """Weighted l^t; t = inf is the plain sup norm."""

    kind = "lebesgue"

    def __init__(self, t: float, measure: AtomicMeasure, convexity: float | None = None):
        if not (t > 0):
            raise ValueError(f"Lebesgue exponent must be positive, got {t}")
        # l^t is p-convex with constant one exactly for p <= t
        super().__init__(measure, t if convexity is None else convexity)
        self.t = float(t)

    def norm(self, xi):
        a = self._atoms(xi)
        if math.isinf(self.t):
            return _as_scalar(a.max(axis=-1))
        w = self.measure.weights
        return _as_scalar((a**self.t @ w) ** (1.0 / self.t))

    def params(self) -> dict:
        return {"t": self.t}

    def __repr__(self) -> str:
        return f"LebesgueSpace(t={self.t}, n={self.measure.n})"


class LorentzSpace(Space):
    """Lorentz quasi-norm via the decreasing rearrangement with atom weights.

    ||xi|| = ( sum_j xi_(j)^u * (t/u) * (S_j^(u/t) - S_(j-1)^(u/t)) )^(1/u)
    with S_j the cumulative weight of the j largest values; u = inf gives
    max_j xi_(j) S_j^(1/t).  LorentzSpace(t, t) coincides with l^t.

    For u <= t the functional is min(t, u)-convex with constant one; for
    u > t it is only a quasi-norm, so the declared convexity defaults to
    t/u < 1 as a flag (associate_norm then refuses the space).
    """

    kind = "lorentz"

    def __init__(
        self,
        t: float,
        u: float,
        measure: AtomicMeasure,
        convexity: float | None = None,
    ):
        if not (t > 0) or math.isinf(t):
            raise ValueError(f"primary Lorentz exponent must be finite positive, got {t}")
        if not (u > 0):
            raise ValueError(f"secondary Lorentz exponent must be positive, got {u}")
        if convexity is None:
            convexity = min(t, u) if u <= t else (0.0 if math.isinf(u) else t / u)
        super().__init__(measure, convexity)
        self.t = float(t)
        self.u = float(u)

    def norm(self, xi):
        a = self._atoms(xi)
        order = np.argsort(-a, axis=-1, kind="stable")
        vals = np.take_along_axis(a, order, axis=-1)
        w = np.broadcast_to(self.measure.weights, a.shape)
        w = np.take_along_axis(w, order, axis=-1)
        cum = np.cumsum(w, axis=-1)
        if math.isinf(self.u):
            return _as_scalar((vals * cum ** (1.0 / self.t)).max(axis=-1))
        prev = cum - w
        ex = self.u / self.t
        blocks = (self.t / self.u) * (cum**ex - prev**ex)
        return _as_scalar((vals**self.u * blocks).sum(axis=-1) ** (1.0 / self.u))

    def params(self) -> dict:
        return {"t": self.t, "u": self.u}

    def __repr__(self) -> str:
        return f"LorentzSpace(t={self.t}, u={self.u}, n={self.measure.n})"


class OrliczSpace(Space):
    """Luxemburg norm for a tabulated monotone Young function.

    The table is interpolated log-linearly (piecewise power law) and extended
    beyond its range with the boundary slopes, so pure powers are represented
    exactly.  The norm inf { lam > 0 : sum Phi(|xi_i|/lam) mu_i <= 1 } is
    found by bisection.
    """

    kind = "orlicz"

    def __init__(self, table, measure: AtomicMeasure, convexity: float | None = None):
        tab = np.asarray(table, dtype=float)
        if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2:
            raise ValueError("Phi table must be a (k >= 2) x 2 array")
        if np.any(tab <= 0):
            raise ValueError("Phi table entries must be strictly positive")
        if np.any(np.diff(tab[:, 0]) <= 0) or np.any(np.diff(tab[:, 1]) <= 0):
            raise ValueError("Phi table must be strictly increasing in both columns")
        self.table = tab
        self._lx = np.log(tab[:, 0])
        self._ly = np.log(tab[:, 1])
        slopes = np.diff(self._ly) / np.diff(self._lx)
        self._slope_lo = slopes[0]
        self._slope_hi = slopes[-1]
        if convexity is None:
            # the Luxemburg functional of a locally-power Phi is 1-convex
            # only when every segment exponent is at least one
            convexity = float(min(1.0, slopes.min()))
        super().__init__(measure, convexity)

    @classmethod
    def from_power(
        cls,
        exponent: float,
        measure: AtomicMeasure,
        scale: float = 1.0,
        convexity: float | None = None,
    ) -> "OrliczSpace":
        """Exact table for Phi(t) = scale * t^exponent."""
        ts = np.logspace(-6, 6, 25)
        return cls(np.column_stack([ts, scale * ts**exponent]), measure, convexity)

    def _loglog(self, logs_in, knots_x, knots_y, slope_lo, slope_hi):
        out = np.interp(logs_in, knots_x, knots_y)
        lo = logs_in < knots_x[0]
        hi = logs_in > knots_x[-1]
        out = np.where(lo, knots_y[0] + slope_lo * (logs_in - knots_x[0]), out)
        out = np.where(hi, knots_y[-1] + slope_hi * (logs_in - knots_x[-1]), out)
        return out

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(
            self._loglog(np.log(x[pos]), self._lx, self._ly, self._slope_lo, self._slope_hi)
        )
        return out

    def phi_inv(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(
            self._loglog(np.log(y[pos]), self._ly, self._lx, 1 / self._slope_lo, 1 / self._slope_hi)
        )
        return out

    def norm(self, xi):
        a = self._atoms(xi)
        lead = a.shape[:-1]
        rows = a.reshape(-1, a.shape[-1])
        w = self.measure.weights
        out = np.zeros(rows.shape[0])
        active = rows.max(axis=1) > 0

        def excess(lam, sub):
            # sum Phi(a / lam) mu - 1, vectorized over rows
            ratio = sub / lam[:, None]
            return self.phi(ratio) @ w - 1.0

        sub = rows[active]
        if sub.size:
            # bracket the unit level set by doubling outward from the sup
            hi = sub.max(axis=1).copy()
            for _ in range(100):
                mask = excess(hi, sub) > 0
                if not mask.any():
                    break
                hi[mask] *= 2.0
            lo = sub.max(axis=1).copy()
            for _ in range(100):
                mask = excess(lo, sub) <= 0
                if not mask.any():
                    break
                lo[mask] *= 0.5
            for _ in range(120):
                mid = np.sqrt(lo * hi)
                high = excess(mid, sub) > 0
                lo = np.where(high, mid, lo)
                hi = np.where(high, hi, mid)
            out[active] = hi
        return _as_scalar(out.reshape(lead))

    def params(self) -> dict:
        return {"table": self.table.tolist()}

    def __repr__(self) -> str:
        return f"OrliczSpace({len(self.table)} knots, n={self.measure.n})"


class IteratedSpace(Space):
    """Outer space of inner norms; atoms are (outer, inner) pairs."""

    kind = "iterated"

    def __init__(self, outer: Space, inner: Space, convexity: float | None = None):
        if isinstance(outer, IteratedSpace) or isinstance(inner, IteratedSpace):
            raise ValueError("iterated spaces nest exactly one level")
        if convexity is None:
            convexity = min(outer.convexity, inner.convexity)
        super().__init__(outer.measure, convexity)
        self.outer = outer
        self.inner = inner

    @property
    def atom_shape(self) -> tuple[int, ...]:
        return (self.outer.measure.n, self.inner.measure.n)

    @property
    def mu(self) -> np.ndarray:
        return np.multiply.outer(self.outer.measure.weights, self.inner.measure.weights)

    def norm(self, xi):
        a = self._atoms(xi)
        return self.outer.norm(self.inner.norm(a))

    def params(self) -> dict:
        return {}

    def __repr__(self) -> str:
        return f"IteratedSpace({self.outer!r}, {self.inner!r})"


class ConcavifiedSpace(Space):
    """Norm ||xi||_(X^p) = || |xi|^(1/p) ||_X^p for kinds with no closed form."""

    kind = "concavified"

    def __init__(self, base: Space, p: float):
        if not (p > 0):
            raise ValueError(f"concavification exponent must be positive, got {p}")
        super().__init__(base.measure, base.convexity / p)
        self.base = base
        self.p = float(p)

    @property
    def atom_shape(self) -> tuple[int, ...]:
        return self.base.atom_shape

    @property
    def mu(self) -> np.ndarray:
        return self.base.mu

    def norm(self, xi):
        a = self._atoms(xi)
        return np.asarray(self.base.norm(a ** (1.0 / self.p))) ** self.p

    def params(self) -> dict:
        return {"p": self.p}


def concavify(space: Space, p: float) -> Space:
    """The p-concavification X^p; Lebesgue and Lorentz stay in closed form."""
    if not (p > 0):
        raise ValueError(f"concavification exponent must be positive, got {p}")
    if p == 1:
        return space
    if isinstance(space, LebesgueSpace):
        return LebesgueSpace(space.t / p, space.measure)
    if isinstance(space, LorentzSpace):
        return LorentzSpace(space.t / p, space.u / p, space.measure)
    return ConcavifiedSpace(space, p)


# ---------------------------------------------------------------------------
# associate (Kothe dual) norm
# ---------------------------------------------------------------------------

def _dual_objective(space: Space, xiw_flat: np.ndarray):
    shape = space.atom_shape

    def value(rows: np.ndarray) -> np.ndarray:
        # rows: (batch, N) nonnegative directions
        nrm = np.asarray(space.norm(rows.reshape(rows.shape[0], *shape)), dtype=float)
        pair = rows @ xiw_flat
        out = np.zeros(rows.shape[0])
        ok = nrm > 0
        out[ok] = pair[ok] / nrm[ok]
        return out

    return value


def associate_norm(
    space: Space,
    xi,
    seed: int = 0,
    restarts: int = 64,
    return_argmax: bool = False,
):
    """sup { sum |xi eta| mu : ||eta||_X <= 1 }, the Kothe dual norm.

    Analytic for Lebesgue spaces (dual exponent), otherwise coordinate ascent
    over the positive unit sphere with seeded random restarts.  Requires a
    1-convex space (declared hint) so that the associate functional is a norm.
    """
    if space.convexity < 1.0 - 1e-12:
        raise ValueError(
            "associate norm requires a 1-convex space; "
            f"declared convexity is {space.convexity}"
        )
    xi = np.abs(np.asarray(xi, dtype=float))
    if xi.shape != space.atom_shape:
        raise ValueError(f"expected a single vector of shape {space.atom_shape}")

    if isinstance(space, LebesgueSpace) and not return_argmax:
        t = space.t
        if math.isinf(t):
            tdual = 1.0
        elif t == 1.0:
            tdual = math.inf
        else:
            tdual = t / (t - 1.0)
        return LebesgueSpace(tdual, space.measure).norm(xi)

    xiw = (xi * space.mu).ravel()
    n = xiw.size
    value = _dual_objective(space, xiw)
    support = np.flatnonzero(xiw > 0)
    if support.size == 0:
        eta = np.ones(n)
        eta /= space.norm(eta.reshape(space.atom_shape))
        return (0.0, eta.reshape(space.atom_shape)) if return_argmax else 0.0

    rng = np.random.default_rng(seed)
    inits = [np.ones(n), xiw.copy(), np.sqrt(xiw)]
    inits += [np.where(xiw > 0, rng.lognormal(size=n), 0.0) for _ in range(max(0, restarts - len(inits)))]

    factors = np.exp(np.linspace(-3.0, 3.0, 25))
    best_val, best_eta = 0.0, inits[0]
    for eta0 in inits[:restarts]:
        eta = eta0.copy()
        cur = value(eta[None, :])[0]
        for _ in range(40):
            improved = False
            for i in support:
                base = eta[i] if eta[i] > 0 else (eta.max() or 1.0) * 1e-3
                cands = np.concatenate([[0.0], base * factors])
                batch = np.repeat(eta[None, :], cands.size, axis=0)
                batch[:, i] = cands
                vals = value(batch)
                j = int(np.argmax(vals))
                if vals[j] > cur * (1 + 1e-12):
                    cur = vals[j]
                    eta[i] = cands[j]
                    improved = True
            if not improved:
                break
        if cur > best_val:
            best_val, best_eta = cur, eta.copy()

    if return_argmax:
        unit = best_eta / space.norm(best_eta.reshape(space.atom_shape))
        return float(best_val), unit.reshape(space.atom_shape)
    return float(best_val)


# ---------------------------------------------------------------------------
# product spaces
# ---------------------------------------------------------------------------

def _same_measure(spaces: Sequence[Space]) -> None:
    first = spaces[0]
    for sp in spaces[1:]:
        if sp.atom_shape != first.atom_shape or not np.allclose(sp.mu, first.mu):
            raise ValueError("product factors must share one atomic measure")


def _nominal_exponent(space: Space) -> float:
    if isinstance(space, LebesgueSpace):
        return space.t
    if isinstance(space, LorentzSpace):
        return space.t
    if isinstance(space, OrliczSpace):
        return float((space._ly[-1] - space._ly[0]) / (space._lx[-1] - space._lx[0]))
    if isinstance(space, ConcavifiedSpace):
        return _nominal_exponent(space.base) / space.p
    return 1.0


def product_norm(spaces: Sequence[Space], xi, seed: int = 0, restarts: int = 8):
    """inf { prod ||xi_j||_(X_j) : |xi| = prod xi_j }, the product-space norm.

    Exact for Lebesgue tuples (power factorization, 1/t = sum 1/t_j);
    otherwise alternating coordinate descent over factorizations, seeded by
    power splits and, for Orlicz tuples, by the inverse-Young factorization.
    """
    spaces = list(spaces)
    if not spaces:
        raise ValueError("need at least one factor space")
    _same_measure(spaces)
    if len(spaces) == 1:
        return spaces[0].norm(xi)

    if all(isinstance(sp, LebesgueSpace) for sp in spaces):
        inv_t = sum(0.0 if math.isinf(sp.t) else 1.0 / sp.t for sp in spaces)
        t = math.inf if inv_t == 0 else 1.0 / inv_t
        return LebesgueSpace(t, spaces[0].measure).norm(xi)

    xi = np.abs(np.asarray(xi, dtype=float))
    if xi.shape != spaces[0].atom_shape:
        raise ValueError(f"expected a single vector of shape {spaces[0].atom_shape}")
    flat = xi.ravel()
    pos = np.flatnonzero(flat > 0)
    if pos.size == 0:
        return 0.0
    m = len(spaces)
    shape = spaces[0].atom_shape

    def norms_off(gs_fixed, skip):
        acc = 1.0
        for k, g in enumerate(gs_fixed):
            if k != skip and k != m - 1:
                acc *= float(spaces[k].norm(g.reshape(shape)))
        return acc

    def last_factor(gs):
        g = flat.copy()
        for k in range(m - 1):
            g[pos] = g[pos] / gs[k][pos]
        g[flat == 0] = 0.0
        return g

    def total(gs):
        glast = last_factor(gs)
        acc = float(spaces[m - 1].norm(glast.reshape(shape)))
        for k in range(m - 1):
            acc *= float(spaces[k].norm(gs[k].reshape(shape)))
        return acc

    # structured initial splits
    inv = [1.0 / max(_nominal_exponent(sp), 1e-9) for sp in spaces]
    theta_nominal = np.array(inv) / sum(inv)
    splits = [theta_nominal, np.full(m, 1.0 / m)]
    if all(isinstance(sp, OrliczSpace) for sp in spaces):
        splits.append(_orlicz_split(spaces, flat, pos))
    rng = np.random.default_rng(seed)
    while len(splits) < restarts:
        splits.append(rng.dirichlet(np.ones(m)))

    factors = np.exp(np.linspace(-2.0, 2.0, 21))
    best = math.inf
    for split in splits[:restarts]:
        if isinstance(split, list):  # precomputed factor list
            gs = [g.copy() for g in split[: m - 1]]
        else:
            gs = [
                np.where(flat > 0, flat ** float(split[k]), 0.0)
                for k in range(m - 1)
            ]
        cur = total(gs)
        for _ in range(30):
            improved = False
            for k in range(m - 1):
                off = norms_off(gs, k)
                glast = last_factor(gs)
                for i in pos:
                    cands = gs[k][i] * factors
                    batch = np.repeat(gs[k][None, :], cands.size, axis=0)
                    batch[:, i] = cands
                    nk = np.asarray(spaces[k].norm(batch.reshape(-1, *shape)))
                    others = np.prod([gs[kk][i] for kk in range(m - 1) if kk != k])
                    lasts = np.repeat(glast[None, :], cands.size, axis=0)
                    lasts[:, i] = flat[i] / (cands * others)
                    nl = np.asarray(spaces[m - 1].norm(lasts.reshape(-1, *shape)))
                    vals = off * nk * nl
                    j = int(np.argmin(vals))
                    if vals[j] < cur * (1 - 1e-12):
                        cur = vals[j]
                        gs[k][i] = cands[j]
                        glast = last_factor(gs)
                        improved = True
            if not improved:
                break
        best = min(best, cur)
    return float(best)


def _orlicz_split(spaces: Sequence[Space], flat: np.ndarray, pos: np.ndarray):
    """Factor list from xi_j = Phi_j^{-1}(Phi(|xi|)), Phi^{-1} = prod Phi_j^{-1}."""
    m = len(spaces)
    # solve prod Phi_j^{-1}(y) = v per positive atom by bisection in log y
    vals = flat[pos]
    ylo = np.full(vals.shape, 1e-300)
    yhi = np.full(vals.shape, 1e300)

    def prod_inv(y):
        acc = np.ones_like(y)
        for sp in spaces:
            acc = acc * sp.phi_inv(y)
        return acc

    lo, hi = np.log(ylo), np.log(yhi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        too_big = prod_inv(np.exp(mid)) > vals
        hi = np.where(too_big, mid, hi)
        lo = np.where(too_big, lo, mid)
    y = np.exp(0.5 * (lo + hi))
    gs = []
    for sp in spaces[:-1]:
        g = np.zeros_like(flat)
        g[pos] = sp.phi_inv(y)
        gs.append(g)
    return gs


def product_space(spaces: Sequence[Space]) -> Space:
    """The product space as a Space object; closed form for Lebesgue tuples."""
    spaces = list(spaces)
    _same_measure(spaces)
    if len(spaces) == 1:
        return spaces[0]
    if all(isinstance(sp, LebesgueSpace) for sp in spaces):
        inv_t = sum(0.0 if math.isinf(sp.t) else 1.0 / sp.t for sp in spaces)
        t = math.inf if inv_t == 0 else 1.0 / inv_t
        return LebesgueSpace(t, spaces[0].measure)
    raise ValueError(
        "no closed-form product for these kinds; evaluate product_norm directly"
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def space_to_json(space: Space) -> str:
    return json.dumps(_space_payload(space))


def _space_payload(space: Space) -> dict:
    if isinstance(space, IteratedSpace):
        return {
            "kind": space.kind,
            "parameters": {
                "outer": _space_payload(space.outer),
                "inner": _space_payload(space.inner),
            },
            "atoms": space.outer.measure.weights.tolist(),
        }
    if isinstance(space, ConcavifiedSpace):
        return {
            "kind": space.kind,
            "parameters": {"p": space.p, "base": _space_payload(space.base)},
            "atoms": space.measure.weights.tolist(),
        }
    return {
        "kind": space.kind,
        "parameters": space.params(),
        "atoms": space.measure.weights.tolist(),
    }


def space_from_json(text: str) -> Space:
    return _space_from_payload(json.loads(text))


def _space_from_payload(obj: dict) -> Space:
    kind = obj["kind"]
    measure = AtomicMeasure(obj["atoms"])
    params = obj["parameters"]
    if kind == "lebesgue":
        return LebesgueSpace(params["t"], measure)
    if kind == "lorentz":
        return LorentzSpace(params["t"], params["u"], measure)
    if kind == "orlicz":
        return OrliczSpace(np.asarray(params["table"]), measure)
    if kind == "iterated":
        return IteratedSpace(
            _space_from_payload(params["outer"]), _space_from_payload(params["inner"])
        )
    if kind == "concavified":
        return ConcavifiedSpace(_space_from_payload(params["base"]), params["p"])
    raise ValueError(f"unknown space kind {kind!r}")


def phi_table_to_csv(table, path) -> None:
    tab = np.asarray(table, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "phi"])
        for t, p in tab:
            writer.writerow([repr(float(t)), repr(float(p))])


def phi_table_from_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["t", "phi"]:
            raise ValueError("expected header 't,phi'")
        for row in reader:
            rows.append((float(row[0]), float(row[1])))
    return np.asarray(rows)
