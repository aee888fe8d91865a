"""Muckenhoupt characteristics and the exponent arithmetic of weighted bounds.

Weights are strictly positive cell functions on a dyadic grid; the
characteristic [w]_{p,(r,s)} is an exact maximum over the finitely many cubes
of the supplied grids (one-third shifts optional).  The exponent helpers are
pure arithmetic in reciprocal space with the convention 1/inf = 0: the
weighted maximal exponent, the transfer exponent for sparse forms, the
extrapolation exponent together with its loss-free composition identity, the
two ell^t cases, and membership in the bilinear Hilbert transform region with
explicit theta witnesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dyadic import Cube, Grid, average, shifted_grids

__all__ = [
    "WeightVector",
    "ExponentTuple",
    "recip",
    "harmonic_exponent",
    "power_weight",
    "muckenhoupt_over_cubes",
    "muckenhoupt_constant",
    "stable_muckenhoupt_constant",
    "maximal_weighted_exponent",
    "maximal_report",
    "transfer_exponent",
    "transfer_report",
    "extrapolation_exponent",
    "extrapolation_report",
    "composed_transfer_exponent",
    "ellt_exponent",
    "ellt_report",
    "bht_region",
    "power_envelope",
]


def recip(x) -> float:
    """1/x for exponents, with 1/inf = 0."""
    x = float(x)
    if not x > 0:
        raise ValueError(f"exponent must be positive, got {x}")
    return 0.0 if math.isinf(x) else 1.0 / x


def harmonic_exponent(ps: Iterable[float]) -> float:
    """The aggregate p with 1/p = sum_j 1/p_j (inf when every p_j is inf)."""
    total = sum(recip(p) for p in ps)
    return math.inf if total == 0.0 else 1.0 / total


class WeightVector:
    """Strictly positive cell weights w_1, ..., w_m sharing one cell shape.

    The product weight w = prod_j w_j is formed exactly cellwise.
    """

    def __init__(self, parts: Sequence[np.ndarray]):
        arrays = [np.asarray(w, dtype=float) for w in parts]
        if not arrays:
            raise ValueError("need at least one weight component")
        for w in arrays:
            if w.shape != arrays[0].shape:
                raise ValueError("weight components must share one cell shape")
            if not np.all(w > 0):
                raise ValueError("weights must be strictly positive")
        self.parts = tuple(arrays)
        self.m = len(arrays)
        self.product = np.prod(np.stack(arrays), axis=0)


def power_weight(grid: Grid, a: float) -> np.ndarray:
    """Exact cell averages of x_1 -> x_1^a on the finest cells of ``grid``.

    The average over a cell [lo, hi) is (hi^(a+1) - lo^(a+1))/((a+1)(hi-lo)),
    so the discretized weight integrates exactly like the continuous one.
    Requires a > -1 (integrable at the origin); in d = 2 the weight depends
    on the first coordinate only.
    """
    a = float(a)
    if not a > -1:
        raise ValueError(f"power weight needs a > -1, got a={a}")
    n = 1 << grid.depth
    if a == 0:
        col = np.ones(n)
    else:
        edges = np.arange(n + 1) / n
        col = (edges[1:] ** (a + 1) - edges[:-1] ** (a + 1)) * n / (a + 1)
    if grid.d == 1:
        return col
    return np.repeat(col[:, None], n, axis=1)


def _dual_exponents(ps, rs, s, m):
    """Reciprocal-gap exponents e_j = 1/(1/r_j - 1/p_j) and e = 1/(1/p - 1/s).

    A vanishing gap turns the corresponding average into an essential
    supremum (the inf-average branch), which is the definition's limit case.
    """
    if not len(ps) == len(rs) == m:
        raise ValueError("ps, rs, and the weight tuple must share one length")
    ejs = []
    for j, (p, r) in enumerate(zip(ps, rs)):
        gap = recip(r) - recip(p)
        if gap < 0:
            raise ValueError(f"need r_{j + 1} <= p_{j + 1}, got r={r} > p={p}")
        ejs.append(math.inf if gap == 0.0 else 1.0 / gap)
    p = harmonic_exponent(ps)
    gap = recip(p) - recip(s)
    if gap < 0:
        raise ValueError(f"need p <= s, got p={p} > s={s}")
    return ejs, (math.inf if gap == 0.0 else 1.0 / gap)


def muckenhoupt_over_cubes(ws, ps, rs, s, grid: Grid, cubes: Iterable[Cube]) -> float:
    """max over ``cubes`` of prod_j <w_j^-1>_{e_j,Q} * <w>_{e,Q}, exact."""
    wv = ws if isinstance(ws, WeightVector) else WeightVector(ws)
    ejs, e0 = _dual_exponents(ps, rs, s, wv.m)
    winv = [1.0 / w for w in wv.parts]
    best = 0.0
    for cube in cubes:
        val = float(average(grid, wv.product, e0, cube))
        for wj, ej in zip(winv, ejs):
            val *= float(average(grid, wj, ej, cube))
        best = max(best, val)
    return best


def muckenhoupt_constant(ws, ps, rs, s, grids) -> float:
    """[w]_{p,(r,s)} as the exact maximum over every cube of ``grids``.

    ``grids`` is one Grid or a sequence of Grids over the same cells (pass
    all 3^d shifted grids to include the shifted lattices in the supremum).
    Averages over shifted cubes weight by overlap with the unit cube, so the
    value is exact for the piecewise constant weight.
    """
    if isinstance(grids, Grid):
        grids = [grids]
    wv = ws if isinstance(ws, WeightVector) else WeightVector(ws)
    best = 0.0
    for g in grids:
        best = max(best, muckenhoupt_over_cubes(wv, ps, rs, s, g, g.cubes()))
    return best


def stable_muckenhoupt_constant(
    make_weights, ps, rs, s, d: int, depth: int, all_shifts: bool = True,
    rtol: float = 0.05,
) -> float:
    """[w] evaluated at depth-1 and depth; reported once the two agree.

    ``make_weights`` maps a shift-0 grid to the weight components resampled
    on its cells.  Disagreement beyond ``rtol`` (relative) means the
    supremum is still moving with resolution, and no constant is reported.
    """
    if depth < 1:
        raise ValueError("stabilization check needs depth >= 1")
    vals = []
    for level in (depth - 1, depth):
        base = Grid(d, level)
        grids = shifted_grids(d, level) if all_shifts else [base]
        vals.append(muckenhoupt_constant(make_weights(base), ps, rs, s, grids))
    if max(vals) - min(vals) > rtol * max(vals):
        raise RuntimeError(
            f"Muckenhoupt constant not stabilized: {vals[0]:.6g} at depth "
            f"{depth - 1} vs {vals[1]:.6g} at depth {depth}"
        )
    return vals[1]


@dataclass(frozen=True)
class ExponentTuple:
    """Validated exponent data (r, s, q, p, optional t), reciprocal space.

    The standing inequalities r_j < p_j, s > r, q < s, p < s (and, when t is
    present, r_j <= t_j and t <= s) are checked at construction; infinity is
    legal wherever 1/inf = 0 makes the formulas finite.  ``tau`` is the
    intermediate exponent of the composition identity, defined by
    1/tau = (1/r - 1/s + 1/q)/(1/q).
    """

    rs: tuple[float, ...]
    s: float
    q: float
    ps: tuple[float, ...]
    ts: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "rs", tuple(float(r) for r in self.rs))
        object.__setattr__(self, "ps", tuple(float(p) for p in self.ps))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "q", float(self.q))
        if self.ts is not None:
            object.__setattr__(self, "ts", tuple(float(t) for t in self.ts))
        if not self.rs:
            raise ValueError("need at least one exponent component")
        if len(self.ps) != len(self.rs):
            raise ValueError("ps and rs must share one length")
        for j, (r, p) in enumerate(zip(self.rs, self.ps)):
            if not (0 < r < math.inf):
                raise ValueError(f"need r_{j + 1} in (0, inf), got {r}")
            if not recip(p) < recip(r):
                raise ValueError(
                    f"need r_{j + 1} < p_{j + 1}, got r_{j + 1}={r} >= p_{j + 1}={p}"
                )
        if not recip(self.s) < recip(self.r):
            raise ValueError(f"need s > r, got s={self.s} <= r={self.r}")
        if not recip(self.s) < recip(self.q):
            raise ValueError(f"need q < s, got q={self.q} >= s={self.s}")
        if not recip(self.s) < recip(self.p):
            raise ValueError(f"need p < s, got p={self.p} >= s={self.s}")
        if self.ts is not None:
            if len(self.ts) != len(self.rs):
                raise ValueError("ts and rs must share one length")
            for j, (r, t) in enumerate(zip(self.rs, self.ts)):
                if recip(t) > recip(r):
                    raise ValueError(
                        f"need r_{j + 1} <= t_{j + 1}, got t_{j + 1}={t} < r_{j + 1}={r}"
                    )
            if recip(self.t) < recip(self.s):
                raise ValueError(f"need t <= s, got t={self.t} > s={self.s}")

    @property
    def m(self) -> int:
        return len(self.rs)

    @property
    def p(self) -> float:
        return harmonic_exponent(self.ps)

    @property
    def r(self) -> float:
        return harmonic_exponent(self.rs)

    @property
    def t(self) -> float:
        if self.ts is None:
            raise ValueError("no t components supplied")
        return harmonic_exponent(self.ts)

    @property
    def tau(self) -> float:
        # in (0, 1): 1/r - 1/s > 0 by the standing inequality s > r
        rq = recip(self.q)
        return rq / (recip(self.r) - recip(self.s) + rq)


def maximal_weighted_exponent(ps, rs) -> float:
    """Exponent of [w] in the weighted bound for the r-averaged maximal
    operator: gamma = max_j (1/r_j)/(1/r_j - 1/p_j).  Requires r_j < p_j."""
    if len(ps) != len(rs):
        raise ValueError("ps and rs must share one length")
    if not ps:
        raise ValueError("need at least one exponent component")
    terms = []
    for j, (p, r) in enumerate(zip(ps, rs)):
        rr, rp = recip(r), recip(p)
        if rr == 0.0:
            raise ValueError(f"need r_{j + 1} finite, got {r}")
        if rp >= rr:
            raise ValueError(
                f"need r_{j + 1} < p_{j + 1}, got r_{j + 1}={r} >= p_{j + 1}={p}"
            )
        terms.append(rr / (rr - rp))
    return max(terms)


def _enc(x: float):
    """JSON-safe scalar: infinity as the string 'inf'."""
    x = float(x)
    return "inf" if math.isinf(x) else x


def _enc_seq(xs):
    return [_enc(x) for x in xs]


def _report(inputs: dict, r_side: float, s_side: float) -> dict:
    side = "r-side" if r_side >= s_side else "s-side"
    return {"inputs": inputs, "gamma": max(r_side, s_side), "binding_term": side}


def maximal_report(ps, rs) -> dict:
    """JSON record for the maximal-operator exponent (always r-side)."""
    gamma = maximal_weighted_exponent(ps, rs)
    return _report({"ps": _enc_seq(ps), "rs": _enc_seq(rs)}, gamma, 0.0)


def _transfer_terms(ps, q, rs, s) -> tuple[float, float]:
    r_side = maximal_weighted_exponent(ps, rs)
    p = harmonic_exponent(ps)
    rq, rp, rs_ = recip(q), recip(p), recip(s)
    if rq < rp:
        raise ValueError(f"need q <= p, got q={q} > p={p}")
    if rp <= rs_:
        raise ValueError(f"need p < s, got p={p} >= s={s}")
    return r_side, (rq - rs_) / (rp - rs_)


def transfer_exponent(ps, q, rs, s) -> float:
    """Exponent of [w] when a sparse form bound transfers to weighted norms.

    gamma = max{max_j (1/r_j)/(1/r_j - 1/p_j), (1/q - 1/s)/(1/p - 1/s)};
    requires r_j < p_j componentwise and q <= p < s.
    """
    return max(_transfer_terms(ps, q, rs, s))


def transfer_report(ps, q, rs, s) -> dict:
    """JSON record for the transfer exponent, naming the binding family."""
    r_side, s_side = _transfer_terms(ps, q, rs, s)
    inputs = {"ps": _enc_seq(ps), "q": _enc(q), "rs": _enc_seq(rs), "s": _enc(s)}
    return _report(inputs, r_side, s_side)


def _extrapolation_terms(ps, ts, rs, s) -> tuple[float, float]:
    if not len(ps) == len(ts) == len(rs):
        raise ValueError("ps, ts, and rs must share one length")
    if not ps:
        raise ValueError("need at least one exponent component")
    r_terms = []
    for j, (p, t, r) in enumerate(zip(ps, ts, rs)):
        rr, rp, rt = recip(r), recip(p), recip(t)
        if rr == 0.0:
            raise ValueError(f"need r_{j + 1} finite, got {r}")
        if rp >= rr:
            raise ValueError(
                f"need r_{j + 1} < p_{j + 1}, got r_{j + 1}={r} >= p_{j + 1}={p}"
            )
        if rt > rr:
            raise ValueError(
                f"need r_{j + 1} <= t_{j + 1}, got t_{j + 1}={t} < r_{j + 1}={r}"
            )
        r_terms.append((rr - rt) / (rr - rp))
    p = harmonic_exponent(ps)
    t = harmonic_exponent(ts)
    rp, rt, rs_ = recip(p), recip(t), recip(s)
    if rp <= rs_:
        raise ValueError(f"need p < s, got p={p} >= s={s}")
    if rt < rs_:
        raise ValueError(f"need t <= s, got t={t} > s={s}")
    return max(r_terms), (rt - rs_) / (rp - rs_)


def extrapolation_exponent(ps, ts, rs, s) -> float:
    """Exponent of [w] when moving weighted bounds from p to t.

    gamma = max{max_j (1/r_j - 1/t_j)/(1/r_j - 1/p_j), (1/t - 1/s)/(1/p - 1/s)};
    requires r_j < p_j, r_j <= t_j, p < s, t <= s.  t = p gives 1.
    """
    return max(_extrapolation_terms(ps, ts, rs, s))


def extrapolation_report(ps, ts, rs, s) -> dict:
    """JSON record for the extrapolation exponent."""
    r_side, s_side = _extrapolation_terms(ps, ts, rs, s)
    inputs = {"ps": _enc_seq(ps), "ts": _enc_seq(ts), "rs": _enc_seq(rs), "s": _enc(s)}
    return _report(inputs, r_side, s_side)


def composed_transfer_exponent(ps, q, rs, s) -> float:
    """The transfer exponent rebuilt through the extrapolation route.

    With tau = (1/q)/(1/r - 1/s + 1/q) and t_j = r_j/tau, the extrapolation
    exponent comes out as (1 - tau) times the transfer exponent; dividing
    the factor back out must reproduce transfer_exponent, an identity this
    function realizes numerically.
    """
    et = ExponentTuple(rs=tuple(rs), s=s, q=q, ps=tuple(ps))
    tau = et.tau
    ts = tuple(r / tau for r in et.rs)
    return extrapolation_exponent(ps, ts, rs, s) / (1.0 - tau)


def _ellt_terms(ps, rs, q0, ts) -> tuple[float, float]:
    q0 = float(q0)
    if not (0 < q0 < math.inf):
        raise ValueError(f"need q0 in (0, inf), got {q0}")
    r_side = maximal_weighted_exponent(ps, rs)
    p = harmonic_exponent(ps)
    t = harmonic_exponent(ts)
    r = harmonic_exponent(rs)
    if math.isinf(p):
        raise ValueError("need p < inf")
    if math.isinf(t):
        raise ValueError("need t < inf")
    if t <= r:
        raise ValueError(f"need t > r, got t={t} <= r={r}")
    return r_side, (p / q0 if t >= q0 else p / t)


def ellt_exponent(ps, rs, q0, ts) -> float:
    """Exponent of [w] for sequence-valued extensions into ell^t spaces.

    gamma = max{max_j (1/r_j)/(1/r_j - 1/p_j), p/q0} for t >= q0 and with
    p/q0 replaced by p/t for t in (r, q0]; the cases agree at t = q0.
    Requires r_j < p_j and finite p, t with t > r.
    """
    return max(_ellt_terms(ps, rs, q0, ts))


def ellt_report(ps, rs, q0, ts) -> dict:
    """JSON record for the ell^t exponent."""
    r_side, s_side = _ellt_terms(ps, rs, q0, ts)
    inputs = {
        "ps": _enc_seq(ps),
        "rs": _enc_seq(rs),
        "q0": _enc(q0),
        "ts": _enc_seq(ts),
    }
    return _report(inputs, r_side, s_side)


def bht_region(r1, r2, s):
    """Membership of (r1, r2, s) in the bilinear Hilbert transform region.

    Closed form: max{1/r1, 1/2} + max{1/r2, 1/2} + max{1/s', 1/2} < 2 with
    s' the conjugate of s.  Members come with an explicit witness
    theta = (theta_1, theta_2, theta_3) in [0,1)^3 summing to 1 and
    satisfying 1/r1 < (1+theta_1)/2, 1/r2 < (1+theta_2)/2,
    1/s > (1-theta_3)/2; non-members come with the offending sum.
    """
    vals = []
    for name, x in (("r1", r1), ("r2", r2), ("s", s)):
        x = float(x)
        if not (1.0 < x < math.inf):
            raise ValueError(f"{name} must lie in (1, inf), got {x}")
        vals.append(x)
    r1, r2, s = vals
    rhos = (r1, r2, s / (s - 1.0))
    total = sum(max(1.0 / rho, 0.5) for rho in rhos)
    if total >= 2.0:
        return False, {"sum": total, "bound": 2.0}
    # strict lower bounds: theta_i > 2/rho_i - 1 whenever that is positive;
    # spreading the slack keeps every constraint strict and the sum at 1
    lows = [max(0.0, 2.0 / rho - 1.0) for rho in rhos]
    slack = 1.0 - sum(lows)
    theta = tuple(low + slack / 3.0 for low in lows)
    return True, theta


def power_envelope(xs, ys, gamma: float) -> tuple[float, float]:
    """Upper envelope fit of y <= C * x^gamma plus the free log-log slope.

    C is the smallest constant making the envelope hold on the data; the
    slope comes from a least-squares line through (log x, log y) and is 0
    when the data cannot support one (a single point, or no spread in x).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size == 0:
        raise ValueError("need matching nonempty 1-d arrays")
    if np.any(xs <= 0) or np.any(ys < 0):
        raise ValueError("envelope fit needs x > 0 and y >= 0")
    envelope = float(np.max(ys / xs**gamma))
    lx = np.log(xs)
    if xs.size < 2 or float(lx.max() - lx.min()) < 1e-12 or np.any(ys <= 0):
        slope = 0.0
    else:
        slope = float(np.polyfit(lx, np.log(ys), 1)[0])
    return envelope, slope
