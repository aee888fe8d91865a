"""Sparse families: exact verification, forms, optimization, CZ, stopping.

Sparseness of a cube family is decided exactly as a transversal problem:
disjoint subsets E_Q with |E_Q| >= eta |Q| exist iff the bipartite flow
between cubes (demand eta |Q| in finest-cell units) and cells (capacity one
cell each) saturates all demands.  Infeasibility comes with a Hall-violator
refutation extracted from the min cut.

The optimizers target the sparse form sum_Q prod_j <f_j>_{r_j,Q} |Q|: an
exhaustive branch-and-bound for small grids (the ground-truth oracle) and
the greedy principal-cubes construction that realizes the maximal function's
L^1 norm up to a factor of two.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .dyadic import Cube, Grid, average, grid_norm, level_averages
from .maximal import lattice_maximal, scalar_maximal
from .spaces import Space, product_space

__all__ = [
    "SparseFamily",
    "SparseRefutation",
    "CZParts",
    "StoppingCertificate",
    "StoppingFailure",
    "verify_sparse",
    "carleson_constant",
    "sparse_form",
    "optimal_sparse_form",
    "GREEDY_FACTOR",
    "cz_decompose",
    "stopping_domination",
    "form_bound_from_pointwise",
    "family_to_json",
    "family_from_json",
]

# the greedy principal-cubes family realizes at least this fraction of
# ||M(f)||_{L^1}; combined with the exact optimum <= 2 ||M||_{L^1} it gives
# the 1/4 guarantee against the exact mode
GREEDY_FACTOR = 0.5

_VERIFY_DEPTH_CAP = {1: 18, 2: 9}


@dataclass
class SparseFamily:
    """A cube family with sparseness parameter and optional cell certificate.

    certificate maps each cube to the flat ids of finest cells (at
    ``certificate_depth``) forming its disjoint witness set E_Q.
    """

    cubes: list[Cube]
    eta: float = 0.5
    certificate: dict[Cube, list[int]] = field(default_factory=dict)
    certificate_depth: int = 0

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError(f"sparseness parameter must be in (0,1), got {self.eta}")

    def check_certificate(self) -> bool:
        """Disjointness, containment, and the measure lower bound."""
        if not self.certificate:
            return False
        seen: set[int] = set()
        eta = Fraction(self.eta)
        for cube, cells in self.certificate.items():
            if seen.intersection(cells):
                return False
            seen.update(cells)
            owned = _cells_under(cube, self.certificate_depth)
            if not set(cells) <= owned:
                return False
            need = eta * Fraction(2 ** (cube.d * (self.certificate_depth - cube.level)))
            if Fraction(len(cells)) < need:
                return False
        return True


@dataclass
class SparseRefutation:
    """A Hall violator: cubes whose demand exceeds their union's measure."""

    cubes: list[Cube]
    demand: Fraction
    available: Fraction
    eta: float
    depth: int


def _cells_under(cube: Cube, depth: int) -> set[int]:
    """Flat ids of depth-``depth`` cells inside a shift-0 cube."""
    block = 1 << (depth - cube.level)
    n = 1 << depth
    ranges = [range(m * block, (m + 1) * block) for m in cube.index]
    if cube.d == 1:
        return set(ranges[0])
    return {i * n + j for i in ranges[0] for j in ranges[1]}


def _require_standard(cubes: Sequence[Cube]) -> int:
    if any(q.shift != 0 for q in cubes):
        raise ValueError("sparseness verification supports the standard lattice only")
    ds = {q.d for q in cubes}
    if len(ds) != 1:
        raise ValueError("cubes must share one dimension")
    return ds.pop()


def verify_sparse(cubes: Sequence[Cube], eta: float = 0.5):
    """Decide eta-sparseness exactly; SparseFamily or SparseRefutation.

    The demand eta |Q| must be an integer number of cells at the working
    depth, which is refined automatically for dyadic eta; other eta values
    cannot be resolved on any dyadic refinement and raise.
    """
    cubes = list(cubes)
    if not cubes:
        return SparseFamily([], eta, {}, 0)
    d = _require_standard(cubes)
    frac = Fraction(eta)
    if not 0 < frac < 1:
        raise ValueError(f"sparseness parameter must be in (0,1), got {eta}")
    den = frac.denominator
    if den & (den - 1):
        raise ValueError(f"eta={eta} is not dyadic; no refinement depth resolves it")
    extra = (den.bit_length() - 1 + d - 1) // d
    depth = max(q.level for q in cubes) + extra
    if depth > _VERIFY_DEPTH_CAP[d]:
        raise ValueError(
            f"certificate depth {depth} exceeds the d={d} resolution cap"
        )

    ncells = (1 << depth) ** d
    C = len(cubes)
    demands = [int(frac * 2 ** (d * (depth - q.level))) for q in cubes]
    cell_sets = [sorted(_cells_under(q, depth)) for q in cubes]

    # nodes: 0 source, 1..C cubes, C+1..C+ncells cells, last = sink
    nodes = C + ncells + 2
    sink = nodes - 1
    rows, cols, caps = [], [], []

    def add_edge(u, v, c):
        rows.extend((u, v))
        cols.extend((v, u))
        caps.extend((c, 0))

    for i, dem in enumerate(demands):
        add_edge(0, 1 + i, dem)
    for i, cells in enumerate(cell_sets):
        for cell in cells:
            add_edge(1 + i, 1 + C + cell, 1)
    used_cells = sorted(set().union(*map(set, cell_sets)))
    for cell in used_cells:
        add_edge(1 + C + cell, sink, 1)

    graph = csr_matrix((caps, (rows, cols)), shape=(nodes, nodes), dtype=np.int32)
    graph.sum_duplicates()
    result = maximum_flow(graph, 0, sink)

    if result.flow_value == sum(demands):
        flow = result.flow
        certificate: dict[Cube, list[int]] = {}
        for i, q in enumerate(cubes):
            row = flow.getrow(1 + i)
            cells = [
                int(j) - 1 - C
                for j, fl in zip(row.indices, row.data)
                if fl > 0 and 1 + C <= j < 1 + C + ncells
            ]
            certificate[q] = sorted(cells)
        return SparseFamily(cubes, eta, certificate, depth)

    # min cut: cubes reachable from the source in the residual graph form a
    # Hall violator
    residual = graph - result.flow
    reach = np.zeros(nodes, dtype=bool)
    stack = [0]
    reach[0] = True
    indptr, indices, data = residual.indptr, residual.indices, residual.data
    while stack:
        u = stack.pop()
        for pos in range(indptr[u], indptr[u + 1]):
            v = indices[pos]
            if data[pos] > 0 and not reach[v]:
                reach[v] = True
                stack.append(v)
    violator = [q for i, q in enumerate(cubes) if reach[1 + i]]
    union: set[int] = set()
    for i, q in enumerate(cubes):
        if reach[1 + i]:
            union.update(cell_sets[i])
    demand = sum(Fraction(eta) * Fraction(1, (2**q.level) ** d) for q in violator)
    available = Fraction(len(union), (2**depth) ** d)
    return SparseRefutation(violator, demand, available, eta, depth)


def _contains(P: Cube, Q: Cube) -> bool:
    """P contains Q, both from the standard lattice."""
    if Q.level < P.level:
        return False
    shiftdown = Q.level - P.level
    return all(mq >> shiftdown == mp for mp, mq in zip(P.index, Q.index))


def carleson_constant(cubes: Sequence[Cube] | SparseFamily) -> float:
    """max_P sum_{Q subseteq P} |Q| / |P| over the family (packing constant)."""
    if isinstance(cubes, SparseFamily):
        cubes = cubes.cubes
    cubes = list(cubes)
    if not cubes:
        return 0.0
    _require_standard(cubes)
    best = 0.0
    for P in cubes:
        tot = sum(Q.measure for Q in cubes if _contains(P, Q))
        best = max(best, tot / P.measure)
    return best


def sparse_form(
    family: SparseFamily | Sequence[Cube],
    grid: Grid,
    fs: Sequence[np.ndarray],
    rs: Sequence[float],
    g: np.ndarray | None = None,
    sigma: float | None = None,
    q: float = 1.0,
) -> float:
    """( sum_Q (prod_j <f_j>_{r_j,Q})^q <g>_{sigma,Q}^q |Q| )^(1/q), exact."""
    cubes = family.cubes if isinstance(family, SparseFamily) else list(family)
    if not (q > 0):
        raise ValueError(f"form exponent must be positive, got q={q}")
    if g is not None and not (sigma is None or sigma > 0):
        raise ValueError(f"dual exponent must be positive, got {sigma}")
    total = 0.0
    for cube in cubes:
        term = 1.0
        for f, r in zip(fs, rs):
            term *= float(average(grid, f, r, cube))
        if g is not None:
            term *= float(average(grid, g, q if sigma is None else sigma, cube))
        total += term**q * cube.measure
    return total ** (1.0 / q)


def packing_sparse(cubes: Sequence[Cube], eta: float) -> bool:
    """Exact eta-sparseness for a standard-lattice family.

    On one lattice, Hall's condition decomposes over maximal cubes, so
    feasibility is exactly the per-cube packing bound
    eta * sum_{Q subseteq P} |Q| <= |P|.
    """
    etaf = Fraction(eta)
    for P in cubes:
        tot = sum(Fraction(1, (2**Q.level) ** Q.d) for Q in cubes if _contains(P, Q))
        if etaf * tot > Fraction(1, (2**P.level) ** P.d):
            return False
    return True


def optimal_sparse_form(
    fs: Sequence[np.ndarray],
    rs: Sequence[float],
    grid: Grid,
    mode: str = "exact",
    eta: float = 0.5,
) -> tuple[float, SparseFamily]:
    """Maximize the pure sparse form over eta-sparse subfamilies of the grid.

    exact: branch and bound over all subsets (cap 18 cubes), pruned by the
    packing bound, which on one lattice is the exact feasibility criterion;
    the winner is re-verified by flow for its certificate.
    greedy: principal cubes; select a cube when its product of averages more
    than doubles that of the nearest selected ancestor.  The greedy family is
    sparse at a slightly smaller eta when sum 1/r_j > 1 (set on the result).
    """
    fs = [np.asarray(f, dtype=float) for f in fs]
    lv = [level_averages(grid, f, r) for f, r in zip(fs, rs)]

    def prod_avg(cube: Cube) -> float:
        out = 1.0
        for lvj in lv:
            out *= float(lvj[cube.level][cube.index])
        return out

    cubes = list(grid.cubes())

    if mode == "exact":
        if len(cubes) > 18:
            raise ValueError(
                f"exact mode enumerates subsets; {len(cubes)} cubes exceed the cap 18"
            )
        etaf = Fraction(eta)
        num, den = etaf.numerator, etaf.denominator
        contrib = [(prod_avg(q) * q.measure, q) for q in cubes]
        contrib.sort(key=lambda t: -t[0])
        values = [c for c, _ in contrib]
        suffix = np.concatenate([np.cumsum(values[::-1])[::-1], [0.0]])
        # integer cell counts at a common depth keep packing checks exact
        K = max(q.level for q in cubes)
        icell = [2 ** (q.d * (K - q.level)) for _, q in contrib]
        best_val, best_set = 0.0, []
        chosen: list[int] = []
        # per chosen cube: den |P| - eta-weighted cells already packed under P
        budget: dict[int, int] = {}

        def dfs(i: int, cur: float):
            nonlocal best_val, best_set
            if cur > best_val:
                best_val = cur
                best_set = [contrib[k][1] for k in chosen]
            if i == len(contrib) or cur + suffix[i] <= best_val:
                return
            val, cube = contrib[i]
            cost = num * icell[i]
            ancestors = [k for k in chosen if _contains(contrib[k][1], cube)]
            own = den * icell[i] - cost
            own -= sum(num * icell[k] for k in chosen if _contains(cube, contrib[k][1]))
            if own >= 0 and all(budget[k] >= cost for k in ancestors):
                for k in ancestors:
                    budget[k] -= cost
                chosen.append(i)
                budget[i] = own
                dfs(i + 1, cur + val)
                del budget[i]
                chosen.pop()
                for k in ancestors:
                    budget[k] += cost
            dfs(i + 1, cur)

        dfs(0, 0.0)
        family = verify_sparse(best_set, eta)
        if not isinstance(family, SparseFamily):
            raise AssertionError("packing-feasible optimum failed flow verification")
        return best_val, family

    if mode == "greedy":
        rho = 1.0 / sum(1.0 / r for r in rs)
        bound = 1 - 2.0**-rho
        den = 16
        while math.floor(bound * den) == 0 and den < 1024:
            den *= 2
        eta_g = min(eta, math.floor(bound * den) / den)
        if eta_g <= 0:
            raise ValueError(f"greedy guarantee {bound} too small to certify")
        selected: list[Cube] = []
        root = grid.root
        stack = [(root, prod_avg(root), True)]
        value = 0.0
        while stack:
            cube, anchor, select_now = stack.pop()
            p = prod_avg(cube)
            if select_now or p > 2 * anchor:
                selected.append(cube)
                value += p * cube.measure
                anchor = p
            for child in grid.children(cube):
                stack.append((child, anchor, False))
        family = verify_sparse(selected, eta_g)
        if not isinstance(family, SparseFamily):
            raise AssertionError("greedy family failed its sparseness guarantee")
        return value, family

    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Calderon-Zygmund decomposition
# ---------------------------------------------------------------------------


@dataclass
class CZParts:
    """Good/bad splitting at threshold lambda after L^{r_j} normalization.

    good[j] = flat[j] + averaged[j]: the original function off the level set
    plus its r_j-average frozen on each selected maximal cube.  bad is the
    product remainder prod f_j - prod good[j].
    """

    good: list[np.ndarray]
    flat: list[np.ndarray]
    averaged: list[np.ndarray]
    bad: np.ndarray
    level_sets: list[np.ndarray]
    stopping_cubes: list[list[Cube]]
    threshold: float
    r: float
    component_thresholds: list[float]
    norms: list[float]


def cz_decompose(
    grid: Grid,
    fs: Sequence[np.ndarray],
    rs: Sequence[float],
    lam: float,
    norms: Sequence[float] | None = None,
) -> CZParts:
    """Maximal-cube decomposition: <f_j>_{r_j,Q} > lam^{r/r_j} selection.

    Components are normalized to ||f_j||_{L^{r_j}} = 1 (using supplied norms
    when given).  Selected cubes are the maximal ones exceeding the
    component threshold; the averaged part freezes the cube average there.

    The lattice is the full one of the zero extension beyond the window, so
    when the root average exceeds the threshold the selected cube is the
    maximal qualifying ancestor and the frozen value is its decayed average
    root * 2^(-k d / r_j); this keeps the doubling bound on the averaged
    part at every threshold, not just above 2^(-d/r).
    """
    if not (lam > 0):
        raise ValueError(f"threshold must be positive, got {lam}")
    fs = [np.asarray(f, dtype=float) for f in fs]
    if norms is None:
        norms = [grid_norm(grid, f, r) for f, r in zip(fs, rs)]
    norms = [float(c) for c in norms]
    if any(c <= 0 for c in norms):
        raise ValueError("cannot normalize a vanishing component")
    fn = [f / c for f, c in zip(fs, norms)]
    r = 1.0 / sum(1.0 / rj for rj in rs)
    thresholds = [lam ** (r / rj) for rj in rs]

    flat, averaged, good, level_sets, stop_cubes = [], [], [], [], []
    for f, rj, thr in zip(fn, rs, thresholds):
        lv = level_averages(grid, f, rj)
        selected: list[Cube] = []
        stack = [grid.root]
        while stack:
            cube = stack.pop()
            if float(lv[cube.level][cube.index]) > thr:
                selected.append(cube)
            else:
                stack.extend(grid.children(cube))
        frozen = {q: float(lv[q.level][q.index]) for q in selected}
        if selected == [grid.root]:
            # climb the zero extension: each ancestor divides the average
            # by 2^(d/r_j); stop on the last level still above threshold
            a0, k = frozen[grid.root], 0
            while a0 * 2.0 ** (-(k + 1) * grid.d / rj) > thr:
                k += 1
            frozen[grid.root] = a0 * 2.0 ** (-k * grid.d / rj)
        mask = np.zeros(grid.cell_shape, dtype=bool)
        g2 = np.zeros(grid.cell_shape)
        for cube in selected:
            sl = grid.cube_slices(cube)
            mask[sl] = True
            g2[sl] = frozen[cube]
        g1 = np.where(mask, 0.0, f)
        flat.append(g1)
        averaged.append(g2)
        good.append(g1 + g2)
        level_sets.append(mask)
        stop_cubes.append(selected)

    bad = np.prod(fn, axis=0) - np.prod(good, axis=0)
    return CZParts(
        good, flat, averaged, bad, level_sets, stop_cubes, lam, r, thresholds, norms
    )


# ---------------------------------------------------------------------------
# stopping-time sparse domination
# ---------------------------------------------------------------------------


class StoppingFailure(RuntimeError):
    """Raised when doubling the stopping constant never stabilizes."""

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


@dataclass
class StoppingCertificate:
    """The sparse family built by the stopping recursion, plus its audit.

    ratios maps each selected cube to the worst cell ratio of the lattice
    maximal function's X-norm against c_stop times the q-aggregated sparse
    bound; all ratios are <= 1 when pointwise_ok.  weak_type_constant records
    the adaptive stand-in for the nonconstructive weak-type constant.
    """

    family: SparseFamily
    c_stop: float
    doublings: int
    ratios: dict[Cube, float]
    pointwise_ok: bool
    weak_type_constant: float


def stopping_domination(
    grid: Grid,
    Fs: Sequence[np.ndarray],
    rs: Sequence[float],
    q: float,
    spaces: Sequence[Space],
    c_stop: float = 1.0,
    max_doublings: int = 20,
) -> StoppingCertificate:
    """Recursive stopping-children construction with adaptive constant.

    Children of a selected Q are the maximal Q' where the X-norm of the
    chain supremum sup_{Q' <= P <= Q} prod_j <F_j>_{r_j,P} exceeds
    c_stop * prod_j <||F_j||_{X_j}>_{r_j,Q}.  The constant doubles until
    every selected cube keeps at least half its measure free of children,
    which makes the family 1/2-sparse by construction (still re-verified by
    flow) and the pointwise bound holds cell by cell.
    """
    Fs = [np.asarray(F, dtype=float) for F in Fs]
    if len(Fs) != len(rs) or len(spaces) != len(rs):
        raise ValueError("Fs, rs and spaces must align")
    for sp, r in zip(spaces, rs):
        if sp.convexity < r - 1e-12:
            raise ValueError(
                f"component space must be {r}-convex; declared {sp.convexity}"
            )
    prod_space_X = product_space(spaces)
    if prod_space_X.convexity < q - 1e-12:
        raise ValueError(
            f"product space must be {q}-convex; declared {prod_space_X.convexity}"
        )

    cellnorms = [np.asarray(sp.norm(F)) for sp, F in zip(spaces, Fs)]
    scalar_lv = [level_averages(grid, cn, r) for cn, r in zip(cellnorms, rs)]
    vector_lv = [level_averages(grid, F, r) for F, r in zip(Fs, rs)]

    def A(cube: Cube) -> float:
        out = 1.0
        for lvj in scalar_lv:
            out *= float(lvj[cube.level][cube.index])
        return out

    def pvec(cube: Cube) -> np.ndarray:
        out = None
        for lvj in vector_lv:
            v = lvj[cube.level][cube.index]
            out = v.copy() if out is None else out * v
        return out

    def xnorm(vec: np.ndarray) -> float:
        return float(prod_space_X.norm(vec))

    c = float(c_stop)
    for doubling in range(max_doublings + 1):
        selected: list[Cube] = []
        ok = True
        frontier = [grid.root]
        while frontier and ok:
            Q = frontier.pop()
            selected.append(Q)
            threshold = c * A(Q)
            children: list[Cube] = []
            stack = [(child, pvec(Q)) for child in grid.children(Q)]
            while stack:
                node, chain = stack.pop()
                chain = np.maximum(chain, pvec(node))
                if xnorm(chain) > threshold:
                    children.append(node)
                else:
                    for sub in grid.children(node):
                        stack.append((sub, chain))
            if sum(ch.measure for ch in children) > 0.5 * Q.measure:
                ok = False
                break
            frontier.extend(children)
        if ok:
            break
        c *= 2.0
    else:
        raise StoppingFailure(
            "stopping constant failed to stabilize; counterexample candidate",
            {"c_stop": c, "rs": list(rs), "q": q, "depth": grid.depth},
        )

    family = verify_sparse(selected, 0.5)
    if not isinstance(family, SparseFamily):
        raise AssertionError("stopping family failed flow verification")

    M = lattice_maximal(grid, Fs, rs)
    lhs = np.asarray(prod_space_X.norm(M))
    rhs_q = np.zeros(grid.cell_shape)
    for Q in selected:
        rhs_q[grid.cube_slices(Q)] += A(Q) ** q
    rhs = rhs_q ** (1.0 / q)
    with np.errstate(invalid="ignore", divide="ignore"):
        cell_ratio = np.where(lhs > 0, lhs / (c * rhs), 0.0)
    ratios = {
        Q: float(cell_ratio[grid.cube_slices(Q)].max()) for Q in selected
    }
    pointwise_ok = bool(np.all(cell_ratio <= 1 + 1e-9))
    return StoppingCertificate(family, c, doubling, ratios, pointwise_ok, c)


def form_bound_from_pointwise(
    grid: Grid,
    T_values: np.ndarray,
    fs: Sequence[np.ndarray],
    g: np.ndarray,
    rs: Sequence[float],
    q: float,
) -> float:
    """||T(f) g||_{L^q} divided by ||M_{(r,q)}(f,g)||_{L^q}."""
    num = grid_norm(grid, np.asarray(T_values, dtype=float) * np.asarray(g), q)
    M = scalar_maximal(grid, list(fs) + [np.asarray(g, dtype=float)], list(rs) + [q])
    den = grid_norm(grid, M, q)
    if den == 0:
        if num == 0:
            return 0.0
        raise ValueError("maximal side vanishes while the operator side does not")
    return num / den


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def family_to_json(family: SparseFamily) -> str:
    cubes = family.cubes
    payload = {
        "eta": float(family.eta),
        "cubes": [
            {"level": q.level, "index": list(q.index), "shift": q.shift}
            for q in cubes
        ],
        "certificate": [
            {"cube": cubes.index(q), "cells": list(cells)}
            for q, cells in family.certificate.items()
        ],
        "depth": family.certificate_depth,
    }
    return json.dumps(payload)


def family_from_json(text: str) -> SparseFamily:
    obj = json.loads(text)
    cubes = [
        Cube(c["level"], tuple(c["index"]), c["shift"]) for c in obj["cubes"]
    ]
    certificate = {
        cubes[entry["cube"]]: list(entry["cells"]) for entry in obj["certificate"]
    }
    return SparseFamily(cubes, obj["eta"], certificate, obj["depth"])
