"""Weighted geodesic action cost on a space-time lattice, and the descent check along curves.

The cost of a curve is ``int a^(alpha/(2-alpha)) |gamma'|^(2/(2-alpha)) dt``.
Curves are lattice paths: an edge advances a few time layers and moves by an
integer offset of at most ``radius`` cells per axis.  Edges always go
forward in time, so the shortest path is found by one dynamic-programming
sweep over layers, which on this acyclic graph returns the same answer as a
Dijkstra search.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .energy import check_alpha, d_alpha
from .errors import ConfigurationError, DegenerateSlopeError, DomainError
from .functional import cell_gradient_sq, time_derivative
from .grid import TorusGrid


class WeightField:
    """Positive periodic weight ``a(t, x)`` sampled on the cells of ``grid``.

    Either an array of shape ``(nt + 1, *space)`` on the grid's time nodes
    (linearly interpolated in time) or a callable ``f(t) -> space array``.
    """

    def __init__(self, values, grid: TorusGrid):
        self.grid = grid
        if callable(values):
            self._fn = values
            self.values = None
        else:
            v = np.asarray(values, dtype=float)
            if v.ndim == 0:
                v = np.full(grid.density_shape, float(v))
            if v.shape != grid.density_shape:
                raise ConfigurationError(f"weight shape {v.shape} != {grid.density_shape}")
            if not np.all(v > 0):
                raise DomainError("weight must be positive")
            self.values = v
            self._fn = None

    @classmethod
    def constant(cls, c, grid):
        return cls(float(c), grid)

    def at(self, t: float) -> np.ndarray:
        if self._fn is not None:
            out = np.broadcast_to(np.asarray(self._fn(t), dtype=float), self.grid.space_shape)
            if not np.all(out > 0):
                raise DomainError("weight must be positive")
            return out
        u = np.clip(t, 0.0, 1.0) * self.grid.nt
        k = min(int(np.floor(u)), self.grid.nt - 1)
        th = u - k
        return (1 - th) * self.values[k] + th * self.values[k + 1]

    def rescaled(self, s: float, t: float) -> "WeightField":
        """Weight on ``[0, 1]`` whose value at ``r`` is ``a(s + r (t - s))``."""
        return WeightField(lambda r: self.at(s + r * (t - s)), self.grid)


def _as_weight(a, grid):
    return a if isinstance(a, WeightField) else WeightField(a, grid)


def _node(x, grid):
    x = np.atleast_1d(np.asarray(x))
    if x.shape != (grid.d,):
        raise ConfigurationError(f"node must have {grid.d} integer indices, got {x}")
    return tuple(int(v) % grid.n for v in x)


def _stencil(d, radius, time_span):
    """Edges ``(j, o)``: advance ``j`` layers while moving by offset ``o`` (``|o|_inf <= radius``)."""
    r = range(-radius, radius + 1)
    return [(j, np.array(o)) for j in range(1, time_span + 1) for o in itertools.product(r, repeat=d)]


def geodesic_cost(a, s, x, t, y, alpha, grid: TorusGrid, radius: int = 3, layers: int | None = None,
                  time_span: int | None = None, return_path: bool = False):
    """Lattice upper bound of ``c_a((s, x), (t, y))``.

    ``x``, ``y`` are integer cell indices; ``layers`` is the number of time
    steps between ``s`` and ``t`` (default: the grid steps spanned).  An edge
    may skip up to ``time_span`` layers, which lets slow constant-speed
    motion (less than one cell per step) stay on the lattice.  The weight on
    an edge is the mean of ``a`` at its two endpoints.  By default edges may
    span any number of layers, so every rational speed below ``radius``
    cells per layer is available.
    """
    alpha = check_alpha(alpha)
    if not s < t:
        raise DomainError(f"need s < t, got s={s}, t={t}")
    if radius < 0 or 2 * radius >= grid.n:
        raise ConfigurationError("radius must satisfy 0 <= 2 * radius < n")
    a = _as_weight(a, grid)
    if layers is None:
        layers = max(1, int(round((t - s) * grid.nt)))
    if time_span is None:
        time_span = layers
    if time_span < 1:
        raise ConfigurationError("time_span must be >= 1")
    x, y = _node(x, grid), _node(y, grid)
    q = alpha / (2 - alpha)
    p = 2 / (2 - alpha)
    dt = (t - s) / layers
    axes = tuple(range(grid.d))
    edges = [(j, o) for j, o in _stencil(grid.d, radius, time_span) if j <= layers]
    edge_cost = [j * dt * (np.linalg.norm(o) * grid.h / (j * dt)) ** p for j, o in edges]
    aq = [None] * (layers + 1)

    def weight(i):
        if aq[i] is None:
            aq[i] = a.at(s + i * dt)
        return aq[i]

    cost = np.full((layers + 1,) + grid.space_shape, np.inf)
    parent = np.full((layers + 1,) + grid.space_shape, -1, dtype=int)
    cost[0][x] = 0.0
    for i in range(layers):
        src = cost[i]
        if not np.any(np.isfinite(src)):
            continue
        for e, ((j, o), ec) in enumerate(zip(edges, edge_cost)):
            k = i + j
            if k > layers:
                continue
            # arriving at z' on layer k from z' - o on layer i
            abar = 0.5 * (np.roll(weight(i), tuple(o), axis=axes) + weight(k))
            cand = np.roll(src, tuple(o), axis=axes) + (abar**q) * ec
            better = cand < cost[k]
            cost[k] = np.where(better, cand, cost[k])
            parent[k] = np.where(better, e, parent[k])
    value = float(cost[layers][y])
    if not return_path:
        return value
    path = [(layers, np.array(y))]
    while path[-1][0] > 0:
        k, z = path[-1]
        j, o = edges[parent[k][tuple(z)]]
        path.append((k - j, (z - o) % grid.n))
    return value, path[::-1]


def closed_form_constant(x, y, s, t, alpha, grid: TorusGrid) -> float:
    """Cost for ``a = 1``: ``|x - y|^(2/(2-alpha)) (t - s)^(-alpha/(2-alpha))`` (minimal image)."""
    dx = (np.atleast_1d(y) - np.atleast_1d(x)) * grid.h
    dx = dx - np.round(dx)
    return float(np.linalg.norm(dx) ** (2 / (2 - alpha)) * (t - s) ** (-alpha / (2 - alpha)))


def check_scaling(a, x, y, s, t, alpha, grid: TorusGrid, radius: int = 3, layers: int | None = None,
                  time_span: int | None = None) -> float:
    """Relative mismatch of ``c_a((s,x),(t,y)) = (t-s)^(-alpha/(2-alpha)) c_ã((0,x),(1,y))``.

    ``ã(r) = a(s + r (t - s))``; both sides use the same number of layers so
    the rescaled lattice is the image of the original one.
    """
    alpha = check_alpha(alpha)
    a = _as_weight(a, grid)
    if layers is None:
        layers = max(1, int(round((t - s) * grid.nt)))
    lhs = geodesic_cost(a, s, x, t, y, alpha, grid, radius, layers, time_span)
    rhs = (t - s) ** (-alpha / (2 - alpha)) * geodesic_cost(
        a.rescaled(s, t), 0.0, x, 1.0, y, alpha, grid, radius, layers, time_span)
    if lhs == 0.0:
        return 0.0 if rhs == 0.0 else float("inf")
    return abs(lhs - rhs) / lhs


@dataclass
class HolderReport:
    separations: list
    costs: list
    exponent: float
    constants: list
    sigma_max: float

    def rows(self):
        return list(zip(self.separations, self.costs, self.constants))


def holder_report(a, alpha, separations, grid: TorusGrid, x0=None, radius: int = 3) -> HolderReport:
    """Log-log fit of ``c_a((0, x0), (1, x0 + k e_1))`` against the distance ``k h``.

    ``separations`` are cell counts.  Each query uses ``k`` layers so that for
    a constant weight the straight constant-speed path lies on the lattice.
    Descriptive only: the constant of the underlying estimate is not known.
    """
    alpha = check_alpha(alpha)
    a = _as_weight(a, grid)
    x0 = np.zeros(grid.d, dtype=int) if x0 is None else np.asarray(x0, dtype=int)
    seps = [int(k) for k in separations]
    if any(k <= 0 or k > grid.n // 2 for k in seps):
        raise ConfigurationError("separations must be in 1..n/2 cells")
    e1 = np.zeros(grid.d, dtype=int)
    e1[0] = 1
    costs = [geodesic_cost(a, 0.0, x0, 1.0, x0 + k * e1, alpha, grid, radius, layers=k) for k in seps]
    dist = np.array(seps) * grid.h
    slope = float(np.polyfit(np.log(dist), np.log(costs), 1)[0])
    sigma_max = (2 - grid.d * (1 - alpha)) / (2 - alpha)
    consts = [c / r**sigma_max for c, r in zip(costs, dist)]
    return HolderReport(seps, costs, slope, consts, sigma_max)


def _interp_periodic(field_slice, pos, grid: TorusGrid):
    """Multilinear periodic interpolation of a cell-centred field at physical positions ``(m, d)``."""
    u = (np.atleast_2d(pos) + 0.5) / grid.h - 0.5
    i0 = np.floor(u).astype(int)
    fr = u - i0
    out = np.zeros(u.shape[0])
    for corner in itertools.product((0, 1), repeat=grid.d):
        c = np.array(corner)
        wgt = np.prod(np.where(c == 1, fr, 1 - fr), axis=1)
        idx = tuple(((i0 + c) % grid.n).T)
        out += wgt * field_slice[idx]
    return out


@dataclass
class DescentReport:
    max_increment: float
    excluded: int
    values: np.ndarray = field(repr=False)


def check_descent(phi, gamma, alpha, grid: TorusGrid, strict: bool = False) -> DescentReport:
    """Monitor ``M(t) = phi(t, gamma(t)) - d_alpha int_0^t A^(alpha/(2-alpha)) |gamma'|^(2/(2-alpha))``.

    ``gamma`` holds positions at the grid time nodes, shape ``(nt + 1, d)``.
    ``A = |grad phi|^(2/alpha) / (-d_t phi)`` is evaluated at segment
    midpoints.  Segments where ``-d_t phi <= 0`` are excluded and counted;
    with ``strict`` they raise instead.
    """
    alpha = check_alpha(alpha)
    if alpha == 0.0:
        raise ConfigurationError("the descent inequality needs alpha > 0")
    gamma = np.asarray(gamma, dtype=float).reshape(grid.nt + 1, grid.d)
    dphi = time_derivative(phi, grid)
    g2 = cell_gradient_sq(phi, grid)
    vel = np.diff(gamma, axis=0)
    vel = (vel - np.round(vel)) / grid.dt
    mid = gamma[:-1] + 0.5 * vel * grid.dt
    p = 2 / (2 - alpha)
    q = alpha / (2 - alpha)
    da = d_alpha(alpha)
    M = np.empty(grid.nt + 1)
    acc = 0.0
    excluded = 0
    M[0] = _interp_periodic(phi[0], gamma[0], grid)[0]
    for k in range(grid.nt):
        slope = -_interp_periodic(dphi[k], mid[k], grid)[0]
        gsq = _interp_periodic(g2[k], mid[k], grid)[0]
        speed = np.linalg.norm(vel[k])
        if slope <= 0:
            excluded += 1
            if strict:
                raise DegenerateSlopeError(f"-d_t phi = {slope:.3e} <= 0 on segment {k}")
        elif speed > 0:
            # A^q = |grad phi|^(2q/alpha) (-d_t phi)^(-q)
            acc += grid.dt * da * gsq ** (q / alpha) * slope ** (-q) * speed**p
        M[k + 1] = _interp_periodic(phi[k + 1], gamma[k + 1], grid)[0] - acc
    return DescentReport(float(max(0.0, np.max(M - M[0]))), excluded, M)
