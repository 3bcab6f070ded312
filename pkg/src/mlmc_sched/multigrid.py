"""Matrix-free P1 finite elements on the Kuhn subdivision, with geometric
multigrid.

The operator is stored as 15 vertex-indexed weight arrays (diagonal plus the
14 neighbor offsets of the six-tetrahedra mesh: axis edges, the three cut
face diagonals and the main space diagonal). Element coefficients are the
arithmetic mean of the four vertex values of the coefficient field, i.e. a
four-node quadrature of the bilinear form. Smoothing is Gauss-Seidel over
the eight 2x2x2 vertex colors, forward color order for pre- and reversed
order for post-smoothing; no two neighbors share a color, so each color
update is a pure array operation. The coarse operator on every rung is a
re-discretization with the injected coefficient, never a Galerkin product.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grids import inject, prolong, restrict

__all__ = [
    "CycleSpec",
    "StencilOperator",
    "SolveDiverged",
    "reference_element_matrices",
    "assemble_operator",
    "assemble_mass",
    "build_ladder",
    "v_cycle",
    "fmg",
    "solve",
]


class SolveDiverged(RuntimeError):
    """Residual grew over several consecutive multigrid cycles."""


def _tet_types() -> list[list[np.ndarray]]:
    """Vertex offsets of the 6 tetrahedra cutting the unit cube."""
    types = []
    for perm in itertools.permutations(range(3)):
        p0 = np.zeros(3, dtype=int)
        p1 = p0.copy()
        p1[perm[0]] = 1
        p2 = p1.copy()
        p2[perm[1]] = 1
        p3 = np.ones(3, dtype=int)
        types.append([p0, p1, p2, p3])
    return types


def reference_element_matrices() -> list[tuple[list[np.ndarray], np.ndarray]]:
    """(vertex offsets, unit-h stiffness matrix) per tetrahedron type.

    The local matrix scales linearly with the mesh width h in 3D:
    gradients contribute 1/h^2 and the volume h^3/6.
    """
    out = []
    for verts in _tet_types():
        m = np.ones((4, 4))
        for i, v in enumerate(verts):
            m[i, 1:] = v
        minv = np.linalg.inv(m)
        grads = minv[1:, :]  # gradient of basis function j is column j
        vol = abs(np.linalg.det(m)) / 6.0
        s = vol * grads.T @ grads
        out.append((verts, s))
    return out


_REFERENCE = reference_element_matrices()

# canonical neighbor offsets (diagonal first, then pairs +delta / -delta)
OFFSETS: list[tuple[int, int, int]] = sorted(
    {
        tuple(int(x) for x in (vb - va))
        for verts, _ in _REFERENCE
        for va in verts
        for vb in verts
    }
)


def _corner_view(arr: np.ndarray, v, cells: int) -> np.ndarray:
    return arr[v[0] : v[0] + cells, v[1] : v[1] + cells, v[2] : v[2] + cells]


def assemble_operator(
    cells: int,
    h: float,
    coeff: np.ndarray | float,
    dirichlet: bool,
    lumped_shift: float = 0.0,
) -> "StencilOperator":
    """Assemble the stiffness stencil for a vertex coefficient field.

    ``lumped_shift`` adds shift * lumped-mass to the diagonal (the
    Helmholtz term of the sampling operator). ``dirichlet`` rewrites the
    boundary rows to the identity.
    """
    n = cells + 1
    weights = {off: np.zeros((n, n, n)) for off in OFFSETS}
    constant = np.isscalar(coeff)
    if not constant and coeff.shape != (n, n, n):
        raise ValueError(f"coefficient shape {coeff.shape} != grid {(n, n, n)}")
    for verts, s_unit in _REFERENCE:
        if constant:
            k_e = float(coeff)
        else:
            k_e = (
                _corner_view(coeff, verts[0], cells)
                + _corner_view(coeff, verts[1], cells)
                + _corner_view(coeff, verts[2], cells)
                + _corner_view(coeff, verts[3], cells)
            ) * 0.25
        s = s_unit * h
        for a in range(4):
            va = verts[a]
            for b in range(4):
                off = tuple(int(x) for x in (verts[b] - va))
                view = _corner_view(weights[off], va, cells)
                view += s[a, b] * k_e
    if lumped_shift:
        weights[(0, 0, 0)] += lumped_shift * assemble_mass(cells, h)
    if dirichlet:
        mask = np.zeros((n, n, n), dtype=bool)
        mask[0, :, :] = mask[-1, :, :] = True
        mask[:, 0, :] = mask[:, -1, :] = True
        mask[:, :, 0] = mask[:, :, -1] = True
        for off, w in weights.items():
            w[mask] = 1.0 if off == (0, 0, 0) else 0.0
    return StencilOperator(cells, h, weights, dirichlet)


def assemble_mass(cells: int, h: float) -> np.ndarray:
    """Lumped mass per vertex: sum of |tet|/4 over incident tetrahedra."""
    n = cells + 1
    m = np.zeros((n, n, n))
    w = h**3 / 24.0  # |tet|/4
    for verts, _ in _REFERENCE:
        for v in verts:
            view = _corner_view(m, v, cells)
            view += w
    return m


_COLORS = [(a, b, c) for c in (0, 1) for b in (0, 1) for a in (0, 1)]


def _color_slice(n: int, color) -> tuple[slice, slice, slice]:
    return tuple(slice(color[ax], n, 2) for ax in range(3))


def _color_len(n: int, start: int) -> int:
    return (n - start + 1) // 2


class StencilOperator:
    """One grid rung: weights, smoother, residual, direct solve.

    Smoothing runs on contiguous per-color copies (one array per 2x2x2
    parity class, padded by a ghost ring), which keeps the Gauss-Seidel
    updates cache-friendly; weights and fields are split once per call.
    """

    def __init__(self, cells: int, h: float, weights: dict, dirichlet: bool):
        self.cells = cells
        self.h = h
        self.n = cells + 1
        self.weights = weights
        self.dirichlet = dirichlet
        self.inv_diag = 1.0 / weights[(0, 0, 0)]
        self.off_items = [(off, w) for off, w in weights.items() if off != (0, 0, 0)]
        n = self.n
        # per color: contiguous off-diagonal weights, reciprocal diagonal,
        # and for every offset the (source color, padded slice) to read from
        self._w_split = {
            color: [np.ascontiguousarray(w[_color_slice(n, color)]) for _, w in self.off_items]
            for color in _COLORS
        }
        self._invd_split = {
            color: np.ascontiguousarray(self.inv_diag[_color_slice(n, color)])
            for color in _COLORS
        }
        self._nbr_plan = {}
        for color in _COLORS:
            plan = []
            for off, _ in self.off_items:
                src = tuple((color[ax] + off[ax]) % 2 for ax in range(3))
                sl = []
                for ax in range(3):
                    shift = (color[ax] + off[ax] - src[ax]) // 2  # -1, 0 or +1
                    count = _color_len(n, color[ax])
                    sl.append(slice(1 + shift, 1 + shift + count))
                plan.append((src, tuple(sl)))
            self._nbr_plan[color] = plan
        self._dense_inv: np.ndarray | None = None

    def _padded(self, u: np.ndarray) -> np.ndarray:
        p = np.zeros((self.n + 2,) * 3)
        p[1:-1, 1:-1, 1:-1] = u
        return p

    def apply(self, u: np.ndarray) -> np.ndarray:
        p = self._padded(u)
        out = self.weights[(0, 0, 0)] * u
        for off, w in self.off_items:
            out += w * p[
                1 + off[0] : 1 + off[0] + self.n,
                1 + off[1] : 1 + off[1] + self.n,
                1 + off[2] : 1 + off[2] + self.n,
            ]
        return out

    def residual(self, u: np.ndarray, f: np.ndarray) -> np.ndarray:
        return f - self.apply(u)

    def smooth(self, u: np.ndarray, f: np.ndarray, sweeps: int, forward: bool = True) -> None:
        """Gauss-Seidel over the 8 vertex colors, in place."""
        n = self.n
        colors = _COLORS if forward else _COLORS[::-1]
        u_split = {}
        f_split = {}
        for color in _COLORS:
            sl = _color_slice(n, color)
            shape = tuple(_color_len(n, color[ax]) + 2 for ax in range(3))
            pad = np.zeros(shape)
            pad[1:-1, 1:-1, 1:-1] = u[sl]
            u_split[color] = pad
            f_split[color] = np.ascontiguousarray(f[sl])
        acc = {color: np.empty_like(f_split[color]) for color in _COLORS}
        tmp = {color: np.empty_like(f_split[color]) for color in _COLORS}
        for _ in range(sweeps):
            for color in colors:
                a = acc[color]
                t = tmp[color]
                a[...] = f_split[color]
                for w, (src, sl) in zip(self._w_split[color], self._nbr_plan[color]):
                    np.multiply(w, u_split[src][sl], out=t)
                    np.subtract(a, t, out=a)
                np.multiply(a, self._invd_split[color], out=t)
                u_split[color][1:-1, 1:-1, 1:-1] = t
        for color in _COLORS:
            u[_color_slice(n, color)] = u_split[color][1:-1, 1:-1, 1:-1]

    def _dense(self) -> np.ndarray:
        n = self.n
        size = n**3
        a = np.zeros((size, size))
        idx = np.arange(size).reshape(n, n, n)
        for off, w in self.weights.items():
            src = [slice(max(0, -off[ax]), n - max(0, off[ax])) for ax in range(3)]
            dst = [slice(max(0, off[ax]), n - max(0, -off[ax])) for ax in range(3)]
            rows = idx[tuple(src)].ravel()
            cols = idx[tuple(dst)].ravel()
            a[rows, cols] += w[tuple(src)].ravel()
        return a

    def direct_solve(self, f: np.ndarray) -> np.ndarray:
        if self._dense_inv is None:
            self._dense_inv = np.linalg.inv(self._dense())
        return (self._dense_inv @ f.ravel()).reshape(f.shape)


def build_ladder(
    ladder_cells: list[int],
    h_fine: float,
    coeff: np.ndarray | float,
    dirichlet: bool,
    lumped_shift: float = 0.0,
) -> list[StencilOperator]:
    """Re-discretized operators for every rung, coarsest first.

    The coefficient is carried down by vertex injection, so a rung's
    operator is exactly what a standalone assembly on that rung would give.
    """
    ops: list[StencilOperator] = []
    k = coeff
    h = h_fine
    for cells in reversed(ladder_cells):
        ops.append(assemble_operator(cells, h, k, dirichlet, lumped_shift))
        if not np.isscalar(k):
            k = inject(k)
        h *= 2.0
    return ops[::-1]


@dataclass(frozen=True)
class CycleSpec:
    """Multigrid cycle structure: FMG-xV(pre,post) or stand-alone V-cycles."""

    kind: str = "FMG"
    v_per_level: int = 2
    pre_smooth: int = 4
    post_smooth: int = 4
    tol: float = 1.0e-5
    max_cycles: int = 50

    def __post_init__(self) -> None:
        if self.kind not in ("V", "FMG"):
            raise ValueError(f"unknown cycle kind {self.kind!r}")
        if self.pre_smooth < 1 or self.post_smooth < 1:
            raise ValueError("smoothing counts must be positive")


def v_cycle(ops: list[StencilOperator], rung: int, u: np.ndarray, f: np.ndarray, spec: CycleSpec) -> np.ndarray:
    if rung == 0:
        return ops[0].direct_solve(f)
    op = ops[rung]
    op.smooth(u, f, spec.pre_smooth, forward=True)
    coarse_res = restrict(op.residual(u, f))
    if op.dirichlet:
        _zero_boundary(coarse_res)
    corr = v_cycle(ops, rung - 1, np.zeros_like(coarse_res), coarse_res, spec)
    u += prolong(corr)
    if op.dirichlet:
        _zero_boundary(u)
    op.smooth(u, f, spec.post_smooth, forward=False)
    return u


def _zero_boundary(u: np.ndarray) -> None:
    u[0, :, :] = u[-1, :, :] = 0.0
    u[:, 0, :] = u[:, -1, :] = 0.0
    u[:, :, 0] = u[:, :, -1] = 0.0


def fmg(ops: list[StencilOperator], f: np.ndarray, spec: CycleSpec) -> np.ndarray:
    """Full multigrid: coarse direct solve, then per rung interpolate and
    run ``v_per_level`` V-cycles."""
    fs = [f]
    for _ in range(len(ops) - 1):
        coarse = restrict(fs[-1])
        if ops[0].dirichlet:
            _zero_boundary(coarse)
        fs.append(coarse)
    fs = fs[::-1]
    u = ops[0].direct_solve(fs[0])
    for rung in range(1, len(ops)):
        u = prolong(u)
        if ops[rung].dirichlet:
            _zero_boundary(u)
        for _ in range(spec.v_per_level):
            u = v_cycle(ops, rung, u, fs[rung], spec)
    return u


def solve(
    ops: list[StencilOperator],
    f: np.ndarray,
    spec: CycleSpec,
    u0: np.ndarray | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Run the prescribed cycle structure; returns solution and residual history.

    FMG mode runs the fixed FMG pass (history: residual before/after).
    V mode iterates V-cycles until the residual drops below ``tol`` times
    the initial one, raising :class:`SolveDiverged` on three consecutive
    increases.
    """
    top = len(ops) - 1
    op = ops[top]
    if spec.kind == "FMG":
        r0 = float(np.linalg.norm(f))
        u = fmg(ops, f, spec)
        history = [r0, float(np.linalg.norm(op.residual(u, f)))]
        return u, history
    u = np.zeros_like(f) if u0 is None else u0
    r = float(np.linalg.norm(op.residual(u, f)))
    history = [r]
    if r == 0.0:
        return u, history
    target = spec.tol * r
    growth = 0
    for _ in range(spec.max_cycles):
        u = v_cycle(ops, top, u, f, spec)
        r_new = float(np.linalg.norm(op.residual(u, f)))
        history.append(r_new)
        if r_new > history[-2]:
            growth += 1
            if growth >= 3:
                raise SolveDiverged(f"residual grew over 3 cycles: {history[-4:]}")
        else:
            growth = 0
        if r_new <= target:
            break
    return u, history
