"""Desk-scale 3D diffusion backend: -div(k grad u) = 1 on the unit cube with
homogeneous Dirichlet conditions, lognormal coefficient, point or surface-flux
quantity of interest, solved with full multigrid."""

from __future__ import annotations

import struct
import time
from pathlib import Path

import numpy as np

from .backends import SampleFailed, SampleRecord
from .grids import GridHierarchy, VertexField, inject
from .multigrid import (
    CycleSpec,
    SolveDiverged,
    assemble_mass,
    assemble_operator,
    build_ladder,
    fmg,
    v_cycle,
)
from .randomfield import CovarianceParams, FieldSampler
from .streams import RandomStream

__all__ = [
    "GridHierarchy",
    "VertexField",
    "apply_operator",
    "fmg_solve",
    "qoi",
    "pde_correction_sample",
    "PdeBackend",
    "unit_load",
    "save_field",
    "load_field",
    "field_slice_csv",
    "append_qoi_csv",
]

_FIELD_MAGIC = b"VFLD"


def save_field(field: VertexField, path: str | Path) -> Path:
    """Flat binary dump: magic, level, domain tag, dims, vertex-ordered doubles."""
    path = Path(path)
    v = np.ascontiguousarray(field.values, dtype="<f8")
    domain_tag = 0 if field.domain == "D" else 1
    header = _FIELD_MAGIC + struct.pack("<iiiii", field.level, domain_tag, *v.shape)
    path.write_bytes(header + v.tobytes())
    return path


def load_field(path: str | Path) -> VertexField:
    raw = Path(path).read_bytes()
    if raw[:4] != _FIELD_MAGIC:
        raise ValueError(f"{path} is not a vertex-field file")
    level, domain_tag, nx, ny, nz = struct.unpack("<iiiii", raw[4:24])
    values = np.frombuffer(raw[24:], dtype="<f8").reshape(nx, ny, nz).copy()
    return VertexField(level, "D" if domain_tag == 0 else "embedded", values)


def field_slice_csv(field: VertexField, axis: int, index: int, path: str | Path) -> Path:
    """One 2D slice of a field as CSV, for quick inspection."""
    path = Path(path)
    plane = np.take(field.values, index, axis=axis)
    lines = [",".join(repr(float(v)) for v in row) for row in plane]
    path.write_text("\n".join(lines) + "\n")
    return path


def append_qoi_csv(path: str | Path, level: int, index: int, kind: str, value: float) -> Path:
    """Append one quantity-of-interest evaluation to a running CSV stream."""
    path = Path(path)
    if not path.exists():
        path.write_text("level,index,kind,value\n")
    with path.open("a") as fh:
        fh.write(f"{level},{index},{kind},{float(value)!r}\n")
    return path


def _zero_boundary(u: np.ndarray) -> None:
    u[0, :, :] = u[-1, :, :] = 0.0
    u[:, 0, :] = u[:, -1, :] = 0.0
    u[:, :, 0] = u[:, :, -1] = 0.0


def unit_load(hier: GridHierarchy, level: int) -> VertexField:
    """Load vector of f = 1 (lumped quadrature), zeroed on the boundary."""
    rhs = assemble_mass(hier.cells(level, "D"), hier.h(level))
    _zero_boundary(rhs)
    return hier.field(level, "D", rhs)


def apply_operator(coeff: VertexField, u: VertexField, hier: GridHierarchy) -> VertexField:
    """Matrix-free application of the variable-coefficient stiffness operator."""
    if coeff.level != u.level or coeff.domain != u.domain:
        raise ValueError("coefficient and argument live on different grids")
    op = assemble_operator(
        hier.cells(u.level, u.domain), hier.h(u.level), coeff.values, dirichlet=(u.domain == "D")
    )
    return VertexField(u.level, u.domain, op.apply(u.values))


def fmg_solve(
    coeff: VertexField,
    rhs: VertexField,
    spec: CycleSpec,
    hier: GridHierarchy,
) -> tuple[VertexField, list[float]]:
    """Solve the Dirichlet problem for one coefficient sample.

    FMG mode runs the fixed cycle structure and reports the residual before
    and after; V mode iterates to the relative tolerance of the spec.
    """
    if coeff.level != rhs.level or coeff.domain != "D" or rhs.domain != "D":
        raise ValueError("fmg_solve expects matching fields on D")
    if np.any(coeff.values <= 0):
        raise ValueError("coefficient must be strictly positive")
    ops = build_ladder(
        hier.ladder(coeff.level, "D"), hier.h(coeff.level), coeff.values, dirichlet=True
    )
    f = rhs.values.copy()
    _zero_boundary(f)
    if spec.kind == "FMG":
        r0 = float(np.linalg.norm(f))
        u = fmg(ops, f, spec)
        history = [r0, float(np.linalg.norm(ops[-1].residual(u, f)))]
    else:
        u = np.zeros_like(f)
        top = ops[-1]
        r = float(np.linalg.norm(top.residual(u, f)))
        history = [r]
        growth = 0
        for _ in range(spec.max_cycles):
            if history[-1] <= spec.tol * history[0]:
                break
            u = v_cycle(ops, len(ops) - 1, u, f, spec)
            r_new = float(np.linalg.norm(top.residual(u, f)))
            growth = growth + 1 if r_new > history[-1] else 0
            history.append(r_new)
            if growth >= 3:
                raise SampleFailed(f"V-cycle diverged: {history[-4:]}")
    return VertexField(coeff.level, "D", u), history


def qoi(u: VertexField, coeff: VertexField, kind: str, hier: GridHierarchy) -> float:
    """Point value at (1/4, 1/4, 1/4) or signed flux across the plane x2 = 1/4."""
    cells = hier.cells(u.level, "D")
    if cells % 4:
        raise ValueError("the evaluation point (0.25, 0.25, 0.25) must be a grid vertex")
    q = cells // 4
    if kind == "point":
        return float(u.values[q, q, q])
    if kind == "flux":
        h = hier.h(u.level)
        du = (u.values[:, q + 1, :] - u.values[:, q, :]) / h
        kv = coeff.values[:, q, :]
        w = np.ones((cells + 1, cells + 1))
        w[0, :] *= 0.5
        w[-1, :] *= 0.5
        w[:, 0] *= 0.5
        w[:, -1] *= 0.5
        return float(-(h * h) * np.sum(w * kv * du))
    raise ValueError(f"unknown quantity of interest {kind!r}")


class PdeBackend:
    """Correction-sample backend over the PDE solver.

    One coefficient realization per (level, index); for level >= 1 it is
    injected onto the next coarser grid and both problems are solved with
    the same cycle structure, so the coarse value equals what a standalone
    coarse solve with that coefficient would produce.
    """

    def __init__(
        self,
        hier: GridHierarchy | None = None,
        params: CovarianceParams | None = None,
        qoi_kind: str = "point",
        cycle: CycleSpec | None = None,
        refine_tol: float = 1.0e-5,
        max_refine_cycles: int = 20,
    ):
        self.hier = hier or GridHierarchy(max_level=3, n0=4)
        self.params = params or CovarianceParams()
        self.qoi_kind = qoi_kind
        self.cycle = cycle or CycleSpec(kind="FMG", v_per_level=2, pre_smooth=4, post_smooth=4)
        self.refine_tol = refine_tol
        self.max_refine_cycles = max_refine_cycles
        self.sampler = FieldSampler(
            self.hier, self.params, self.cycle, refine_tol, max_refine_cycles
        )

    @property
    def max_level(self) -> int:
        return self.hier.max_level

    def solve_with_coefficient(self, level: int, k_values: np.ndarray) -> tuple[np.ndarray, float]:
        """Shared solve path: FMG pass plus V-cycles to the relative tolerance."""
        ops = build_ladder(self.hier.ladder(level, "D"), self.hier.h(level), k_values, dirichlet=True)
        f = assemble_mass(self.hier.cells(level, "D"), self.hier.h(level))
        _zero_boundary(f)
        u = fmg(ops, f, self.cycle)
        top = ops[-1]
        r0 = float(np.linalg.norm(f))
        prev = float(np.linalg.norm(top.residual(u, f)))
        growth = 0
        for _ in range(self.max_refine_cycles):
            if prev <= self.refine_tol * r0:
                break
            u = v_cycle(ops, len(ops) - 1, u, f, self.cycle)
            r = float(np.linalg.norm(top.residual(u, f)))
            growth = growth + 1 if r > prev else 0
            if growth >= 3:
                raise SampleFailed("flow solve diverged")
            prev = r
        value = qoi(
            VertexField(level, "D", u),
            VertexField(level, "D", k_values),
            self.qoi_kind,
            self.hier,
        )
        return u, value

    def draw(self, level: int, index: int, root: RandomStream) -> SampleRecord:
        if not 0 <= level <= self.max_level:
            raise ValueError(f"level {level} outside backend range 0..{self.max_level}")
        started = time.perf_counter()
        stream = root.split(level, index, "field")
        try:
            k_fine = self.sampler.log_coefficient(level, stream)
            _, q_fine = self.solve_with_coefficient(level, k_fine.values)
            if level == 0:
                y = q_fine
            else:
                k_coarse = inject(k_fine.values)
                _, q_coarse = self.solve_with_coefficient(level - 1, k_coarse)
                y = q_fine - q_coarse
        except SolveDiverged as exc:
            raise SampleFailed(str(exc)) from exc
        duration = max(time.perf_counter() - started, 1e-9)
        return SampleRecord(
            level=level,
            index=index,
            y_value=y,
            q_fine=q_fine,
            duration=duration,
            stream_id=f"{root.root_seed}/pde/{level}/{index}",
        )


def pde_correction_sample(
    level: int,
    params: CovarianceParams,
    stream: RandomStream,
    kind: str = "point",
    hier: GridHierarchy | None = None,
    index: int = 0,
) -> SampleRecord:
    """One correction sample through a throwaway backend (convenience)."""
    backend = PdeBackend(hier=hier, params=params, qoi_kind=kind)
    return backend.draw(level, index, stream)
