"""The precomputed operator bundle and its binary container format.

One OperatorSet holds every dense operator the optimizer consumes for a
single wavenumber.  The container file ("MOMX") is little-endian binary:
a 16-byte header (magic, version, n_dof, flags) followed by tagged matrix
records; complex matrices store interleaved (re, im) f64 pairs, real ones
plain f64, both column-major.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import assembly
from .assembly import ETA0, C0, ExcitationSpec
from .mesh import Mesh, PlateSpec, build_mesh
from .spherical import default_l_max, spherical_projection

__all__ = [
    "OperatorSet",
    "ContainerError",
    "BadMagicError",
    "VersionError",
    "TruncatedError",
    "cholesky_loss",
    "assemble_plate_operators",
    "save_operators",
    "load_operators",
]

MAGIC = b"MOMX"
VERSION = 1

_TAG_Z0 = 1       # complex N x N
_TAG_ZRHO = 2     # real N x N (stored dense, sparse in memory)
_TAG_ZL = 3       # complex N x 1 diagonal
_TAG_V = 4        # complex N x 1
_TAG_W = 5        # real N x N
_TAG_XM = 6       # real N x N
_TAG_XE = 7       # real N x N
_TAG_U1 = 8       # real L x N
_TAG_LCHOL = 9    # real N x N
_TAG_FROWS = 10   # complex nf x N
_TAG_FDIRS = 11   # real nf x 6
_TAG_K = 12       # real 1 x 1

_COMPLEX_TAGS = {_TAG_Z0, _TAG_ZL, _TAG_V, _TAG_FROWS}


class ContainerError(IOError):
    """Base error for malformed operator container files."""


class BadMagicError(ContainerError):
    pass


class VersionError(ContainerError):
    pass


class TruncatedError(ContainerError):
    pass


@dataclass
class OperatorSet:
    """All dense operators for one wavenumber, immutable after assembly."""

    k: float
    z0: np.ndarray
    z_rho: sp.csr_array
    z_l: np.ndarray
    v: np.ndarray
    w: np.ndarray
    xm: np.ndarray
    xe: np.ndarray
    u1: np.ndarray
    l_chol: np.ndarray
    f_rows: np.ndarray
    f_dirs: np.ndarray
    _z_total: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_dof(self) -> int:
        return self.z0.shape[0]

    @property
    def omega(self) -> float:
        return self.k * C0

    @property
    def r0(self) -> np.ndarray:
        return self.z0.real

    @property
    def x0(self) -> np.ndarray:
        return self.z0.imag

    @property
    def x_total(self) -> np.ndarray:
        """Total reactance Im{Z0 + Zrho + ZL} (Zrho is real)."""
        x = self.z0.imag.copy()
        x[np.diag_indices_from(x)] += self.z_l.imag
        return x

    @property
    def r_loss(self) -> np.ndarray:
        """Dissipative part Re{Zrho} + Re{ZL} as a dense matrix."""
        r = np.asarray(self.z_rho.todense())
        r[np.diag_indices_from(r)] += self.z_l.real
        return r

    def z_total(self) -> np.ndarray:
        """Full system matrix Z0 + Zrho + ZL (cached)."""
        if self._z_total is None:
            z = self.z0 + np.asarray(self.z_rho.todense())
            z[np.diag_indices_from(z)] += self.z_l
            self._z_total = z
        return self._z_total

    def validate(self) -> None:
        n = self.n_dof
        for name in ("z_rho", "w", "xm", "xe", "l_chol"):
            if getattr(self, name).shape != (n, n):
                raise ValueError(f"{name} shape mismatch")
        if self.v.shape != (n,) or self.z_l.shape != (n,):
            raise ValueError("vector operator shape mismatch")
        if self.u1.shape[1] != n or self.f_rows.shape[1] != n:
            raise ValueError("projection operator shape mismatch")


def cholesky_loss(r_rho) -> np.ndarray:
    """Upper-triangular-style factor L with L^T L = Rrho.

    Diagonal input factors elementwise; otherwise a plain Cholesky is tried
    and positive-semidefinite input falls back to an eigenvalue square root.
    """
    a = np.asarray(r_rho.todense() if sp.issparse(r_rho) else r_rho, dtype=float)
    if a.size == 0:
        return a.copy()
    off = a - np.diag(np.diag(a))
    if not off.any():
        d = np.diag(a)
        if np.any(d < 0):
            raise ValueError("indefinite loss matrix")
        return np.diag(np.sqrt(d))
    try:
        c = np.linalg.cholesky(a)
        return c.T
    except np.linalg.LinAlgError:
        val, vec = np.linalg.eigh(a)
        lam_max = max(val.max(), 0.0)
        if val.min() < -1e-10 * max(lam_max, 1e-300):
            raise ValueError(
                f"indefinite loss matrix: eigenvalue {val.min():.3e}"
            ) from None
        return np.sqrt(np.clip(val, 0.0, None))[:, None] * vec.T


def assemble_plate_operators(
    spec: PlateSpec,
    excitation: ExcitationSpec,
    rho=0.0,
    ports=(),
    l_max: int | None = None,
    delta: float = 1e-4,
    ff_directions=None,
    quad_regular: int = 3,
    quad_near: int = 7,
) -> tuple[OperatorSet, Mesh]:
    """Build every operator for one plate and one frequency."""
    mesh = build_mesh(spec)
    k = spec.wavenumber
    z0 = assembly.efie_matrix(mesh, k, quad_regular, quad_near)
    w, xm, xe = assembly.stored_energy_matrices(
        mesh, k, delta, z0=z0, quad_regular=quad_regular, quad_near=quad_near
    )
    z_rho = assembly.material_matrix(mesh, rho)
    z_l = assembly.lumped_diagonal(ports, k * C0, mesh.n_dof)
    v = assembly.excitation_vector(mesh, excitation, k)
    if l_max is None:
        l_max = default_l_max(spec.ka)
    u1 = spherical_projection(mesh, k, l_max, rule=quad_regular)
    l_chol = cholesky_loss(z_rho)
    if ff_directions is None:
        ff_directions = [((0, 0, 1), (1, 0, 0)), ((0, 0, 1), (0, 1, 0))]
    f_rows = np.array(
        [assembly.farfield_row(mesh, k, d, e) for d, e in ff_directions]
    ).reshape(len(ff_directions), mesh.n_dof)
    f_dirs = np.array(
        [list(d) + list(e) for d, e in ff_directions], dtype=float
    ).reshape(len(ff_directions), 6)
    ops = OperatorSet(k, z0, z_rho, z_l, v, w, xm, xe, u1, l_chol, f_rows, f_dirs)
    ops.validate()
    return ops, mesh


def _write_record(fh, tag: int, mat: np.ndarray) -> None:
    mat = np.atleast_2d(mat)
    fh.write(struct.pack("<HII", tag, mat.shape[0], mat.shape[1]))
    if tag in _COMPLEX_TAGS:
        buf = np.empty(mat.shape + (2,), dtype="<f8")
        buf[..., 0] = mat.real
        buf[..., 1] = mat.imag
        fh.write(buf.transpose(1, 0, 2).tobytes())  # column-major (re, im) pairs
    else:
        fh.write(np.asarray(mat, dtype="<f8").tobytes(order="F"))


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedError("container file ends mid-record")
    return buf


def save_operators(ops: OperatorSet, path) -> None:
    """Atomic write of the MOMX container (temp file + rename)."""
    ops.validate()
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<III", VERSION, ops.n_dof, 0))
            _write_record(fh, _TAG_K, np.array([[ops.k]]))
            _write_record(fh, _TAG_Z0, ops.z0)
            _write_record(fh, _TAG_ZRHO, np.asarray(ops.z_rho.todense()))
            _write_record(fh, _TAG_ZL, ops.z_l.reshape(-1, 1))
            _write_record(fh, _TAG_V, ops.v.reshape(-1, 1))
            _write_record(fh, _TAG_W, ops.w)
            _write_record(fh, _TAG_XM, ops.xm)
            _write_record(fh, _TAG_XE, ops.xe)
            _write_record(fh, _TAG_U1, ops.u1)
            _write_record(fh, _TAG_LCHOL, ops.l_chol)
            _write_record(fh, _TAG_FROWS, ops.f_rows)
            _write_record(fh, _TAG_FDIRS, ops.f_dirs)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def load_operators(path) -> OperatorSet:
    """Read a MOMX container; raises distinct errors for each malformation."""
    mats: dict[int, np.ndarray] = {}
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) < 4 or head != MAGIC:
            raise BadMagicError(f"{path}: bad magic {head!r}")
        version, n_dof, _flags = struct.unpack("<III", _read_exact(fh, 12))
        if version != VERSION:
            raise VersionError(f"{path}: unsupported version {version}")
        while True:
            rec = fh.read(10)
            if not rec:
                break
            if len(rec) < 10:
                raise TruncatedError("container file ends mid-header")
            tag, rows, cols = struct.unpack("<HII", rec)
            if tag in _COMPLEX_TAGS:
                raw = np.frombuffer(_read_exact(fh, rows * cols * 16), dtype="<f8")
                flat = raw.reshape(cols, rows, 2).transpose(1, 0, 2)
                mats[tag] = (flat[..., 0] + 1j * flat[..., 1]).copy()
            else:
                raw = np.frombuffer(_read_exact(fh, rows * cols * 8), dtype="<f8")
                mats[tag] = raw.reshape(cols, rows).T.copy()
    required = {
        _TAG_K, _TAG_Z0, _TAG_ZRHO, _TAG_ZL, _TAG_V, _TAG_W, _TAG_XM,
        _TAG_XE, _TAG_U1, _TAG_LCHOL, _TAG_FROWS, _TAG_FDIRS,
    }
    missing = required - mats.keys()
    if missing:
        raise TruncatedError(f"{path}: missing records {sorted(missing)}")
    ops = OperatorSet(
        k=float(mats[_TAG_K][0, 0]),
        z0=mats[_TAG_Z0],
        z_rho=sp.csr_array(mats[_TAG_ZRHO]),
        z_l=mats[_TAG_ZL].ravel(),
        v=mats[_TAG_V].ravel(),
        w=mats[_TAG_W],
        xm=mats[_TAG_XM],
        xe=mats[_TAG_XE],
        u1=mats[_TAG_U1],
        l_chol=mats[_TAG_LCHOL],
        f_rows=mats[_TAG_FROWS],
        f_dirs=mats[_TAG_FDIRS],
    )
    if ops.n_dof != n_dof:
        raise TruncatedError(f"{path}: header says {n_dof} DOF, Z0 has {ops.n_dof}")
    ops.validate()
    return ops
