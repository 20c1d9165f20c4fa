"""Morris-Shore reduction and decoherence-free subspaces.

A block operator [[0, B], [B^dagger, 0]] splits into independent two-state
pairs (u_k, v_k) coupled with strength s_k, plus uncoupled spectator states.
For a real 2x2 block this is done in closed form by the rotation R(xi, chi);
for general blocks the singular value decomposition gives the same thing.
Spectators of the noise block W are immune to the bath, so coherent
couplings restricted to them transfer population without decoherence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ModelError, NoiseSpec

__all__ = [
    "RotationAngles",
    "MsDecomposition",
    "DegenerateBranchError",
    "NoNoiseFreeTransferError",
    "rotation_matrix",
    "transform_block_2x2",
    "rotation_angles_2x2",
    "degenerate_branch_2x2",
    "morris_shore_2x2",
    "morris_shore_general",
    "find_dfs",
    "synthesize_dfs_coupling",
    "angles_from_couplings",
]

BRANCH_TOL = 1e-9
RANK_TOL = 1e-10
RESIDUAL_TOL = 1e-10


class DegenerateBranchError(ArithmeticError):
    """The closed-form angles are undefined; use :func:`degenerate_branch_2x2`."""


class NoNoiseFreeTransferError(ValueError):
    """The noise block leaves no decoherence-free state on one of the levels."""


@dataclass(frozen=True)
class RotationAngles:
    """Upper-level angle ``xi`` and lower-level angle ``chi``, both in (-pi/2, pi/2]."""

    xi: float
    chi: float


@dataclass(frozen=True)
class MsDecomposition:
    """Morris-Shore basis of an M x K coupling block.

    ``upper_basis[k]`` and ``lower_basis[k]`` for ``k < len(pair_couplings)``
    form the k-th pair; the remaining vectors (and any pair with zero
    coupling) are spectators, listed in ``dfs_upper`` / ``dfs_lower``.
    Vectors are rows, expressed in the level's own coordinates.
    """

    upper_basis: np.ndarray
    lower_basis: np.ndarray
    pair_couplings: np.ndarray
    dfs_upper: tuple
    dfs_lower: tuple

    def transformed(self, block):
        """Return U^dagger B V, rectangular-diagonal for a matching block."""
        return self.upper_basis.conj() @ np.asarray(block) @ self.lower_basis.T

    def residual(self, block):
        t = self.transformed(block)
        r = min(t.shape)
        off = t.copy()
        off[np.arange(r), np.arange(r)] = 0.0
        diag_err = np.abs(np.abs(np.diag(t)[:r]) - self.pair_couplings[:r])
        return float(max(np.max(np.abs(off), initial=0.0), np.max(diag_err, initial=0.0)))

    def embedded_dfs(self):
        """DFS vectors as rows of length M + K (upper first)."""
        m, k = self.upper_basis.shape[0], self.lower_basis.shape[0]
        rows = []
        for i in self.dfs_upper:
            v = np.zeros(m + k, dtype=self.upper_basis.dtype)
            v[:m] = self.upper_basis[i]
            rows.append(v)
        for i in self.dfs_lower:
            v = np.zeros(m + k, dtype=self.lower_basis.dtype)
            v[m:] = self.lower_basis[i]
            rows.append(v)
        return np.array(rows).reshape(len(rows), m + k)


def rotation_matrix(xi: float, chi: float) -> np.ndarray:
    """4x4 block rotation R(xi, chi)."""
    c1, s1, c2, s2 = np.cos(xi), np.sin(xi), np.cos(chi), np.sin(chi)
    return np.array(
        [
            [c1, s1, 0.0, 0.0],
            [-s1, c1, 0.0, 0.0],
            [0.0, 0.0, c2, s2],
            [0.0, 0.0, -s2, c2],
        ]
    )


def transform_block_2x2(w, xi, chi):
    """Entries of the rotated block, R(xi, chi) X R(xi, chi)^-1, off-diagonal part."""
    (x13, x14), (x23, x24) = np.asarray(w, dtype=float)
    c1, s1, c2, s2 = np.cos(xi), np.sin(xi), np.cos(chi), np.sin(chi)
    a = x13 * c1 + x23 * s1
    b = x14 * c1 + x24 * s1
    p = x23 * c1 - x13 * s1
    q = x24 * c1 - x14 * s1
    return np.array([[c2 * a + s2 * b, c2 * b - s2 * a], [c2 * p + s2 * q, c2 * q - s2 * p]])


def _branch_terms(w):
    (x13, x14), (x23, x24) = np.asarray(w, dtype=float)
    a = x24**2 - x13**2
    b = x23**2 - x14**2
    c = ((x14 + x23) ** 2 + (x13 - x24) ** 2) * ((x14 - x23) ** 2 + (x13 + x24) ** 2)
    d = x13 * x23 + x14 * x24
    e = x13 * x14 + x23 * x24
    return a, b, c, d, e


def _wrap_half_turn(angle):
    """Map an angle into (-pi/2, pi/2]; a half turn only flips basis signs."""
    a = (angle + np.pi / 2) % np.pi - np.pi / 2
    if a <= -np.pi / 2 + 1e-15:
        a += np.pi
    return float(a)


def rotation_angles_2x2(w) -> RotationAngles:
    """Closed-form (xi, chi) annihilating the (1,4) and (2,3) entries of a real 2x2 block.

    Raises
    ------
    DegenerateBranchError
        If either D = x13 x23 + x14 x24 or E = x13 x14 + x23 x24 vanishes
        (relative to ||W||^2), where the closed form is undefined.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (2, 2):
        raise ModelError(f"expected a 2x2 block, got shape {w.shape}")
    a, b, c, d, e = _branch_terms(w)
    scale = float(np.sum(w**2))
    if scale == 0.0 or abs(d) <= BRANCH_TOL * scale or abs(e) <= BRANCH_TOL * scale:
        raise DegenerateBranchError(f"D={d:.3e}, E={e:.3e}")
    root = np.sqrt(c)
    angles = None
    for sign in (-1.0, 1.0):
        xi = np.arctan(_quadratic_root(a + b, d, sign * root))
        chi = np.arctan(_quadratic_root(a - b, e, sign * root))
        t = transform_block_2x2(w, xi, chi)
        if max(abs(t[0, 1]), abs(t[1, 0])) <= RESIDUAL_TOL * max(1.0, np.sqrt(scale)):
            angles = RotationAngles(float(xi), float(chi))
            break
    if angles is None:
        # neither root passed the residual check; keep the primary root
        angles = RotationAngles(
            float(np.arctan(_quadratic_root(a + b, d, -root))),
            float(np.arctan(_quadratic_root(a - b, e, -root))),
        )
    return angles


def _quadratic_root(p, q, signed_root):
    """(p + signed_root) / (2 q), evaluated without cancellation.

    The two candidates are roots of q t^2 - p t - q = 0, so their product is
    -1; the cancelling one is obtained from the other.
    """
    if p * signed_root < 0:
        return -2.0 * q / (p - signed_root)
    return (p + signed_root) / (2.0 * q)


def angles_from_couplings(g) -> RotationAngles:
    """Rotation angles of a real 2x2 coupling block (same closed form as for W).

    Falls back to the degenerate-branch pairing when D or E vanish.
    """
    g = np.asarray(g)
    if np.iscomplexobj(g):
        if np.any(np.abs(g.imag) > 0):
            raise ModelError("closed-form angles need a real coupling block")
        g = g.real
    try:
        return rotation_angles_2x2(g)
    except DegenerateBranchError:
        return _angles_from_decomposition(degenerate_branch_2x2(g))


def _angles_from_decomposition(dec: MsDecomposition) -> RotationAngles:
    # The coupled pair goes to the second rotated states, as in the closed
    # form: rows of R are (cos, sin) and (-sin, cos).
    k = int(np.argmax(dec.pair_couplings)) if len(dec.pair_couplings) else 0
    u = dec.upper_basis[k]
    v = dec.lower_basis[k]
    xi = _wrap_half_turn(np.arctan2(-u[0], u[1]))
    chi = _wrap_half_turn(np.arctan2(-v[0], v[1]))
    return RotationAngles(xi, chi)


def _complete_2d(v):
    """Unit vector orthogonal to the 2-vector v, chosen as (-v1, v0)."""
    return np.array([-v[1], v[0]])


def degenerate_branch_2x2(w) -> MsDecomposition:
    """Explicit pairing for a real 2x2 block with D = 0 or E = 0.

    With D = 0 the rows (x13, x14) and (x23, x24) are orthogonal lower-level
    vectors paired with |1> and |2>; with E = 0 the columns (x13, x23) and
    (x14, x24) are orthogonal upper-level vectors paired with |3> and |4>.
    The pair index order follows the bare states (|1>,|2> or |3>,|4>).
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (2, 2):
        raise ModelError(f"expected a 2x2 block, got shape {w.shape}")
    _, _, _, d, e = _branch_terms(w)
    scale = float(np.sum(w**2))
    if scale == 0.0:
        eye = np.eye(2)
        return MsDecomposition(eye, eye.copy(), np.zeros(2), (0, 1), (0, 1))

    if abs(d) <= BRANCH_TOL * scale:
        upper = np.eye(2)
        rows = [w[0], w[1]]
        lower = _orthonormal_pair(rows)
        couplings = np.array([upper[k] @ w @ lower[k] for k in range(2)])
    elif abs(e) <= BRANCH_TOL * scale:
        lower = np.eye(2)
        cols = [w[:, 0], w[:, 1]]
        upper = _orthonormal_pair(cols)
        couplings = np.array([upper[k] @ w @ lower[k] for k in range(2)])
    else:
        raise ValueError("degenerate branch requires D = 0 or E = 0")

    # nonnegative couplings: flip the lower partner where needed
    for k in range(2):
        if couplings[k] < 0:
            lower[k] = -lower[k]
            couplings[k] = -couplings[k]
    tol = RANK_TOL * max(1.0, np.sqrt(scale))
    zero = tuple(k for k in range(2) if couplings[k] <= tol)
    couplings = np.where(couplings <= tol, 0.0, couplings)
    return MsDecomposition(upper, lower, couplings, zero, zero)


def _orthonormal_pair(vectors):
    """Normalize two orthogonal 2-vectors; a zero vector is replaced by the complement."""
    a, b = (np.asarray(v, dtype=float) for v in vectors)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 and nb == 0:
        return np.eye(2)
    if na == 0:
        b = b / nb
        a = -_complete_2d(b)
    elif nb == 0:
        a = a / na
        b = _complete_2d(a)
    else:
        a, b = a / na, b / nb
    return np.array([a, b])


def morris_shore_2x2(w) -> MsDecomposition:
    """Decomposition of a real 2x2 block via the closed form, pairs sorted by coupling."""
    try:
        ang = rotation_angles_2x2(w)
    except DegenerateBranchError:
        dec = degenerate_branch_2x2(w)
        return _sorted(dec.upper_basis, dec.lower_basis, dec.pair_couplings)
    r = rotation_matrix(ang.xi, ang.chi)
    upper = r[:2, :2].copy()
    lower = r[2:, 2:].copy()
    t = transform_block_2x2(w, ang.xi, ang.chi)
    couplings = np.array([t[0, 0], t[1, 1]])
    for k in range(2):
        if couplings[k] < 0:
            lower[k] = -lower[k]
            couplings[k] = -couplings[k]
    return _sorted(upper, lower, couplings)


def _sorted(upper, lower, couplings):
    order = np.argsort(-couplings, kind="stable")
    upper, lower, couplings = upper[order], lower[order], couplings[order]
    tol = RANK_TOL * max(1.0, couplings.max(initial=0.0))
    zero = tuple(k for k in range(len(couplings)) if couplings[k] <= tol)
    couplings = np.where(couplings <= tol, 0.0, couplings)
    return MsDecomposition(upper, lower, couplings, zero, zero)


def _fix_phase(v):
    """Rotate a vector's global phase so its first nonzero entry is real positive."""
    idx = np.flatnonzero(np.abs(v) > 1e-12)
    if idx.size == 0:
        return v, 1.0
    z = v[idx[0]]
    phase = np.conj(z) / abs(z)
    return v * phase, phase


def morris_shore_general(block) -> MsDecomposition:
    """SVD route: B = U diag(s) V^dagger, pairs (U[:, k], V[:, k]) with coupling s_k.

    Conventions: couplings descending, each upper pair vector (and each
    spectator vector) has its first nonzero component real and positive; the
    partner lower vector takes the same phase so couplings stay real.
    """
    b = np.atleast_2d(np.asarray(block))
    m, k = b.shape
    cplx = np.iscomplexobj(b)
    u, s, vh = np.linalg.svd(b)
    v = vh.conj().T
    r = min(m, k)
    tol = RANK_TOL * max(1.0, s.max(initial=0.0))
    rank = int(np.sum(s > tol))
    upper = np.empty((m, m), dtype=u.dtype)
    lower = np.empty((k, k), dtype=v.dtype)
    for i in range(m):
        vec, ph = _fix_phase(u[:, i])
        upper[i] = vec
        if i < rank:
            lower[i] = v[:, i] * ph
    for i in range(rank, k):
        lower[i], _ = _fix_phase(v[:, i])
    couplings = np.zeros(r)
    couplings[:rank] = s[:rank]
    if not cplx:
        upper, lower = upper.real, lower.real
    dfs_upper = tuple(range(rank, m))
    dfs_lower = tuple(range(rank, k))
    return MsDecomposition(upper, lower, couplings, dfs_upper, dfs_lower)


class DfsSplit(NamedTuple):
    """Decoherence-free vectors and their noisy complement, rows of length N."""

    dfs: np.ndarray
    noisy: np.ndarray
    decomposition: MsDecomposition


def find_dfs(noise: NoiseSpec, m_upper: int, n_total: int) -> DfsSplit:
    """States annihilated by the noise operator, from the MS basis of W."""
    noise.check_shape(n_total, m_upper)
    dec = morris_shore_general(noise.noise_couplings)
    dfs = dec.embedded_dfs()
    m = m_upper
    noisy = []
    for i in range(dec.upper_basis.shape[0]):
        if i not in dec.dfs_upper:
            vec = np.zeros(n_total)
            vec[:m] = dec.upper_basis[i]
            noisy.append(vec)
    for i in range(dec.lower_basis.shape[0]):
        if i not in dec.dfs_lower:
            vec = np.zeros(n_total)
            vec[m:] = dec.lower_basis[i]
            noisy.append(vec)
    noisy = np.array(noisy).reshape(len(noisy), n_total)
    return DfsSplit(dfs, noisy, dec)


def synthesize_dfs_coupling(noise: NoiseSpec, g_magnitude: float, m_upper=None, n_total=None):
    """Coupling block that links one upper and one lower DFS state with strength g.

    Returns G = g * a b^T where a and b are the first upper and lower DFS
    vectors; every other MS-frame coupling vanishes.

    Raises
    ------
    NoNoiseFreeTransferError
        If either level has no decoherence-free state.
    """
    w = noise.noise_couplings
    m_upper = w.shape[0] if m_upper is None else m_upper
    n_total = w.shape[0] + w.shape[1] if n_total is None else n_total
    noise.check_shape(n_total, m_upper)
    dec = morris_shore_general(w)
    if not dec.dfs_upper or not dec.dfs_lower:
        raise NoNoiseFreeTransferError(
            "no noise-free transfer possible: "
            f"{len(dec.dfs_upper)} upper and {len(dec.dfs_lower)} lower DFS states"
        )
    a = dec.upper_basis[dec.dfs_upper[0]]
    b = dec.lower_basis[dec.dfs_lower[0]]
    return g_magnitude * np.outer(a, b.conj())
