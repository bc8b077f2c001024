"""Problem instances: integer-box quadratic minimization data and generators.

An instance is  min x'Qx + c'x  over integer x with l <= x <= u componentwise.
Q is dense symmetric, c real, l and u integer vectors with l < u strictly.
Random instances draw a spectrum with a prescribed fraction of negative
eigenvalues, rotate it by a Haar-random orthogonal matrix, and pair it with
a uniform linear term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

BoxSpec = Union[str, tuple]


class InstanceFormatError(ValueError):
    """Raised when instance data (in memory or on disk) violates the format."""


@dataclass
class InstanceMeta:
    p: Optional[float] = None  # requested negative-eigenvalue fraction
    seed: Optional[int] = None  # generator seed


@dataclass(eq=False)
class Instance:
    """One box-constrained quadratic integer program."""

    n: int
    Q: np.ndarray  # (n, n) symmetric
    c: np.ndarray  # (n,)
    l: np.ndarray  # (n,) int64
    u: np.ndarray  # (n,) int64, l < u strictly
    meta: Optional[InstanceMeta] = None

    def __post_init__(self) -> None:
        self.Q = np.asarray(self.Q, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        _check_shapes(self.n, self.Q, self.c, self.l, self.u)
        self.l = _as_int_vector(self.l, "l")
        self.u = _as_int_vector(self.u, "u")
        asym = np.abs(self.Q - self.Q.T).max() if self.n else 0.0
        if asym > 1e-12:
            raise InstanceFormatError(f"Q: asymmetric beyond 1e-12 (|Q - Q'| = {asym:.3e})")
        self.Q = (self.Q + self.Q.T) / 2.0  # exact when already symmetric
        if np.any(self.l >= self.u):
            i = int(np.argmax(self.l >= self.u))
            raise InstanceFormatError(f"l/u: bounds not strict at index {i} (l={self.l[i]}, u={self.u[i]})")
        for arr in (self.Q, self.c, self.l, self.u):
            arr.flags.writeable = False

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        same_meta = (self.meta == other.meta)
        return (
            self.n == other.n
            and np.array_equal(self.Q, other.Q)
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.l, other.l)
            and np.array_equal(self.u, other.u)
            and same_meta
        )

    def objective(self, x: np.ndarray) -> float:
        """x'Qx + c'x for a single point."""
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x + self.c @ x)

    def box_size(self) -> int:
        """Number of lattice points in the box."""
        return int(np.prod((self.u - self.l + 1).astype(object)))


def _check_shapes(n: int, Q: np.ndarray, c: np.ndarray, l, u) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InstanceFormatError(f"n: must be a positive integer, got {n!r}")
    if Q.shape != (n, n):
        raise InstanceFormatError(f"Q: dimension mismatch, expected ({n}, {n}), got {Q.shape}")
    for name, vec in (("c", c), ("l", np.asarray(l)), ("u", np.asarray(u))):
        if np.asarray(vec).shape != (n,):
            raise InstanceFormatError(f"{name}: dimension mismatch, expected ({n},), got {np.asarray(vec).shape}")


def _as_int_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v)
    if arr.dtype.kind not in "iu":
        rounded = np.rint(arr)
        if not np.all(np.abs(arr - rounded) == 0.0):
            j = int(np.argmax(np.abs(arr - rounded) > 0))
            raise InstanceFormatError(f"{name}: non-integer entry at index {j} ({arr[j]!r})")
        arr = rounded
    return arr.astype(np.int64)


def resolve_box(box: BoxSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Turn a box profile into explicit (l, u) integer vectors.

    Accepts "ternary" ({-1,0,1}), "pm5" ({-5,...,5}), or a (l, u) pair of
    scalars or length-n vectors.
    """
    if isinstance(box, str):
        if box == "ternary":
            return -np.ones(n, dtype=np.int64), np.ones(n, dtype=np.int64)
        if box == "pm5":
            return np.full(n, -5, dtype=np.int64), np.full(n, 5, dtype=np.int64)
        raise InstanceFormatError(f"box: unknown profile {box!r}")
    l, u = box
    l = np.broadcast_to(np.asarray(l), (n,)).copy()
    u = np.broadcast_to(np.asarray(u), (n,)).copy()
    return _as_int_vector(l, "l"), _as_int_vector(u, "u")


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR of a Gaussian matrix.

    The R-diagonal sign fix makes the distribution exactly Haar instead of
    QR-convention-dependent.
    """
    Z = rng.standard_normal((n, n))
    Qm, R = np.linalg.qr(Z)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Qm * d


def generate_instance(n: int, p: float, seed: int, box: BoxSpec = "ternary") -> Instance:
    """Draw one random instance.

    floor(p*n) eigenvalues are uniform on [-1, 0], the rest uniform on [0, 1];
    Q = U diag(lam) U' with U Haar-orthogonal, then symmetrized; c is uniform
    on [-1, 1]^n. Deterministic in (n, p, seed, box).

    :param n: number of integer variables (>= 1)
    :param p: negative-eigenvalue fraction, in [0, 1]
    :param seed: RNG seed (counter-based generator, portable streams)
    :param box: "ternary", "pm5", or an explicit (l, u) pair
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InstanceFormatError(f"n: must be a positive integer, got {n!r}")
    if not (0.0 <= p <= 1.0):
        raise InstanceFormatError(f"p: must lie in [0, 1], got {p!r}")
    l, u = resolve_box(box, n)
    rng = np.random.Generator(np.random.Philox(seed))
    # 1e-9 guard: IEEE products like 0.29*100 = 28.999... must still count as 29
    n_neg = int(np.floor(p * n + 1e-9))
    lam = np.concatenate([rng.uniform(-1.0, 0.0, n_neg), rng.uniform(0.0, 1.0, n - n_neg)])
    U = random_orthogonal(n, rng)
    Q = (U * lam) @ U.T
    Q = (Q + Q.T) / 2.0
    c = rng.uniform(-1.0, 1.0, n)
    return Instance(n=n, Q=Q, c=c, l=l, u=u, meta=InstanceMeta(p=float(p), seed=int(seed)))


def write_instance(inst: Instance, path) -> None:
    """Serialize to JSON (row-major Q, full float precision)."""
    doc = {
        "n": inst.n,
        "Q": [float(v) for v in inst.Q.ravel()],
        "c": [float(v) for v in inst.c],
        "l": [int(v) for v in inst.l],
        "u": [int(v) for v in inst.u],
        "meta": None if inst.meta is None else {"p": inst.meta.p, "seed": inst.meta.seed},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def read_instance(path) -> Instance:
    """Load an instance written by write_instance; validates every key."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"not valid JSON: {exc}") from None
    for key in ("n", "Q", "c", "l", "u"):
        if key not in doc:
            raise InstanceFormatError(f"{key}: missing")
    n = doc["n"]
    if not isinstance(n, int) or n < 1:
        raise InstanceFormatError(f"n: must be a positive integer, got {n!r}")
    Q = np.asarray(doc["Q"], dtype=float)
    if Q.shape != (n * n,):
        raise InstanceFormatError(f"Q: dimension mismatch, expected {n * n} entries, got {Q.size}")
    meta_doc = doc.get("meta")
    meta = None
    if meta_doc is not None:
        meta = InstanceMeta(p=meta_doc.get("p"), seed=meta_doc.get("seed"))
    return Instance(n=n, Q=Q.reshape(n, n), c=np.asarray(doc["c"], dtype=float),
                    l=np.asarray(doc["l"]), u=np.asarray(doc["u"]), meta=meta)
