"""Minkowski space in the mainly-minus convention, Lorentz matrices and the mass shell."""

from dataclasses import dataclass, field
from functools import lru_cache, reduce

import numpy as np

from ._validation import as_points, check_positive

LORENTZ_TOL = 1e-12


def metric(dim):
    return np.diag([1.0] + [-1.0] * (dim - 1))


def four_vector(components):
    x = np.asarray(components, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("a four-vector needs at least two components")
    if not np.all(np.isfinite(x)):
        raise ValueError("four-vector components must be finite")
    return x


def minkowski_product(u, v):
    """u⁰v⁰ − u·v, broadcasting over leading axes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    return u[..., 0] * v[..., 0] - np.sum(u[..., 1:] * v[..., 1:], axis=-1)


def _lorentz_defect(matrix):
    g = metric(matrix.shape[0])
    return np.max(np.abs(matrix.T @ g @ matrix - g))


@dataclass(frozen=True, eq=False)
class LorentzTransform:
    """A proper orthochronous Lorentz matrix, validated on construction."""

    matrix: np.ndarray
    tol: float = LORENTZ_TOL
    is_rotation: bool = field(init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise ValueError("Lorentz matrix must be square with d >= 2")
        scale = max(1.0, np.max(np.abs(m)) ** 2)
        if _lorentz_defect(m) > self.tol * scale:
            raise ValueError("matrix does not preserve the Minkowski metric")
        if abs(np.linalg.det(m) - 1.0) > self.tol * scale * m.shape[0]:
            raise ValueError("Lorentz matrix must have determinant +1")
        if m[0, 0] < 1.0 - self.tol:
            raise ValueError("Lorentz matrix must be orthochronous")
        m.setflags(write=False)
        self._store(m)

    def _store(self, m):
        object.__setattr__(self, "matrix", m)
        spatial = max(np.max(np.abs(m[0, 1:])), np.max(np.abs(m[1:, 0]))) <= self.tol
        object.__setattr__(self, "is_rotation", bool(spatial))

    @classmethod
    def _trusted(cls, m, tol):
        # Closed-form boosts and rotations, products and inverses of validated matrices skip the checks.
        out = object.__new__(cls)
        object.__setattr__(out, "tol", tol)
        m.setflags(write=False)
        out._store(m)
        return out

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def spatial_dim(self):
        return self.dim - 1

    def inverse(self):
        cached = self.__dict__.get("_inverse")
        if cached is None:
            g = np.diag(metric(self.dim))
            # g Λᵀ g only flips signs, so it is exactly the inverse.
            cached = LorentzTransform._trusted(g[:, None] * self.matrix.T * g[None, :], self.tol)
            object.__setattr__(cached, "_inverse", self)
            object.__setattr__(self, "_inverse", cached)
        return cached

    def apply(self, points):
        """Apply to one vector or to rows of an (n, d) array."""
        x = np.asarray(points, dtype=float)
        return x @ self.matrix.T

    def __matmul__(self, other):
        if isinstance(other, LorentzTransform):
            return LorentzTransform._trusted(self.matrix @ other.matrix, max(self.tol, other.tol))
        return self.apply(other)

    def __repr__(self):
        return f"LorentzTransform(dim={self.dim})"


@lru_cache(maxsize=None)
def identity(dim):
    return LorentzTransform(np.eye(dim))


def boost(axis, rapidity, dim):
    """Boost along spatial axis `axis` (1..s); boost(1, b) sends (1,0,..) to (cosh b, sinh b, ..)."""
    if not 1 <= axis < dim:
        raise ValueError(f"boost axis must lie in 1..{dim - 1}, got {axis}")
    m = np.eye(dim)
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    if not np.isfinite(ch):
        raise ValueError(f"rapidity {rapidity} overflows")
    m[0, 0] = m[axis, axis] = ch
    m[0, axis] = m[axis, 0] = sh
    return LorentzTransform._trusted(m, LORENTZ_TOL)


def rotation(plane, angle, dim):
    """Rotation by `angle` in the plane of two distinct spatial axes."""
    a, b = plane
    if a == b or not (1 <= a < dim and 1 <= b < dim):
        raise ValueError(f"rotation plane must be two distinct axes in 1..{dim - 1}")
    m = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    m[a, a] = m[b, b] = c
    if not np.isfinite(c):
        raise ValueError(f"angle {angle} is not finite")
    m[a, b] = -s
    m[b, a] = s
    return LorentzTransform._trusted(m, LORENTZ_TOL)


def compose(transforms):
    """Product L1 L2 ... Ln of a non-empty list."""
    transforms = list(transforms)
    if not transforms:
        raise ValueError("compose needs at least one transform")
    return reduce(lambda x, y: x @ y, transforms)


def lorentz_factory(kind, dim, **params):
    if kind == "boost":
        return boost(params["axis"], params["rapidity"], dim)
    if kind == "rotation":
        return rotation(tuple(params["plane"]), params["angle"], dim)
    if kind == "compose":
        return compose(params["transforms"])
    if kind == "identity":
        return identity(dim)
    raise ValueError(f"unknown Lorentz factory kind {kind!r}")


def random_lorentz(rng, dim, max_rapidity=1.0):
    """A random element built from boosts along every axis and spatial rotations."""
    parts = []
    for axis in range(1, dim):
        parts.append(boost(axis, rng.uniform(-max_rapidity, max_rapidity), dim))
    for a in range(1, dim):
        for b in range(a + 1, dim):
            parts.append(rotation((a, b), rng.uniform(-np.pi, np.pi), dim))
    rng.shuffle(parts)
    return compose(parts)


def random_rotation(rng, dim):
    parts = [identity(dim)]
    for a in range(1, dim):
        for b in range(a + 1, dim):
            parts.append(rotation((a, b), rng.uniform(-np.pi, np.pi), dim))
    return compose(parts)


@dataclass(frozen=True, eq=False)
class PoincareElement:
    """The pair (x, Λ) acting as y ↦ Λy + x."""

    lorentz: LorentzTransform
    translation: np.ndarray

    def __post_init__(self):
        x = four_vector(self.translation)
        if x.size != self.lorentz.dim:
            raise ValueError("translation and Lorentz part have different dimensions")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "translation", x)

    @property
    def dim(self):
        return self.lorentz.dim

    def apply(self, points):
        return self.lorentz.apply(points) + self.translation

    def __matmul__(self, other):
        if isinstance(other, PoincareElement):
            return PoincareElement(self.lorentz @ other.lorentz,
                                   self.translation + self.lorentz.apply(other.translation))
        return self.apply(other)

    def inverse(self):
        inv = self.lorentz.inverse()
        return PoincareElement(inv, -inv.apply(self.translation))


def omega(momenta, mass):
    """Shell energy √(k² + m²) for an (..., s) array of momenta."""
    k = np.asarray(momenta, dtype=float)
    return np.sqrt(np.sum(k * k, axis=-1) + mass * mass)


def shell_lift(momenta, mass):
    k = np.asarray(momenta, dtype=float)
    return np.concatenate([omega(k, mass)[..., None], k], axis=-1)


def shell_map(lorentz, momenta, mass):
    """Spatial part of Λ(ω(k), k) for an (..., s) array of momenta."""
    return lorentz.apply(shell_lift(momenta, mass))[..., 1:]


@dataclass(frozen=True, eq=False)
class MassShellPoint:
    mass: float
    momentum: np.ndarray

    def __post_init__(self):
        check_positive(self.mass, "mass")
        k = np.array(self.momentum, dtype=float).reshape(-1)
        k.setflags(write=False)
        object.__setattr__(self, "momentum", k)

    @property
    def energy(self):
        return float(omega(self.momentum, self.mass))

    def four_momentum(self):
        return np.concatenate([[self.energy], self.momentum])


def mass_shell_action(lorentz, point):
    """The shell point whose momentum is the spatial part of Λ(ω, k)."""
    if lorentz.matrix[0, 0] < 1.0 - lorentz.tol:
        raise ValueError("non-orthochronous transforms leave the positive shell")
    if lorentz.spatial_dim != point.momentum.size:
        raise ValueError("dimension mismatch between transform and shell point")
    return MassShellPoint(point.mass, shell_map(lorentz, point.momentum, point.mass))


def boost_velocity(velocity, rapidity, axis=1):
    """Velocity seen from the frame boosted by `rapidity` along `axis`.

    The first affected component is (−sinh β ω + cosh β k)/(cosh β ω − sinh β k)
    for any shell representative (ω, k) of the velocity.
    """
    v = np.asarray(velocity, dtype=float)
    single = v.ndim == 1
    v = as_points(v, name="velocity")
    speed2 = np.sum(v * v, axis=1)
    if np.any(speed2 >= 1.0):
        raise ValueError("velocities must satisfy |v| < 1")
    dim = v.shape[1] + 1
    lift = np.concatenate([np.ones((len(v), 1)), v], axis=1) / np.sqrt(1.0 - speed2)[:, None]
    image = boost(axis, -rapidity, dim).apply(lift)
    out = image[:, 1:] / image[:, :1]
    return out[0] if single else out
