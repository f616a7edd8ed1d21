"""Precursor-ordered products of one-particle vectors and their Poincaré action."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from ._validation import PreconditionError
from .minkowski import PoincareElement, identity, omega, shell_lift, shell_map
from .wavepacket import box_boundary
from .wedge import GENERAL_TAG, VELOCITY_TAG, RegionSample, in_lstar, precursor_order

AMPLITUDE_FLOOR = 1e-10
DIRECTIONS = ("in", "out")


@dataclass(frozen=True, eq=False)
class OneParticleVector:
    """Grid amplitudes of a one-particle state with the tight box of entries above the floor."""

    amplitudes: np.ndarray
    axes: tuple
    mass: float
    support_lo: np.ndarray = None
    support_hi: np.ndarray = None

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        shape = tuple(a.size for a in axes)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(shape)
        amps = np.where(np.abs(amps) > AMPLITUDE_FLOOR, amps, 0.0)
        nz = np.argwhere(amps != 0)
        if nz.size == 0:
            raise PreconditionError("one-particle vector has no amplitude above the floor")
        lo = np.array([axes[j][nz[:, j].min()] for j in range(len(axes))])
        hi = np.array([axes[j][nz[:, j].max()] for j in range(len(axes))])
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "support_lo", lo)
        object.__setattr__(self, "support_hi", hi)

    @classmethod
    def from_model(cls, amplitudes, model):
        return cls(np.asarray(amplitudes).reshape(model.grid_shape), model.axes, model.mass)

    @property
    def spatial_dim(self):
        return len(self.axes)

    @property
    def flat(self):
        return self.amplitudes.reshape(-1)

    def norm(self):
        return float(np.linalg.norm(self.flat))

    def inner(self, other):
        return complex(np.vdot(self.flat, other.flat))

    def support_sample(self):
        return box_boundary(self.support_lo, self.support_hi)


def vector_velocity_support(psi, lorentz=None):
    """Ray cone of the support box cut by Λ·{x⁰ = 1}: each shell point p scaled by 1/(Λ⁻¹p)⁰."""
    lorentz = identity(psi.spatial_dim + 1) if lorentz is None else lorentz
    if lorentz.matrix[0, 0] < 1.0 - lorentz.tol:
        raise PreconditionError("frame must be orthochronous")
    shell = shell_lift(psi.support_sample(), psi.mass)
    times = lorentz.inverse().apply(shell)[:, 0]
    pts = shell / times[:, None]
    is_identity = np.array_equal(lorentz.matrix, np.eye(lorentz.dim))
    if is_identity:
        return RegionSample(pts, VELOCITY_TAG, lorentz)
    return RegionSample(pts, GENERAL_TAG)


def _require_lstar(wedge, lorentz):
    if not in_lstar(lorentz, wedge):
        raise PreconditionError("frame does not map the right wedge onto the reference wedge")


def ordering_check(first, second, wedge, lorentz=None):
    """True iff first ≺_W second, compared through the Λ-adapted velocity supports."""
    lorentz = wedge.lorentz if lorentz is None else lorentz
    _require_lstar(wedge, lorentz)
    return precursor_order(vector_velocity_support(first, lorentz),
                           vector_velocity_support(second, lorentz), wedge)


def _chain_holds(vectors, wedge, lorentz, direction):
    """First offending pair (i, j), i < j, or None when the chain is ordered."""
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            a, b = vectors[i], vectors[j]
            ok = ordering_check(a, b, wedge, lorentz) if direction == "in" else ordering_check(b, a, wedge, lorentz)
            if not ok:
                return i, j
    return None


@dataclass(frozen=True, eq=False)
class OrderedProductState:
    """Ψ₁ ⊗ … ⊗ Ψ_n with Ψ₁ ≺ … ≺ Ψ_n ("in") or Ψ₁ ≻ … ≻ Ψ_n ("out") for the wedge W."""

    vectors: tuple
    wedge: object
    frame: object
    direction: str

    @property
    def n(self):
        return len(self.vectors)

    def norm(self):
        return float(np.prod([v.norm() for v in self.vectors])) if self.vectors else 1.0

    def plain_tensor(self):
        """Embedding into the unsymmetrized coefficient tensor; n = 0 gives the scalar 1."""
        out = np.ones(())
        for v in self.vectors:
            out = np.multiply.outer(out, v.flat)
        return out

    def records(self):
        return {
            "direction": self.direction,
            "wedge_lorentz": self.wedge.lorentz.matrix.tolist(),
            "wedge_translation": self.wedge.translation.tolist(),
            "wedge_complemented": bool(self.wedge.complemented),
            "frame": self.frame.matrix.tolist(),
            "vectors": [[(int(i), complex(c).real, complex(c).imag) for i, c in enumerate(v.flat) if c != 0]
                        for v in self.vectors],
        }


def ordered_tensor(vectors, wedge, lorentz=None, direction="out"):
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    lorentz = wedge.lorentz if lorentz is None else lorentz
    _require_lstar(wedge, lorentz)
    vectors = tuple(vectors)
    bad = _chain_holds(vectors, wedge, lorentz, direction)
    if bad is not None:
        rel = "≺" if direction == "in" else "≻"
        raise PreconditionError(f"factors {bad[0]} and {bad[1]} violate the {rel} ordering for {wedge!r}")
    return OrderedProductState(vectors, wedge, lorentz, direction)


def _resample(values, axes, points, order=3):
    origin = np.array([a[0] for a in axes])
    spacing = np.array([a[1] - a[0] for a in axes])
    idx = ((points - origin) / spacing).T
    re = map_coordinates(values.real, idx, order=order, mode="constant", cval=0.0)
    im = map_coordinates(values.imag, idx, order=order, mode="constant", cval=0.0)
    return re + 1j * im


def one_particle_action(element, psi):
    """U(x, Λ) on a grid amplitude: √(ω(Λ_m⁻¹p)/ω(p)) ψ(Λ_m⁻¹p), then the phase e^{i(ω t − p·x)}."""
    m = psi.mass
    grid = np.stack(np.meshgrid(*psi.axes, indexing="ij"), axis=-1).reshape(-1, psi.spatial_dim)
    lorentz = element.lorentz
    vals = psi.flat
    if not np.array_equal(lorentz.matrix, np.eye(lorentz.dim)):
        image = shell_map(lorentz, shell_lift(box_boundary(psi.support_lo, psi.support_hi), m)[:, 1:], m)
        h = np.array([a[1] - a[0] for a in psi.axes])
        lo_edge = np.array([a[0] for a in psi.axes]) + 2 * h
        hi_edge = np.array([a[-1] for a in psi.axes]) - 2 * h
        if np.any(image.min(axis=0) < lo_edge) or np.any(image.max(axis=0) > hi_edge):
            raise PreconditionError("transformed support leaves the momentum grid")
        source = shell_map(lorentz.inverse(), grid, m)
        # Spline ringing outside the source support box is not part of ψ.
        inside = np.all((source >= psi.support_lo - h) & (source <= psi.support_hi + h), axis=1)
        vals = np.where(inside, np.sqrt(omega(source, m) / omega(grid, m)) * _resample(psi.amplitudes, psi.axes, source), 0.0)
    x = element.translation
    vals = vals * np.exp(1j * (omega(grid, m) * x[0] - grid @ x[1:]))
    return OneParticleVector(vals.reshape(psi.amplitudes.shape), psi.axes, m)


def u0_action(element, state):
    """Factor-wise U(λ); the reference wedge becomes λW and the frame ΛΛ_state."""
    if not isinstance(element, PoincareElement):
        raise TypeError("u0_action expects a PoincareElement")
    vectors = tuple(one_particle_action(element, v) for v in state.vectors)
    return OrderedProductState(vectors, state.wedge.transformed(element),
                               element.lorentz @ state.frame, state.direction)


__all__ = [
    "OneParticleVector", "OrderedProductState", "vector_velocity_support", "ordering_check",
    "ordered_tensor", "one_particle_action", "u0_action", "AMPLITUDE_FLOOR",
]
