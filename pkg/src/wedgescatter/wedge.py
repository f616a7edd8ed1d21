"""Wedge regions, the precursor order on finite samples, and related geometry."""

from dataclasses import dataclass

import numpy as np

from ._validation import (InvariantViolation, PreconditionError, as_points,
                          check_random_state)
from .minkowski import (LorentzTransform, PoincareElement, boost, compose,
                        four_vector, identity, random_rotation, rotation)

UPRIGHT_TOL = 1e-10
VELOCITY_TAG = "velocity-support"
GENERAL_TAG = "general"


def _half_turn(dim):
    """Rotation by π in the (x¹, x²) plane, written with exact entries."""
    m = np.eye(dim)
    m[1, 1] = m[2, 2] = -1.0
    return LorentzTransform(m)


@dataclass(frozen=True, eq=False)
class Wedge:
    """The region ΛW_r + x, or −ΛW_r + x when `complemented` in d = 2.

    For s ≥ 2 the complement is folded into the Lorentz part, and the
    flag only records which side of the pair the wedge belongs to.
    """

    lorentz: LorentzTransform
    translation: np.ndarray = None
    complemented: bool = False

    def __post_init__(self):
        x = np.zeros(self.lorentz.dim) if self.translation is None else four_vector(self.translation)
        if x.size != self.lorentz.dim:
            raise ValueError("translation and Lorentz part have different dimensions")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "translation", x)

    @classmethod
    def right(cls, dim):
        return cls(identity(dim))

    @property
    def dim(self):
        return self.lorentz.dim

    @property
    def sigma(self):
        """Deformation sign attached to the wedge: +1, or −1 for complements."""
        return -1 if self.complemented else 1

    @property
    def _reflected(self):
        return self.complemented and self.dim == 2

    def pullback(self, points):
        """Coordinates in which the wedge becomes the right wedge |t| < x¹."""
        y = self.lorentz.inverse().apply(as_points(points, self.dim) - self.translation)
        return -y if self._reflected else y

    def contains(self, points):
        single = np.asarray(points).ndim == 1
        y = self.pullback(points)
        inside = np.abs(y[:, 0]) < y[:, 1]
        return bool(inside[0]) if single else inside

    def centered(self):
        return Wedge(self.lorentz, None, self.complemented)

    def translated(self, shift):
        return Wedge(self.lorentz, self.translation + four_vector(shift), self.complemented)

    def transformed(self, element):
        """Image under a Poincaré element λ: λW = Λ_λ Λ W_r + Λ_λ x + a."""
        if isinstance(element, LorentzTransform):
            element = PoincareElement(element, np.zeros(self.dim))
        return Wedge(element.lorentz @ self.lorentz, element.apply(self.translation),
                     self.complemented)

    def half_space_normals(self):
        """Covectors l with W_c = {y : l·y > 0 for both rows}, in Euclidean pairing."""
        inv = self.lorentz.inverse().matrix
        base = np.zeros((2, self.dim))
        base[0, 0], base[0, 1] = -1.0, 1.0
        base[1, 0], base[1, 1] = 1.0, 1.0
        rows = base @ inv
        return -rows if self._reflected else rows

    def to_text(self):
        """Header `wedge <d> <complemented>`, then Λ row by row, then the translation."""
        lines = [f"wedge {self.dim} {int(self.complemented)}"]
        lines += [_row(r) for r in self.lorentz.matrix]
        lines.append(_row(self.translation))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = _text_rows(text, "wedge")
        dim, flag = (int(v) for v in rows[0])
        body = np.array(rows[1:], dtype=float)
        if body.shape != (dim + 1, dim):
            raise ValueError(f"wedge text needs {dim + 1} rows of {dim} numbers")
        return cls(LorentzTransform(body[:dim]), body[dim], bool(flag))

    def __repr__(self):
        return f"Wedge(dim={self.dim}, complemented={self.complemented})"


def wedge_contains(wedge, point):
    return wedge.contains(point)


def causal_complement(wedge):
    if wedge.dim == 2:
        return Wedge(wedge.lorentz, wedge.translation, not wedge.complemented)
    return Wedge(wedge.lorentz @ _half_turn(wedge.dim), wedge.translation, not wedge.complemented)


def is_upright(wedge, tol=UPRIGHT_TOL):
    """True when the edge of W_c is parallel to the time-zero hyperplane."""
    if wedge.dim == 2:
        return True
    edge = wedge.lorentz.matrix[:, 2:]
    return bool(np.all(np.abs(edge[0]) <= tol))


@dataclass(frozen=True, eq=False)
class RegionSample:
    """A finite point set; velocity-support samples lie on Λ·{x⁰ = 1}."""

    points: np.ndarray
    tag: str = GENERAL_TAG
    frame: LorentzTransform = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)
        else:
            pts = as_points(pts)
        if self.tag not in (VELOCITY_TAG, GENERAL_TAG):
            raise ValueError(f"unknown region tag {self.tag!r}")
        if self.tag == VELOCITY_TAG and len(pts):
            frame = self.frame or identity(pts.shape[1])
            object.__setattr__(self, "frame", frame)
            times = frame.inverse().apply(pts)[:, 0]
            if np.max(np.abs(times - 1.0)) > 1e-9:
                raise ValueError("velocity-support points must lie on the frame's unit-time hyperplane")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_velocities(cls, velocities, frame=None):
        v = as_points(velocities)
        pts = np.concatenate([np.ones((len(v), 1)), v], axis=1)
        if frame is not None:
            pts = frame.apply(pts)
        return cls(pts, VELOCITY_TAG, frame)

    def __len__(self):
        return len(self.points)

    def to_text(self):
        """Header `region <tag> <n> <d>`, the frame rows for velocity supports, then the points."""
        n, d = self.points.shape
        lines = [f"region {self.tag} {n} {d}"]
        if self.tag == VELOCITY_TAG and n:
            lines += [_row(r) for r in self.frame.matrix]
        lines += [_row(p) for p in self.points]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = _text_rows(text, "region")
        tag, n, d = rows[0][0], int(rows[0][1]), int(rows[0][2])
        body = np.array(rows[1:], dtype=float).reshape(-1, d)
        frame = None
        if tag == VELOCITY_TAG and n:
            frame, body = LorentzTransform(body[:d]), body[d:]
        if len(body) != n:
            raise ValueError(f"region text declares {n} points but holds {len(body)}")
        return cls(body.reshape(n, d), tag, frame)

    def transformed(self, element):
        return RegionSample(element.apply(self.points), GENERAL_TAG)


def _row(values):
    return " ".join(repr(float(v)) for v in values)


def _text_rows(text, kind):
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    if not rows or rows[0][0] != kind:
        raise ValueError(f"text does not start with a `{kind}` header")
    return [rows[0][1:]] + rows[1:]


def _points_of(sample):
    return sample.points if isinstance(sample, RegionSample) else as_points(sample)


def precursor_order(first, second, wedge):
    """True iff first ≺_W second, i.e. every difference q − p lies in W_c.

    Only finite samples are compared. A statement about convex hulls is
    certified when the caller passes their extreme points, because W_c is
    a convex cone. Empty samples are ordered vacuously.
    """
    p = _points_of(first)
    q = _points_of(second)
    if len(p) == 0 or len(q) == 0:
        return True
    diffs = (q[:, None, :] - p[None, :, :]).reshape(-1, p.shape[1])
    # Membership in W_c, written out because this sits in the inner loop of the property suites.
    y = wedge.lorentz.inverse().apply(diffs)
    if wedge._reflected:
        y = -y
    return bool(np.all(np.abs(y[:, 0]) < y[:, 1]))


def quasi_total_witness(v1, v2, v1p, v2p, wedge):
    """Report which of v2p ≺ v1 or v2 ≺ v1p holds, given v2 ≺ v1 and v2p ≺ v1p.

    Returns "first", "second" or "both". Finding neither would contradict
    the quasi-totality of the order for upright wedges, so it raises
    InvariantViolation instead of returning.
    """
    if not is_upright(wedge):
        raise PreconditionError("quasi-totality needs an upright wedge")
    for sample in (v1, v2, v1p, v2p):
        if sample.tag != VELOCITY_TAG or sample.frame is None or not np.array_equal(sample.frame.matrix, np.eye(wedge.dim)):
            raise PreconditionError("samples must be unit-time velocity supports")
    if not precursor_order(v2, v1, wedge) or not precursor_order(v2p, v1p, wedge):
        raise PreconditionError("input pairs are not ordered")
    first = precursor_order(v2p, v1, wedge)
    second = precursor_order(v2, v1p, wedge)
    if first and second:
        return "both"
    if first:
        return "first"
    if second:
        return "second"
    raise InvariantViolation("neither ordering holds for an upright wedge")


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != (2,) or hi.shape != (2,) or np.any(hi <= lo):
            raise ValueError("box needs two (lo, hi) ranges with lo < hi")

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=(n, 2))


@dataclass(frozen=True)
class Disk:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")

    def sample(self, rng, n):
        r = self.radius * np.sqrt(rng.uniform(size=n))
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


@dataclass(frozen=True)
class ForbiddenRegionEstimate:
    fraction: float
    standard_error: float
    n_samples: int


def classify_cones(beta, points):
    """+1 for C = {|sinh β x²| < x¹}, −1 for −C, 0 for the forbidden remainder."""
    pts = as_points(points, 2)
    width = np.abs(np.sinh(beta) * pts[:, 1])
    labels = np.zeros(len(pts), dtype=int)
    labels[width < pts[:, 0]] = 1
    labels[width < -pts[:, 0]] = -1
    return labels


def forbidden_region_measure(beta, region, n_samples, seed=0):
    """Monte Carlo fraction of `region` (Box or Disk in the plane) outside C ∪ −C."""
    if not isinstance(region, (Box, Disk)):
        raise ValueError("region must be a Box or a Disk")
    if n_samples < 1000:
        raise ValueError("at least 10^3 samples are required")
    rng = check_random_state(seed)
    labels = classify_cones(beta, region.sample(rng, int(n_samples)))
    frac = float(np.mean(labels == 0))
    err = float(np.sqrt(frac * (1.0 - frac) / n_samples))
    return ForbiddenRegionEstimate(frac, err, int(n_samples))


def forbidden_fraction_disk(beta):
    """Exact fraction for rotation-invariant domains: 1 − 2·arctan(1/|sinh β|)/π."""
    c = abs(np.sinh(beta))
    if c == 0.0:
        return 0.0
    return 1.0 - 2.0 * np.arctan(1.0 / c) / np.pi


def forbidden_fraction_box(beta, half_widths):
    """Exact fraction for the centered box [−a, a] × [−b, b]."""
    a, b = half_widths
    c = abs(np.sinh(beta))
    if c * b <= a:
        return c * b / (2.0 * a)
    return 1.0 - a / (2.0 * c * b)


def in_stabilizer(lorentz, tol=1e-10):
    """Structural test that Λ maps W_r onto itself: an x¹-boost times a rotation of x²..xˢ."""
    m = lorentz.matrix
    d = m.shape[0]
    if d > 2 and (np.max(np.abs(m[:2, 2:])) > tol or np.max(np.abs(m[2:, :2])) > tol):
        return False
    block = m[:2, :2]
    return bool(abs(block[0, 0] - block[1, 1]) <= tol * max(1.0, abs(block[0, 0]))
                and abs(block[0, 1] - block[1, 0]) <= tol * max(1.0, abs(block[0, 0]))
                and block[1, 1] > 0)


def _sampled_stabilizes(lorentz, rng, n=1000, margin=1e-9):
    d = lorentz.dim
    pts = rng.normal(size=(n, d))
    right = Wedge.right(d)
    images = lorentz.apply(pts)
    y = images
    clear = (np.abs(np.abs(pts[:, 0]) - pts[:, 1]) > margin) & (np.abs(np.abs(y[:, 0]) - y[:, 1]) > margin)
    return bool(np.all(right.contains(pts[clear]) == right.contains(images[clear])))


def stabilizer_factorize(lorentz, seed=0):
    """Split a stabilizer element of W_r as Λ_β · R with R fixing x⁰ and x¹."""
    rng = check_random_state(seed)
    if not _sampled_stabilizes(lorentz, rng) or not in_stabilizer(lorentz):
        raise PreconditionError("transform does not stabilize the right wedge")
    m = lorentz.matrix
    beta = float(np.sign(m[1, 0]) * np.arccosh(max(m[0, 0], 1.0)))
    boost_part = boost(1, beta, lorentz.dim)
    rest = boost_part.inverse().matrix @ m
    d = lorentz.dim
    expected = np.eye(d)
    expected[2:, 2:] = rest[2:, 2:]
    if np.max(np.abs(rest - expected)) > 1e-10:
        raise PreconditionError("factorization residual exceeds 1e-10")
    return beta, LorentzTransform(expected)


def stabilizer_element(beta, angles, dim):
    """Λ_β times rotations of the edge plane(s); `angles` are used pairwise on axes 2..s."""
    parts = [boost(1, beta, dim)]
    k = 0
    for a in range(2, dim):
        for b in range(a + 1, dim):
            if k < len(angles):
                parts.append(rotation((a, b), angles[k], dim))
            k += 1
    return compose(parts)


def in_lstar(lorentz, wedge):
    """Λ ∈ L*(W), i.e. ΛW_r = W_c."""
    if wedge.dim == 2 and wedge.complemented:
        return False
    return in_stabilizer(wedge.lorentz.inverse() @ lorentz)


def lstar_element(wedge, beta=0.0, angles=()):
    if wedge.dim == 2 and wedge.complemented:
        raise PreconditionError("no proper orthochronous transform maps W_r onto a left wedge in d = 2")
    return wedge.lorentz @ stabilizer_element(beta, angles, wedge.dim)


def random_upright_wedge(rng, dim, spread=1.0):
    return Wedge(random_rotation(rng, dim), rng.normal(scale=spread, size=dim))


def norm_c(x):
    """|x|_c = |x⁰| + |x|."""
    x = np.asarray(x, dtype=float)
    return abs(x[0]) + float(np.linalg.norm(x[1:]))


@dataclass(frozen=True)
class SeparationCertificate:
    epsilon: float
    delta_max: float
    tau_star: float


def _ball_inside(diffs, normals, eps):
    """All |·|_c-balls of radius eps around the rows of `diffs` lie in the open cone."""
    dual = np.maximum(np.abs(normals[:, 0]), np.linalg.norm(normals[:, 1:], axis=1))
    return bool(np.all(diffs @ normals.T > eps * dual[None, :]))


def separation_epsilon_exact(diffs, wedge):
    normals = wedge.centered().half_space_normals()
    dual = np.maximum(np.abs(normals[:, 0]), np.linalg.norm(normals[:, 1:], axis=1))
    return float(np.min((diffs @ normals.T) / dual[None, :]))


def same_centered_region(w1, w2, seed=0, n=1000):
    rng = check_random_state(seed)
    pts = rng.normal(scale=3.0, size=(n, w1.dim))
    return bool(np.all(w1.centered().contains(pts) == w2.centered().contains(pts)))


def separation_threshold(vf, vfp, wedge, wedge_perp, resolution=1e-6):
    """Largest ε with V_f − V_f⊥ + C_ε ⊂ W_c, found by bisection, plus δ_max and τ*."""
    if not same_centered_region(wedge_perp, causal_complement(wedge)):
        raise PreconditionError("the second wedge is not opposite to the first")
    if len(_points_of(vf)) == 0 or len(_points_of(vfp)) == 0:
        raise PreconditionError("separation needs non-empty samples")
    if not precursor_order(vfp, vf, wedge):
        raise PreconditionError("samples are not ordered; no positive epsilon exists")
    p = _points_of(vf)
    q = _points_of(vfp)
    diffs = (p[:, None, :] - q[None, :, :]).reshape(-1, p.shape[1])
    normals = wedge.centered().half_space_normals()
    lo = 0.0
    hi = 1.0
    while _ball_inside(diffs, normals, hi):
        lo, hi = hi, 2.0 * hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if _ball_inside(diffs, normals, mid):
            lo = mid
        else:
            hi = mid
    if lo <= 0.0:
        raise PreconditionError("no positive epsilon at the requested resolution")
    tau_star = 3.0 * (norm_c(wedge.translation) + norm_c(wedge_perp.translation)) / lo
    return SeparationCertificate(lo, lo / 3.0, tau_star)
