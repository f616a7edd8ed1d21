"""Positive-energy Klein-Gordon solutions built from compactly supported momentum profiles."""

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.spatial import ConvexHull

from ._validation import check_positive
from .minkowski import identity, omega, shell_map
from .wedge import GENERAL_TAG, VELOCITY_TAG, RegionSample

NODE_TOL = 1e-9


def bump(u, sharpness=1.0):
    """The C∞ prototype exp(−a/(1 − |u|²)) on the open unit ball, zero outside; a = sharpness."""
    u = np.asarray(u, dtype=float)
    r2 = np.sum(u * u, axis=-1) if u.ndim > 1 else u * u
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-sharpness / (1.0 - r2[inside]))
    return out


def uniform_axis(lo, hi, n):
    return np.linspace(lo, hi, int(n))


def box_boundary(lo, hi, per_edge=33):
    """Sample of the boundary of an axis-aligned box, exact corners included."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    s = lo.size
    if s == 1:
        return np.array([[lo[0]], [hi[0]]]) if hi[0] > lo[0] else lo[None, :].copy()
    lines = [np.linspace(lo[j], hi[j], per_edge) for j in range(s)]
    pts = []
    for j in range(s):
        for side in (lo[j], hi[j]):
            grids = [lines[i] if i != j else np.array([side]) for i in range(s)]
            pts.append(np.array(list(product(*grids))))
    return np.unique(np.concatenate(pts), axis=0)


@dataclass(frozen=True, eq=False)
class WavePacket:
    """Grid values of f̃ with an exact support box and a boundary sample of the true support."""

    mass: float
    axes: tuple
    values: np.ndarray
    support_lo: np.ndarray
    support_hi: np.ndarray
    support_sample: np.ndarray = None
    interpolation_order: int = 3
    spacing: np.ndarray = field(init=False)

    def __post_init__(self):
        check_positive(self.mass, "mass")
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != tuple(a.size for a in axes):
            raise ValueError("profile values do not match the grid axes")
        lo = np.asarray(self.support_lo, dtype=float).reshape(-1)
        hi = np.asarray(self.support_hi, dtype=float).reshape(-1)
        if lo.size != len(axes) or hi.size != len(axes) or np.any(hi < lo):
            raise ValueError("support box is malformed")
        spacing = np.array([a[1] - a[0] if a.size > 1 else 1.0 for a in axes])
        for j, a in enumerate(axes):
            if not (a[0] < lo[j] and hi[j] < a[-1]):
                raise ValueError("support box must lie strictly inside the grid")
            if a.size > 2 and not np.allclose(np.diff(a), spacing[j], rtol=1e-9, atol=0.0):
                raise ValueError("grid axes must be uniform")
        vals = vals * self._box_mask(axes, lo, hi)
        sample = box_boundary(lo, hi) if self.support_sample is None else np.asarray(
            self.support_sample, dtype=float).reshape(-1, len(axes))
        for name, arr in (("values", vals), ("support_lo", lo), ("support_hi", hi),
                          ("support_sample", sample), ("spacing", spacing)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "axes", axes)

    @staticmethod
    def _box_mask(axes, lo, hi):
        grids = np.meshgrid(*axes, indexing="ij")
        mask = np.ones(grids[0].shape, dtype=bool)
        for g, a, b in zip(grids, lo, hi):
            mask &= (g >= a) & (g <= b)
        return mask

    @classmethod
    def bump_packet(cls, center, width, mass, axes, amplitude=1.0, sharpness=1.0):
        """Bump of radius `width` around `center`, sampled on the given axes."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        width = check_positive(width, "width")
        check_positive(sharpness, "sharpness")
        grids = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = amplitude * bump((grids - center) / width, sharpness)
        return cls(mass, tuple(axes), vals, center - width, center + width,
                   _ball_boundary(center, width))

    @classmethod
    def from_values(cls, values, axes, mass, floor=0.0):
        """Wrap grid values; the support box is the tight box of entries above `floor`."""
        vals = np.asarray(values, dtype=complex)
        nz = np.argwhere(np.abs(vals) > floor)
        if nz.size == 0:
            raise ValueError("profile has no support above the floor")
        lo = np.array([axes[j][nz[:, j].min()] for j in range(len(axes))])
        hi = np.array([axes[j][nz[:, j].max()] for j in range(len(axes))])
        vals = np.where(np.abs(vals) > floor, vals, 0.0)
        return cls(mass, tuple(axes), vals, lo, hi)

    @property
    def spatial_dim(self):
        return len(self.axes)

    def grid_points(self):
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def _fractional_index(self, points):
        origin = np.array([a[0] for a in self.axes])
        return (points - origin) / self.spacing

    def in_support_box(self, points):
        pts = np.asarray(points, dtype=float)
        return np.all((pts >= self.support_lo) & (pts <= self.support_hi), axis=-1)

    def profile_at(self, points):
        """f̃ at arbitrary momenta: exact at grid nodes, spline interpolation elsewhere."""
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, self.spatial_dim)
        idx = self._fractional_index(flat)
        out = np.zeros(len(flat), dtype=complex)
        inside = self.in_support_box(flat)
        nearest = np.rint(idx)
        on_node = np.all(np.abs(idx - nearest) < NODE_TOL, axis=1) & inside
        if np.any(on_node):
            nodes = nearest[on_node].astype(int)
            out[on_node] = self.values[tuple(nodes.T)]
        rest = inside & ~on_node
        if np.any(rest):
            coords = idx[rest].T
            order = self.interpolation_order
            re = map_coordinates(self.values.real, coords, order=order, mode="constant", cval=0.0)
            im = map_coordinates(self.values.imag, coords, order=order, mode="constant", cval=0.0)
            out[rest] = re + 1j * im
        return out.reshape(shape)

    def with_values(self, values, lo=None, hi=None, sample=None):
        return WavePacket(self.mass, self.axes, values,
                          self.support_lo if lo is None else lo,
                          self.support_hi if hi is None else hi,
                          self.support_sample if sample is None else sample,
                          self.interpolation_order)


def _ball_boundary(center, radius, n=64):
    s = center.size
    if s == 1:
        return np.array([[center[0] - radius], [center[0] + radius]])
    if s == 2:
        phi = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return center + radius * np.column_stack([np.cos(phi), np.sin(phi)])
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(n * n, s))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return center + radius * dirs


def _refined_support_grid(packet, refine):
    axes = []
    for a, lo, hi, h in zip(packet.axes, packet.support_lo, packet.support_hi, packet.spacing):
        i0 = max(int(np.floor((lo - a[0]) / h)), 0)
        i1 = min(int(np.ceil((hi - a[0]) / h)), a.size - 1)
        n = (i1 - i0) * refine + 1
        axes.append(np.linspace(a[i0], a[i1], n))
    return axes


def evaluate_kg(packet, t, x, refine=4):
    """f(t, x) = ∫ d^sk/(2π)^s e^{ik·x − iω t} f̃(k) by the trapezoid rule on the support box.

    `t` may be a scalar or an array broadcasting against the leading axes of
    `x` (shape (..., s)). The profile is refined `refine`-fold by spline
    interpolation; the quadrature error is O(h²) in the refined spacing and,
    for profiles vanishing smoothly at the box edge, usually much smaller.
    """
    refine = int(refine)
    if refine < 1:
        raise ValueError("refinement factor must be at least 1")
    axes = _refined_support_grid(packet, refine)
    kgrid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, packet.spatial_dim)
    fk = packet.profile_at(kgrid)
    keep = fk != 0
    kgrid, fk = kgrid[keep], fk[keep]
    cell = np.prod(packet.spacing / refine) / (2.0 * np.pi) ** packet.spatial_dim
    w = omega(kgrid, packet.mass)
    xs = np.asarray(x, dtype=float)
    if packet.spatial_dim == 1 and xs.ndim < 2:
        xs = xs[..., None]
    if xs.shape[-1] != packet.spatial_dim:
        raise ValueError("positions must have the packet's spatial dimension on the last axis")
    lead = xs.shape[:-1]
    flat_x = xs.reshape(-1, packet.spatial_dim)
    flat_t = np.broadcast_to(np.asarray(t, dtype=float), lead).reshape(-1)
    out = np.empty(len(flat_x), dtype=complex)
    chunk = max(1, 2_000_000 // max(len(kgrid), 1))
    for start in range(0, len(flat_x), chunk):
        sl = slice(start, start + chunk)
        phase = flat_x[sl] @ kgrid.T - flat_t[sl, None] * w[None, :]
        out[sl] = np.exp(1j * phase) @ fk
    out = out.reshape(lead) * cell
    return out[()] if lead == () else out


@dataclass(frozen=True, eq=False)
class VelocitySupport(RegionSample):
    delta: float = 0.0

    @property
    def velocities(self):
        return self.points[:, 1:]


def _enlarge(vel, delta):
    if delta <= 0:
        return vel
    s = vel.shape[1]
    if s == 1:
        dirs = np.array([[-1.0], [1.0]])
    elif s == 2:
        phi = np.linspace(0.0, 2.0 * np.pi, 24, endpoint=False)
        dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    else:
        dirs = np.concatenate([np.eye(s), -np.eye(s)])
    return (vel[:, None, :] + delta * dirs[None, :, :]).reshape(-1, s)


def velocity_support(packet, delta=0.0):
    """Points (1, k/ω(k)) over the support boundary sample, enlarged by δ if requested."""
    if delta < 0:
        raise ValueError("enlargement must be non-negative")
    k = packet.support_sample
    vel = k / omega(k, packet.mass)[:, None]
    vel = _enlarge(vel, delta)
    pts = np.concatenate([np.ones((len(vel), 1)), vel], axis=1)
    return VelocitySupport(pts, VELOCITY_TAG, identity(packet.spatial_dim + 1), float(delta))


def _orthochronous(lorentz):
    if lorentz.matrix[0, 0] < 1.0 - lorentz.tol:
        raise ValueError("transform must be orthochronous")


def boost_packet(packet, lorentz, order=None):
    """Profile of f^Λ(x) = f(Λx): ω(Λ_m k)/ω(k) f̃(Λ_m k), supported on Λ_m⁻¹(supp f̃)."""
    _orthochronous(lorentz)
    m = packet.mass
    inv = lorentz.inverse()
    sample = shell_map(inv, packet.support_sample, m)
    if not np.all(np.isfinite(sample)):
        raise ValueError("boosted support is not representable")
    lo = sample.min(axis=0)
    hi = sample.max(axis=0)
    if packet.spatial_dim > 1:
        pad = 0.5 * packet.spacing
        lo, hi = lo - pad, hi + pad
    axes = []
    for j, h in enumerate(packet.spacing):
        n_lo = int(np.floor(lo[j] / h)) - 3
        n_hi = int(np.ceil(hi[j] / h)) + 3
        axes.append(h * np.arange(n_lo, n_hi + 1))
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    image = shell_map(lorentz, grid, m)
    src = packet if order is None else WavePacket(
        packet.mass, packet.axes, packet.values, packet.support_lo, packet.support_hi,
        packet.support_sample, order)
    vals = omega(image, m) / omega(grid, m) * src.profile_at(image)
    return WavePacket(m, tuple(axes), vals, lo, hi, sample, src.interpolation_order)


def modified_packet(packet, lorentz):
    """Multiply f̃(p) by ω(Λ_m⁻¹ p)/ω(p); the support and its sample are unchanged."""
    _orthochronous(lorentz)
    grid = packet.grid_points()
    factor = omega(shell_map(lorentz.inverse(), grid, packet.mass), packet.mass) / omega(grid, packet.mass)
    return packet.with_values(packet.values * factor)


def adapted_velocity_support(packet, lorentz):
    """Λ applied to the velocity support of the boosted packet f^Λ."""
    boosted = boost_packet(packet, lorentz)
    vs = velocity_support(boosted)
    return RegionSample(lorentz.apply(vs.points), GENERAL_TAG)


def _hull_distance(vel, point):
    """Zero inside the hull of `vel`, otherwise the distance to it (s ≤ 2 exact)."""
    s = vel.shape[1]
    if s == 1:
        lo, hi = vel.min(), vel.max()
        return float(max(lo - point[0], point[0] - hi, 0.0))
    hull = ConvexHull(vel)
    offsets = hull.equations[:, :-1] @ point + hull.equations[:, -1]
    if np.all(offsets <= 0):
        return 0.0
    if s == 2:
        best = np.inf
        for a, b in hull.simplices:
            p, q = vel[a], vel[b]
            seg = q - p
            lam = np.clip(np.dot(point - p, seg) / np.dot(seg, seg), 0.0, 1.0)
            best = min(best, float(np.linalg.norm(point - p - lam * seg)))
        return best
    return float(np.max(offsets))


def fit_loglog_slope(t, values):
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 3:
        raise ValueError("a log-log fit needs at least three samples")
    if np.any(y <= 0) or np.any(t <= 0):
        raise ValueError("log-log fit needs positive samples")
    return float(np.polyfit(np.log(t), np.log(y), 1)[0])


@dataclass
class DecayTable:
    rays: np.ndarray
    times: np.ndarray
    amplitudes: np.ndarray
    classes: list
    slopes: np.ndarray
    l1_norms: np.ndarray = None
    l1_exponent: float = None
    fit_window: tuple = (10.0, 100.0)

    def rows(self):
        for i, ray in enumerate(self.rays):
            for j, t in enumerate(self.times):
                yield (*ray, t, self.amplitudes[i, j], self.classes[i])


def l1_norm(packet, t, margin=30.0, refine=1):
    """∫ |f(t, x)| d^sx on a spatial grid covering the propagation region at time t."""
    k = packet.support_sample
    vel = k / omega(k, packet.mass)[:, None]
    lo = np.minimum(vel.min(axis=0) * t, 0.0) - margin
    hi = np.maximum(vel.max(axis=0) * t, 0.0) + margin
    kmax = np.max(np.abs(np.concatenate([packet.support_lo, packet.support_hi])))
    dx = min(0.25, np.pi / (4.0 * max(kmax, 1e-12)))
    axes = [np.arange(a, b + dx, dx) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = evaluate_kg(packet, t, grid, refine=refine)
    return float(np.sum(np.abs(vals)) * dx ** packet.spatial_dim)


def decay_profile(packet, rays, t_range, epsilon, refine=1, fit_window=(10.0, 100.0), with_l1=True):
    """Sample |f(t, vt)| on rays, fit log-log slopes, and track the L¹ norm of f_t."""
    times = np.asarray(t_range, dtype=float)
    if times.ndim != 1 or times.size < 3:
        raise ValueError("need at least three times")
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be positive and increasing")
    rays = np.atleast_2d(np.asarray(rays, dtype=float))
    if rays.shape[1] != packet.spatial_dim:
        raise ValueError("ray dimension does not match the packet")
    in_window = (times >= fit_window[0] - 1e-12) & (times <= fit_window[1] + 1e-12)
    if in_window.sum() < 3:
        raise ValueError("degenerate fit: fewer than three samples in the fit window")
    vel = velocity_support(packet).velocities
    amps = np.empty((len(rays), times.size))
    classes = []
    for i, ray in enumerate(rays):
        pts = times[:, None] * ray[None, :]
        amps[i] = np.abs(evaluate_kg(packet, times, pts, refine=refine))
        dist = _hull_distance(vel, ray)
        classes.append("interior" if dist == 0.0 else ("exterior" if dist > epsilon else "margin"))
    slopes = np.array([fit_loglog_slope(times[in_window], a[in_window]) for a in amps])
    table = DecayTable(rays, times, amps, classes, slopes, fit_window=tuple(fit_window))
    if with_l1:
        norms = np.array([l1_norm(packet, t, refine=refine) for t in times])
        table.l1_norms = norms
        table.l1_exponent = fit_loglog_slope(times[in_window], norms[in_window])
    return table
