"""Truncated bosonic Fock space over a momentum grid, with phase-deformed fields.

Basis states are sorted tuples of mode indices (occupation multisets) and are
orthonormal. The deformed creator is z†_k = e^{iσ k·Q·P} a†_k, where P is the
on-shell total momentum already present; σ = −1 uses −Q.
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import PreconditionError, check_positive, check_random_state
from .minkowski import metric, omega, shell_map

LEAK_LIMIT = 1e-6


@dataclass(frozen=True, eq=False)
class FockModel:
    """N^s grid modes at (j − (N−1)/2)·h per axis, mass m, at most n_max particles."""

    spatial_dim: int
    n_modes: int
    spacing: float
    mass: float
    n_max: int
    deformation: np.ndarray = None

    def __post_init__(self):
        check_positive(self.mass, "mass")
        check_positive(self.spacing, "spacing")
        if self.spatial_dim < 1 or self.n_modes < 2:
            raise ValueError("need s >= 1 and at least two modes per axis")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        d = self.spatial_dim + 1
        q = np.zeros((d, d)) if self.deformation is None else np.array(self.deformation, dtype=float)
        if q.shape != (d, d):
            raise ValueError(f"deformation matrix must be {d}×{d}")
        if np.max(np.abs(q + q.T)) > 1e-14:
            raise ValueError("deformation matrix must be antisymmetric")
        q.setflags(write=False)
        object.__setattr__(self, "deformation", q)

    @property
    def dim(self):
        return self.spatial_dim + 1

    @cached_property
    def axis(self):
        return (np.arange(self.n_modes) - 0.5 * (self.n_modes - 1)) * self.spacing

    @cached_property
    def axes(self):
        return (self.axis,) * self.spatial_dim

    @property
    def mode_count(self):
        return self.n_modes ** self.spatial_dim

    @property
    def grid_shape(self):
        return (self.n_modes,) * self.spatial_dim

    @cached_property
    def momenta(self):
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=-1)

    @cached_property
    def energies(self):
        return omega(self.momenta, self.mass)

    @cached_property
    def lifts(self):
        return np.concatenate([self.energies[:, None], self.momenta], axis=1)

    @cached_property
    def _phase_rows(self):
        """Rows of k_μ Q^{μν} g_{νλ}, so that B(k, P) = rows[k] · P for contravariant P."""
        g = metric(self.dim)
        return self.lifts @ g @ self.deformation @ g

    @property
    def is_free(self):
        return not np.any(self.deformation)

    def negative_mode(self, index):
        """Index of −k; the symmetric grid makes this an index reversal."""
        return self.mode_count - 1 - np.asarray(index)

    def deformation_phase(self, modes, total, sigma=1):
        """σ·B(k, P) for mode indices `modes` and a contravariant total momentum."""
        return sigma * (self._phase_rows[modes] @ np.asarray(total, dtype=float))

    def total_momentum(self, multiset):
        if len(multiset) == 0:
            return np.zeros(self.dim)
        return self.lifts[list(multiset)].sum(axis=0)

    def grid_function(self, values):
        """Flatten a grid-shaped or flat array into a length-N^s profile."""
        arr = np.asarray(values, dtype=complex)
        if arr.shape == self.grid_shape:
            arr = arr.reshape(-1)
        if arr.shape != (self.mode_count,):
            raise PreconditionError(f"profile shape {arr.shape} does not match the grid {self.grid_shape}")
        return arr

    def recurrence_guard(self, lorentz=None):
        """π over the largest neighbour increment of the annihilation-phase rate ω(Λ_m⁻¹k)."""
        if lorentz is None or np.allclose(lorentz.matrix, np.eye(self.dim)):
            rate = self.energies
        else:
            rate = omega(shell_map(lorentz.inverse(), self.momenta, self.mass), self.mass)
        rate = rate.reshape(self.grid_shape)
        steps = [np.max(np.abs(np.diff(rate, axis=j))) for j in range(self.spatial_dim)]
        return float(np.pi / max(steps))

    def sector_size(self, n):
        return comb(self.mode_count + n - 1, n)

    def check_compatible(self, other):
        if not (self.spatial_dim == other.spatial_dim and self.n_modes == other.n_modes
                and self.spacing == other.spacing and self.mass == other.mass):
            raise PreconditionError("incompatible momentum grids")


@dataclass(eq=False)
class FockVector:
    """Sparse amplitudes keyed by sorted mode tuples; the empty tuple is the vacuum."""

    amplitudes: dict = field(default_factory=dict)
    leak: float = 0.0

    @classmethod
    def vacuum(cls):
        return cls({(): 1.0 + 0.0j})

    @classmethod
    def one_particle(cls, amplitudes, model):
        a = model.grid_function(amplitudes)
        return cls({(int(k),): complex(a[k]) for k in np.flatnonzero(a)})

    @classmethod
    def from_dense(cls, vec, basis):
        vec = np.asarray(vec, dtype=complex)
        return cls({basis.states[i]: complex(vec[i]) for i in np.flatnonzero(vec)})

    def copy(self):
        return FockVector(dict(self.amplitudes), self.leak)

    def sector(self, n):
        return FockVector({m: c for m, c in self.amplitudes.items() if len(m) == n})

    @property
    def sectors(self):
        return sorted({len(m) for m in self.amplitudes})

    def vacuum_amplitude(self):
        return self.amplitudes.get((), 0.0j)

    def one_particle_amplitudes(self, model):
        out = np.zeros(model.mode_count, dtype=complex)
        for m, c in self.amplitudes.items():
            if len(m) == 1:
                out[m[0]] = c
        return out

    def inner(self, other):
        """⟨self, other⟩, antilinear in the first slot."""
        small, large = (self.amplitudes, other.amplitudes)
        if len(small) <= len(large):
            return complex(sum(np.conj(c) * large.get(m, 0.0) for m, c in small.items()))
        return complex(sum(np.conj(small.get(m, 0.0)) * c for m, c in large.items()))

    def norm(self):
        if not self.amplitudes:
            return 0.0
        return float(np.sqrt(sum(abs(c) ** 2 for c in self.amplitudes.values())))

    def _combine(self, other, sign):
        out = dict(self.amplitudes)
        for m, c in other.amplitudes.items():
            out[m] = out.get(m, 0.0) + sign * c
        return FockVector(out, self.leak + other.leak)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        return FockVector({m: scalar * c for m, c in self.amplitudes.items()}, abs(scalar) * self.leak)

    __rmul__ = __mul__

    def to_dense(self, basis):
        out = np.zeros(basis.size, dtype=complex)
        for m, c in self.amplitudes.items():
            if len(m) <= basis.n_max:
                out[basis.index(m)] = c
        return out

    def records(self):
        """Sparse text-friendly records (mode tuple, real, imag), in canonical order."""
        return [(m, c.real, c.imag) for m, c in sorted(self.amplitudes.items(), key=lambda kv: (len(kv[0]), kv[0]))]


@dataclass(frozen=True, eq=False)
class FieldOp:
    """z†_σ(h⁺) + z_σ(h⁻) with z_σ(h) = Σ_k h(k) z_{σ,k}."""

    h_plus: np.ndarray
    h_minus: np.ndarray
    sigma: int = 1

    def __post_init__(self):
        hp = np.asarray(self.h_plus, dtype=complex).reshape(-1)
        hm = np.asarray(self.h_minus, dtype=complex).reshape(-1)
        if hp.shape != hm.shape:
            raise ValueError("creation and annihilation profiles live on different grids")
        if self.sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")
        for name, arr in (("h_plus", hp), ("h_minus", hm)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def creation(cls, profile, sigma=1):
        p = np.asarray(profile, dtype=complex).reshape(-1)
        return cls(p, np.zeros_like(p), sigma)

    @classmethod
    def annihilation(cls, profile, sigma=1):
        p = np.asarray(profile, dtype=complex).reshape(-1)
        return cls(np.zeros_like(p), p, sigma)

    def adjoint(self):
        return FieldOp(np.conj(self.h_minus), np.conj(self.h_plus), self.sigma)

    def partner(self):
        """Same profiles with the opposite deformation sign."""
        return FieldOp(self.h_plus, self.h_minus, -self.sigma)

    def __add__(self, other):
        if self.sigma != other.sigma:
            raise ValueError("cannot add fields with different deformation signs")
        return FieldOp(self.h_plus + other.h_plus, self.h_minus + other.h_minus, self.sigma)

    def __mul__(self, scalar):
        return FieldOp(scalar * self.h_plus, scalar * self.h_minus, self.sigma)

    __rmul__ = __mul__


def _check_op(op, model):
    if op.h_plus.size != model.mode_count:
        raise PreconditionError("field profile does not match the model grid")


def apply_field(op, psi, model):
    """Apply z†_σ(h⁺) + z_σ(h⁻); creation out of the top sector is dropped and recorded as leak."""
    _check_op(op, model)
    plus = np.flatnonzero(op.h_plus)
    minus = op.h_minus
    hp = op.h_plus[plus]
    out = {}
    dropped = {}
    for m, c in psi.amplitudes.items():
        if c == 0:
            continue
        n = len(m)
        total = model.total_momentum(m)
        if plus.size:
            phases = np.exp(1j * model.deformation_phase(plus, total, op.sigma))
            amps = c * hp * phases
            target = out if n < model.n_max else dropped
            for k, a in zip(plus.tolist(), amps.tolist()):
                new = tuple(sorted(m + (k,)))
                target[new] = target.get(new, 0.0) + a * np.sqrt(m.count(k) + 1)
        for k in set(m):
            if minus[k] == 0:
                continue
            pos = m.index(k)
            new = m[:pos] + m[pos + 1:]
            phase = np.exp(-1j * model.deformation_phase(k, total, op.sigma))
            out[new] = out.get(new, 0.0) + c * minus[k] * np.sqrt(m.count(k)) * phase
    # ‖X‖ ≤ (‖h⁺‖ + ‖h⁻‖)·√(n_max + 1) bounds how far earlier leaks can propagate.
    bound = (np.linalg.norm(op.h_plus) + np.linalg.norm(op.h_minus)) * np.sqrt(model.n_max + 1)
    leak = psi.leak * bound
    if dropped:
        leak += float(np.sqrt(sum(abs(a) ** 2 for a in dropped.values())))
    return FockVector(out, float(leak))


def shell_filter(model, negative_shell=False, window=None):
    """χ̂ restricted to ±(ω(k), k): 1 on the positive shell (optionally only inside `window`),
    and the same on the negative shell when `negative_shell` is set."""
    plus = np.ones(model.mode_count)
    if window is not None:
        plus = np.asarray(window(model.momenta), dtype=float)
    minus = plus[model.negative_mode(np.arange(model.mode_count))] if negative_shell else np.zeros(model.mode_count)
    return plus.astype(complex), minus.astype(complex)


def smear_field(op, chi_hat, model):
    """Multiply h⁺(k) by χ̂(ω(k), k) and h⁻(k) by χ̂(−ω(k), −k).

    `chi_hat` is either a pair of grid arrays (values on the positive and on the
    negative shell, both indexed by k) or a callable χ̂(energy, momenta).
    """
    _check_op(op, model)
    if callable(chi_hat):
        plus = chi_hat(model.energies, model.momenta)
        minus = chi_hat(-model.energies, -model.momenta)
    else:
        plus, minus = chi_hat
    plus = model.grid_function(plus)
    minus = model.grid_function(minus)
    if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
        raise PreconditionError("smearing function must be finite on the grid")
    return FieldOp(op.h_plus * plus, op.h_minus * minus, op.sigma)


def _check_packet(packet, model):
    if packet.spatial_dim != model.spatial_dim:
        raise PreconditionError("packet and model have different spatial dimensions")
    if not np.isclose(packet.mass, model.mass, rtol=1e-12, atol=0.0):
        raise PreconditionError(f"packet mass {packet.mass} differs from model mass {model.mass}")


def _hr_multipliers(packet, tau, model, lorentz):
    """Creation multiplier, annihilation multiplier and annihilation phase rate 2ω(q)."""
    k = model.momenta
    m = model.mass
    if lorentz is None or np.allclose(lorentz.matrix, np.eye(model.dim), rtol=0, atol=0):
        w = model.energies
        create = packet.profile_at(k)
        neg = model.negative_mode(np.arange(model.mode_count))
        annihilate = create[neg]
        rate = 2.0 * w
    else:
        q = shell_map(lorentz.inverse(), k, m)
        wq = omega(q, m)
        p = shell_map(lorentz, -q, m)
        create = model.energies / wq * packet.profile_at(k)
        annihilate = omega(p, m) / wq * packet.profile_at(p)
        rate = 2.0 * wq
    return create, annihilate * np.exp(-1j * rate * tau), rate


def hr_operator(op, packet, tau, model, lorentz=None):
    """Momentum-space image of the packet-weighted translate of a smeared field.

    With Λ = 1 the creation profile becomes f̃(k)h⁺(k) for every τ and the
    annihilation profile f̃(−k)e^{−2iω(k)τ}h⁻(k). For a general frame the
    hyperplane Λ·{x⁰ = τ} is integrated exactly, which rescales both profiles
    by shell Jacobians and evaluates f̃ at the transported momenta.
    """
    _check_op(op, model)
    _check_packet(packet, model)
    create, annihilate, _ = _hr_multipliers(packet, tau, model, lorentz)
    return FieldOp(create * op.h_plus, annihilate * op.h_minus, op.sigma)


def hr_derivative(op, packet, tau, model, lorentz=None):
    """Analytic ∂_τ of hr_operator: only the annihilation phase depends on τ."""
    _check_op(op, model)
    _check_packet(packet, model)
    _, annihilate, rate = _hr_multipliers(packet, tau, model, lorentz)
    return FieldOp(np.zeros(model.mode_count), -1j * rate * annihilate * op.h_minus, op.sigma)


def one_particle_project(psi, model=None, window=None):
    """Keep the one-particle sector, optionally only modes whose momentum lies in `window`.

    `window` is a callable on an (n, s) momentum array or a (lo, hi) box.
    """
    amps = {m: c for m, c in psi.amplitudes.items() if len(m) == 1}
    if window is not None:
        if model is None:
            raise ValueError("a momentum window needs the model")
        if callable(window):
            keep = np.asarray(window(model.momenta), dtype=bool)
        else:
            lo, hi = (np.asarray(b, dtype=float) for b in window)
            keep = np.all((model.momenta >= lo) & (model.momenta <= hi), axis=1)
        amps = {m: c for m, c in amps.items() if keep[m[0]]}
    return FockVector(amps)


def vacuum_project(psi):
    return FockVector({(): psi.vacuum_amplitude()}) if () in psi.amplitudes else FockVector()


class FockBasis:
    """Enumerated basis of sectors 0..n_max, lexicographic inside each sector."""

    def __init__(self, model, n_max=None):
        self.model = model
        self.n_max = model.n_max if n_max is None else n_max
        size = sum(model.sector_size(n) for n in range(self.n_max + 1))
        if size > 5_000_000:
            raise PreconditionError(f"basis of {size} states is too large to enumerate")
        mcount = model.mode_count
        self.sector_arrays = []
        self.offsets = []
        offset = 0
        for n in range(self.n_max + 1):
            arr = np.array(list(combinations_with_replacement(range(mcount), n)), dtype=np.int64)
            arr = arr.reshape(len(arr), n)
            self.sector_arrays.append(arr)
            self.offsets.append(offset)
            offset += len(arr)
        self.size = offset
        self._codes = [self._encode(a) for a in self.sector_arrays]
        self.structures = {}

    def _encode(self, arr):
        base = self.model.mode_count
        code = np.zeros(len(arr), dtype=np.int64)
        for j in range(arr.shape[1]):
            code = code * base + arr[:, j]
        return code

    @property
    def states(self):
        return [tuple(int(x) for x in row) for arr in self.sector_arrays for row in arr]

    def lookup(self, n, arr):
        codes = self._encode(arr)
        pos = np.searchsorted(self._codes[n], codes)
        return self.offsets[n] + pos

    def index(self, multiset):
        n = len(multiset)
        return int(self.lookup(n, np.array([multiset], dtype=np.int64).reshape(1, n))[0])

    def sector_slice(self, n):
        return slice(self.offsets[n], self.offsets[n] + len(self.sector_arrays[n]))

    def cap_mask(self, cap):
        mask = np.zeros(self.size, dtype=bool)
        mask[:self.offsets[cap] + len(self.sector_arrays[cap])] = True
        return mask


def _creation_structure(basis, sigma):
    """Rows, columns, modes and √(n_k+1)·e^{iσB(k,P)} of every a†_k matrix element."""
    if sigma in basis.structures:
        return basis.structures[sigma]
    model = basis.model
    mcount = model.mode_count
    rows, cols, modes, vals = [], [], [], []
    for n in range(basis.n_max):
        src = basis.sector_arrays[n]
        count = len(src)
        k = np.tile(np.arange(mcount), count)
        parent = np.repeat(np.arange(count), mcount)
        new = np.sort(np.concatenate([src[parent], k[:, None]], axis=1), axis=1)
        occupancy = (src[parent] == k[:, None]).sum(axis=1) + 1
        totals = model.lifts[src].sum(axis=1) if n else np.zeros((1, model.dim))
        phase = np.exp(1j * sigma * np.einsum("kd,cd->ck", model._phase_rows, totals)).reshape(-1)
        rows.append(basis.lookup(n + 1, new))
        cols.append(basis.offsets[n] + parent)
        modes.append(k)
        vals.append(np.sqrt(occupancy) * phase)
    structure = tuple(np.concatenate(x) for x in (rows, cols, modes, vals))
    basis.structures[sigma] = structure
    return structure


def creation_matrix(profile, basis, sigma=1):
    rows, cols, modes, vals = _creation_structure(basis, sigma)
    data = vals * np.asarray(profile, dtype=complex)[modes]
    keep = data != 0
    return sp.csr_matrix((data[keep], (rows[keep], cols[keep])), shape=(basis.size, basis.size))


def field_matrix(op, basis):
    """Sparse matrix of a FieldOp on the enumerated basis; z_σ(h) is (z†_σ(conj h))*."""
    _check_op(op, basis.model)
    mat = creation_matrix(op.h_plus, basis, op.sigma)
    if np.any(op.h_minus):
        mat = mat + creation_matrix(np.conj(op.h_minus), basis, op.sigma).conj().T
    return mat.tocsr()


def commutator_matrix(a, b, basis):
    """[A, B] as a matrix-free operator; forming the sparse product is far denser than A and B."""
    ma = field_matrix(a, basis) if isinstance(a, FieldOp) else sp.csr_matrix(a)
    mb = field_matrix(b, basis) if isinstance(b, FieldOp) else sp.csr_matrix(b)
    ma_h = ma.conj().T.tocsr()
    mb_h = mb.conj().T.tocsr()
    return spla.LinearOperator(
        ma.shape, dtype=complex,
        matvec=lambda x: ma @ (mb @ x) - mb @ (ma @ x),
        rmatvec=lambda y: mb_h @ (ma_h @ y) - ma_h @ (mb_h @ y))


@dataclass(frozen=True)
class NormEstimate:
    value: float
    iterations: int
    converged: bool


def operator_norm_truncated(op, model, sector_cap=None, basis=None, tol=1e-8, max_iter=5000, seed=0, atol=0.0):
    """Largest singular value on sectors 0..sector_cap by power iteration on X*X.

    `op` is a FieldOp, a matrix or LinearOperator on the basis, or a callable
    basis -> matrix. Convergence is declared when the Rayleigh quotient changes
    by less than `tol` relative between iterations, or once the norm is below
    `atol`, where only rounding noise is left to resolve.
    """
    cap = model.n_max - 1 if sector_cap is None else sector_cap
    if not 0 <= cap <= model.n_max:
        raise PreconditionError(f"sector cap {cap} outside 0..{model.n_max}")
    basis = FockBasis(model) if basis is None else basis
    if isinstance(op, FieldOp):
        op = field_matrix(op, basis)
    elif callable(op) and not isinstance(op, spla.LinearOperator):
        op = op(basis)
    domain = np.flatnonzero(basis.cap_mask(cap))
    full = spla.aslinearoperator(op)
    if full.shape != (basis.size, basis.size):
        raise PreconditionError("operator does not act on the model basis")

    def forward(x):
        z = np.zeros(basis.size, dtype=complex)
        z[domain] = x
        return full.matvec(z)

    def gram(x):
        return full.rmatvec(forward(x))[domain]

    rng = check_random_state(seed)
    x = rng.normal(size=domain.size) + 1j * rng.normal(size=domain.size)
    x /= np.linalg.norm(x)
    value = 0.0
    for it in range(1, max_iter + 1):
        y = gram(x)
        new = float(np.real(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return NormEstimate(0.0, it, True)
        x = y / ny
        if it > 1 and new < atol ** 2:
            return NormEstimate(float(np.sqrt(max(new, 0.0))), it, True)
        if it > 1 and abs(new - value) <= tol * abs(new) + atol ** 2:
            return NormEstimate(float(np.sqrt(max(new, 0.0))), it, True)
        value = new
    warnings.warn(f"power iteration did not converge in {max_iter} steps", RuntimeWarning, stacklevel=2)
    return NormEstimate(float(np.sqrt(max(value, 0.0))), max_iter, False)


def check_leak(psi, threshold=LEAK_LIMIT):
    """True when the recorded truncation leak is below `threshold` relative to the state norm."""
    scale = max(psi.norm(), np.finfo(float).tiny)
    return psi.leak <= threshold * scale


__all__ = [
    "FockModel", "FockVector", "FieldOp", "FockBasis", "NormEstimate", "apply_field",
    "shell_filter", "smear_field", "hr_operator", "hr_derivative", "one_particle_project",
    "vacuum_project", "field_matrix", "creation_matrix", "commutator_matrix",
    "operator_norm_truncated", "check_leak",
]
