"""Tomita-Takesaki objects for the algebra {a ⊗ 1} on ℂⁿ ⊗ ℂⁿ.

Vectors of the tensor product are n×n coefficient matrices flattened row-major,
so (a ⊗ 1) acts as X ↦ aX and (1 ⊗ b) as X ↦ X bᵀ.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import svd

from ._validation import PreconditionError, check_random_state

SEPARATING_TOL = 1e-10
CONDITION_LIMIT = 1e12


def left(a):
    return np.kron(a, np.eye(a.shape[0]))


def right(b):
    return np.kron(np.eye(b.shape[0]), b)


@dataclass(frozen=True, eq=False)
class FiniteVNAlgebra:
    """The full left factor {a ⊗ 1}; `generators` are the elements used for checks."""

    n: int
    generators: tuple

    def __post_init__(self):
        gens = tuple(np.asarray(g, dtype=complex) for g in self.generators)
        for g in gens:
            if g.shape != (self.n, self.n):
                raise ValueError("generators must be n×n matrices")
        object.__setattr__(self, "generators", gens)

    @classmethod
    def random(cls, n, rng, count=2):
        gens = []
        for _ in range(count):
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            gens.extend([a, a.conj().T])
        return cls(n, tuple(gens))

    def ambient(self):
        return [left(g) for g in self.generators]


@dataclass(frozen=True, eq=False)
class CyclicVector:
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("coefficient matrix must be square")
        c = c / np.linalg.norm(c)
        object.__setattr__(self, "coefficients", c)

    @property
    def n(self):
        return self.coefficients.shape[0]

    @property
    def vector(self):
        return self.coefficients.reshape(-1)

    @classmethod
    def tracial(cls, n):
        return cls(np.eye(n) / np.sqrt(n))

    @classmethod
    def schmidt(cls, weights):
        return cls(np.diag(np.sqrt(np.asarray(weights, dtype=float))))

    @classmethod
    def random(cls, n, rng):
        return cls(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))


@dataclass(frozen=True, eq=False)
class Antilinear:
    """x ↦ matrix · conj(x)."""

    matrix: np.ndarray

    def __call__(self, x):
        return self.matrix @ np.conj(x)


@dataclass(frozen=True, eq=False)
class ModularObjects:
    S: Antilinear
    J: Antilinear
    delta: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    omega: CyclicVector

    def delta_power(self, z):
        """Δ^z through the spectral decomposition; z may be complex."""
        return (self.eigenvectors * self.eigenvalues ** z) @ self.eigenvectors.conj().T

    def conjugate_by_j(self, op):
        """J X J as a linear operator."""
        u = self.J.matrix
        return u @ np.conj(op) @ np.conj(u)


def _transpose_permutation(n):
    """Matrix T with T vec(X) = vec(Xᵀ)."""
    perm = np.arange(n * n).reshape(n, n).T.reshape(-1)
    return np.eye(n * n)[perm]


def tomita_operator(algebra, omega):
    """Build S from S(aΩ) = a*Ω and split it as S = JΔ^{1/2}."""
    n = omega.n
    if algebra.n != n:
        raise ValueError("algebra and vector live on different spaces")
    w = omega.coefficients
    sv = np.linalg.svd(w, compute_uv=False)
    if sv[-1] <= SEPARATING_TOL * sv[0]:
        raise PreconditionError("vector is not separating: coefficient matrix is singular")
    # aΩ = Ψ with a = Ψ w⁻¹, so SΨ = (w⁻¹)* Ψ^† w; Ψ^† is the transpose of conj(Ψ).
    w_inv_adj = np.linalg.inv(w).conj().T
    k = np.kron(w_inv_adj, w.T) @ _transpose_permutation(n)
    s_op = Antilinear(k)
    # Polar parts from the SVD of K: Δ = conj(K*K) and J = U V*, which avoids squaring the condition number.
    u, sv, vh = svd(k)
    if sv[-1] <= 0:
        raise PreconditionError("modular operator is not positive definite")
    evecs = vh.T
    evals = sv ** 2
    delta = (evecs * evals) @ evecs.conj().T
    j_op = Antilinear(u @ vh)
    return ModularObjects(s_op, j_op, delta, evals, evecs, omega)


def modular_residuals(algebra, mod):
    """Defining relation, polar decomposition and fixed-point residuals."""
    om = mod.omega.vector
    res = {}
    res["defining"] = max(
        np.linalg.norm(mod.S(left(g) @ om) - left(g).conj().T @ om) for g in algebra.generators)
    half = mod.delta_power(0.5)
    res["polar"] = np.max(np.abs(mod.S.matrix - mod.J.matrix @ np.conj(half)))
    res["delta_fixed"] = np.linalg.norm(mod.delta @ om - om)
    res["j_fixed"] = np.linalg.norm(mod.J(om) - om)
    u = mod.J.matrix
    res["j_involution"] = np.max(np.abs(u @ np.conj(u) - np.eye(u.shape[0])))
    return res


def _distance_to_right(x, n):
    """Frobenius distance of an n²×n² matrix to {1 ⊗ b}, relative to its norm."""
    blocks = x.reshape(n, n, n, n)
    b = np.einsum("iaib->ab", blocks) / n
    scale = max(np.linalg.norm(x), 1.0)
    return np.linalg.norm(x - right(b)) / scale


def _distance_to_left(x, n):
    blocks = x.reshape(n, n, n, n)
    a = np.einsum("iaja->ij", blocks) / n
    scale = max(np.linalg.norm(x), 1.0)
    return np.linalg.norm(x - left(a)) / scale


@dataclass
class DualityReport:
    commutant_residual: float
    commutator_residual: float
    flow_residual: float
    taus: tuple


def verify_duality(algebra, mod, taus=(0.0, 0.37, 1.0, 2.5)):
    """J(a⊗1)J lies in the commutant and Δ^{iτ}(a⊗1)Δ^{−iτ} stays in the algebra."""
    n = algebra.n
    gens = algebra.ambient()
    comm_dist = 0.0
    comm_res = 0.0
    flow = 0.0
    for g in gens:
        jgj = mod.conjugate_by_j(g)
        comm_dist = max(comm_dist, _distance_to_right(jgj, n))
        for h in gens:
            comm_res = max(comm_res, np.linalg.norm(jgj @ h - h @ jgj) / max(np.linalg.norm(g) * np.linalg.norm(h), 1.0))
        for tau in taus:
            flowed = mod.delta_power(1j * tau) @ g @ mod.delta_power(-1j * tau)
            flow = max(flow, _distance_to_left(flowed, n))
    return DualityReport(float(comm_dist), float(comm_res), float(flow), tuple(taus))


def swap_partner(a, mod):
    """A⊥ = JΔ^{1/2}AΔ^{−1/2}J, applied separately to the hermitian parts of A = A₁ + iA₂."""
    a = np.asarray(a, dtype=complex)
    cond = np.sqrt(mod.eigenvalues.max() / mod.eigenvalues.min())
    if cond > CONDITION_LIMIT:
        raise PreconditionError(f"Δ^(1/2) condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; regularize first")
    half = mod.delta_power(0.5)
    half_inv = mod.delta_power(-0.5)

    def partner(h):
        return mod.conjugate_by_j(half @ h @ half_inv)

    a1 = 0.5 * (a + a.conj().T)
    a2 = (a - a.conj().T) / 2j
    return partner(a1) + 1j * partner(a2)


def swap_residuals(a, a_perp, algebra, mod):
    om = mod.omega.vector
    vec = np.linalg.norm(a @ om - a_perp @ om)
    scale = max(np.linalg.norm(a_perp), 1.0)
    comm = max(np.linalg.norm(a_perp @ g - g @ a_perp) / (scale * max(np.linalg.norm(g), 1.0))
               for g in algebra.ambient())
    return float(vec), float(comm)


def regularize(a, mod, delta):
    """Gaussian average of the modular flow, (i, j) ↦ e^{−δ(log λᵢ − log λⱼ)²/2} in Δ's eigenbasis."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    v = mod.eigenvectors
    logs = np.log(mod.eigenvalues)
    weights = np.exp(-0.5 * delta * (logs[:, None] - logs[None, :]) ** 2)
    return v @ (weights * (v.conj().T @ a @ v)) @ v.conj().T


def regularization_errors(a, mod, deltas):
    om = mod.omega.vector
    return np.array([np.linalg.norm(regularize(a, mod, d) @ om - a @ om) for d in deltas])


def random_instance(n, seed):
    rng = check_random_state(seed)
    algebra = FiniteVNAlgebra.random(n, rng)
    omega = CyclicVector.random(n, rng)
    return algebra, omega, rng
