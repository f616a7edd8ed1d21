"""Scattering states from products of packet-weighted field translates, and their diagnostics."""

from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import PreconditionError
from .fock import (FieldOp, FockBasis, FockVector, apply_field, check_leak, commutator_matrix,
                   hr_derivative, hr_operator, operator_norm_truncated, shell_filter, smear_field)
from .minkowski import identity
from .ordered_fock import AMPLITUDE_FLOOR, OneParticleVector, _chain_holds
from .wavepacket import WavePacket, adapted_velocity_support, modified_packet, velocity_support
from .wedge import (causal_complement, in_lstar, precursor_order, separation_threshold,
                    stabilizer_element, stabilizer_factorize)

DIVIDE_GUARD = 1e-8
SAFE_FRACTION = 0.5
FD_FLOOR = 1e-6
# Commutator norms below this fraction of ‖L‖‖R‖ are rounding noise.
ROUNDING_FLOOR = 1e-13


def _is_identity(lorentz):
    return np.array_equal(lorentz.matrix, np.eye(lorentz.dim))


@dataclass(frozen=True, eq=False)
class HREntry:
    """A smeared field, its wave packet and the σ-flipped partner field."""

    op: FieldOp
    packet: WavePacket
    partner: FieldOp = None

    def __post_init__(self):
        if self.partner is None:
            object.__setattr__(self, "partner", self.op.partner())
        elif self.partner.sigma == self.op.sigma:
            raise ValueError("partner must carry the opposite deformation sign")


def packet_velocity_support(packet, lorentz):
    if _is_identity(lorentz):
        return velocity_support(packet)
    return adapted_velocity_support(packet, lorentz)


@dataclass(frozen=True, eq=False)
class HRSpec:
    """Entries 1..n, a reference wedge, a frame Λ ∈ L*(W) and a direction.

    "out" requires V_n ≺ … ≺ V_1 and evaluates at +τ; "in" requires
    V_1 ≺ … ≺ V_n and evaluates at −τ. With `modified` set, each packet is
    replaced by its frame-modified version before use.
    """

    entries: tuple
    wedge: object
    frame: object = None
    direction: str = "out"
    modified: bool = False
    check_order: bool = True

    def __post_init__(self):
        if self.direction not in ("in", "out"):
            raise ValueError("direction must be 'in' or 'out'")
        frame = identity(self.wedge.dim) if self.frame is None else self.frame
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "entries", tuple(self.entries))
        if not in_lstar(frame, self.wedge):
            raise PreconditionError("frame does not map the right wedge onto the reference wedge")
        if self.check_order:
            bad = self.ordering_violation()
            if bad is not None:
                raise PreconditionError(f"velocity supports of entries {bad[0] + 1} and {bad[1] + 1} are not ordered")

    @property
    def n(self):
        return len(self.entries)

    @property
    def sign(self):
        return 1.0 if self.direction == "out" else -1.0

    def velocity_supports(self):
        return [packet_velocity_support(e.packet, self.frame) for e in self.entries]

    def ordering_violation(self):
        supports = self.velocity_supports()
        for i in range(len(supports)):
            for j in range(i + 1, len(supports)):
                a, b = supports[i], supports[j]
                ok = precursor_order(b, a, self.wedge) if self.direction == "out" else precursor_order(a, b, self.wedge)
                if not ok:
                    return i, j
        return None

    def packets(self):
        if not self.modified:
            return [e.packet for e in self.entries]
        return [modified_packet(e.packet, self.frame) for e in self.entries]

    def reframed(self, lorentz):
        """Same entries in another frame, with modified packets."""
        return replace(self, frame=lorentz, modified=True)


def _operators(spec, tau, model, packets=None):
    packets = spec.packets() if packets is None else packets
    t = spec.sign * tau
    return [hr_operator(e.op, f, t, model, spec.frame) for e, f in zip(spec.entries, packets)]


def _apply_chain(ops, model):
    state = FockVector.vacuum()
    for op in reversed(ops):
        state = apply_field(op, state, model)
    return state


def psi_tau(spec, tau, model, packets=None):
    """B₁…B_nΩ with every B_k taken at time sign·τ; the leak is recorded on the result."""
    return _apply_chain(_operators(spec, tau, model, packets), model)


def dpsi_tau(spec, tau, model, packets=None):
    """Analytic d/dτ of psi_tau by the product rule."""
    packets = spec.packets() if packets is None else packets
    ops = _operators(spec, tau, model, packets)
    t = spec.sign * tau
    total = FockVector()
    for j, (e, f) in enumerate(zip(spec.entries, packets)):
        chain = list(ops)
        chain[j] = hr_derivative(e.op, f, t, model, spec.frame)
        total = total + _apply_chain(chain, model)
    return spec.sign * total


def fit_decay_exponent(t, values, floor=1e-13):
    """−slope of log values vs log t over samples above floor·max(values).

    Identically zero data give +inf; fewer than three usable samples give nan.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    top = float(np.max(v)) if v.size else 0.0
    if top <= 0.0:
        return float("inf")
    keep = (v > floor * top) & (t > 0)
    if keep.sum() < 3:
        return float("nan")
    return float(-np.polyfit(np.log(t[keep]), np.log(v[keep]), 1)[0])


@dataclass
class ScanTable:
    """Column arrays keyed by name plus a summary of fitted exponents and certificates."""

    columns: dict
    summary: dict = field(default_factory=dict)

    def rows(self):
        names = list(self.columns)
        return names, list(zip(*(np.asarray(self.columns[c]).tolist() for c in names)))


def _check_grid(tau_grid, guard):
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size < 3:
        raise PreconditionError("degenerate τ grid: need at least three points")
    if np.any(np.diff(taus) <= 0) or np.any(taus <= 0):
        raise PreconditionError("τ grid must be positive and strictly increasing")
    if taus[-1] > SAFE_FRACTION * guard:
        raise PreconditionError(f"τ = {taus[-1]:.4g} exceeds half the recurrence guard {guard:.4g}")
    return taus


def fd_step(tau, model):
    return 1e-3 * min(abs(tau), 1.0 / (2.0 * float(np.max(model.energies))))


def convergence_scan(spec, tau_grid, model, fd_check=True):
    """Increment norms ‖Ψ_{τ_{i+1}} − Ψ_{τ_i}‖, analytic ‖∂_τΨ_τ‖ and a central-difference cross-check."""
    guard = model.recurrence_guard(spec.frame)
    taus = _check_grid(tau_grid, guard)
    packets = spec.packets()
    states = [psi_tau(spec, t, model, packets) for t in taus]
    increments = np.array([(b - a).norm() for a, b in zip(states[:-1], states[1:])])
    norms = np.array([s.norm() for s in states])
    leaks = np.array([s.leak for s in states])
    deriv = np.array([dpsi_tau(spec, t, model, packets).norm() for t in taus])
    fd_err = np.full(taus.size, np.nan)
    if fd_check:
        for i, t in enumerate(taus):
            step = fd_step(t, model)
            fd = (psi_tau(spec, t + step, model, packets) - psi_tau(spec, t - step, model, packets)) * (0.5 / step)
            exact = dpsi_tau(spec, t, model, packets)
            fd_err[i] = (fd - exact).norm() / max(exact.norm(), FD_FLOOR * norms[i])
    inc_col = np.concatenate([[np.nan], increments])
    summary = {
        "increment_exponent": fit_decay_exponent(taus[1:], increments),
        "derivative_exponent": fit_decay_exponent(taus, deriv),
        "recurrence_guard": guard,
        "max_fd_relative_error": float(np.nanmax(fd_err)) if fd_check else None,
        "max_leak_relative": float(np.max(leaks / np.maximum(norms, np.finfo(float).tiny))),
        "leak_ok": all(check_leak(s) for s in states),
    }
    table = ScanTable({"tau": taus, "increment": inc_col, "derivative_norm": deriv,
                       "fd_relative_error": fd_err, "state_norm": norms, "leak": leaks}, summary)
    table.states = states
    return table


@dataclass(frozen=True, eq=False)
class HRFamily:
    """τ ↦ B_τ(f) for one smeared field and packet in a fixed frame."""

    op: FieldOp
    packet: WavePacket
    frame: object = None

    def at(self, tau, model):
        return hr_operator(self.op, self.packet, tau, model, self.frame)

    def derivative(self, tau, model):
        return hr_derivative(self.op, self.packet, tau, model, self.frame)

    def velocity_support(self):
        return packet_velocity_support(self.packet, self.frame or identity(self.packet.spatial_dim + 1))


COMMUTATOR_VARIANTS = ("plain", "adjoint", "derivative", "derivative_adjoint")


def _variant_ops(variant, left, right, tau, model):
    a = left.derivative(tau, model) if variant.startswith("derivative") else left.at(tau, model)
    b = right.at(tau, model)
    if variant.endswith("adjoint"):
        a = a.adjoint()
    return a, b


def _field_bound(op, model):
    return (np.linalg.norm(op.h_plus) + np.linalg.norm(op.h_minus)) * np.sqrt(model.n_max + 1)


def commutator_scan(left, right, tau_grid, model, wedge, sector_cap=None,
                    variants=COMMUTATOR_VARIANTS, tol=1e-8, seed=0):
    """Truncated norms of [L_τ, R_τ] for the left (σ-flipped) and right families.

    The left family must be the precursor: V_left ≺_W V_right for τ > 0,
    reversed for τ < 0. A separation certificate (ε, τ*) is attached.
    """
    if left.op.sigma == right.op.sigma:
        raise PreconditionError("commutator scan expects fields with opposite deformation signs")
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size < 3 or np.any(np.diff(taus) <= 0):
        raise PreconditionError("degenerate τ grid")
    vl, vr = left.velocity_support(), right.velocity_support()
    if np.all(taus > 0):
        ordered = precursor_order(vl, vr, wedge)
        first, second = vr, vl
    elif np.all(taus < 0):
        ordered = precursor_order(vr, vl, wedge)
        first, second = vl, vr
    else:
        raise PreconditionError("τ grid must not change sign")
    if not ordered:
        raise PreconditionError("velocity supports violate the ordering required for commutator decay")
    guard = model.recurrence_guard(left.frame)
    if np.max(np.abs(taus)) > SAFE_FRACTION * guard:
        raise PreconditionError("τ grid exceeds half the recurrence guard")
    cert = separation_threshold(first, second, wedge, causal_complement(wedge))
    basis = FockBasis(model)
    cols = {"tau": taus}
    summary = {"epsilon": cert.epsilon, "tau_star": cert.tau_star, "recurrence_guard": guard}
    for variant in variants:
        vals = np.empty(taus.size)
        for i, t in enumerate(taus):
            a, b = _variant_ops(variant, left, right, t, model)
            mat = commutator_matrix(a, b, basis)
            floor = ROUNDING_FLOOR * _field_bound(a, model) * _field_bound(b, model)
            vals[i] = operator_norm_truncated(mat, model, sector_cap, basis, tol=tol, seed=seed, atol=floor).value
        cols[variant] = vals
        window = np.abs(taus) >= max(1.0, cert.tau_star)
        summary[f"{variant}_exponent"] = (fit_decay_exponent(np.abs(taus[window]), vals[window])
                                          if window.sum() >= 3 else np.nan)
    return ScanTable(cols, summary)


def cross_ordering_holds(spec_a, spec_b):
    """The rear-adjacent comparability condition across two families; index 0 is vacuous."""
    va, vb = spec_a.velocity_supports(), spec_b.velocity_supports()
    n, n2 = len(va), len(vb)
    wedge = spec_a.wedge

    def prec(x, y):
        return precursor_order(x, y, wedge) if spec_a.direction == "out" else precursor_order(y, x, wedge)

    def comparable(i, j, from_a):
        if i < 1 or j < 1:
            return True
        return prec(va[i - 1], vb[j - 1]) if from_a else prec(vb[i - 1], va[j - 1])

    for j in range(min(n, n2)):
        if not (comparable(n - j, n2 - j - 1, True) or comparable(n2 - j, n - j - 1, False)):
            return False
    return True


def fock_structure_check(spec_a, spec_b, tau_grid, model):
    """|⟨Ψ_τ, Ψ′_τ⟩ − δ_{nn′}∏⟨B_kΩ, B′_kΩ⟩| per τ, absolute and relative to ∏‖B_kΩ‖‖B′_kΩ‖."""
    if spec_a.direction != spec_b.direction:
        raise PreconditionError("both families must share the direction")
    if spec_a.wedge is not spec_b.wedge and not np.allclose(spec_a.wedge.lorentz.matrix, spec_b.wedge.lorentz.matrix):
        raise PreconditionError("both families must use the same wedge")
    if not cross_ordering_holds(spec_a, spec_b):
        raise PreconditionError("cross-family ordering condition cannot be verified")
    guard = model.recurrence_guard(spec_a.frame)
    taus = _check_grid(tau_grid, guard)
    pa, pb = spec_a.packets(), spec_b.packets()
    singles_a = [psi_tau(replace(spec_a, entries=(e,), check_order=False), taus[0], model, [f])
                 for e, f in zip(spec_a.entries, pa)]
    singles_b = [psi_tau(replace(spec_b, entries=(e,), check_order=False), taus[0], model, [f])
                 for e, f in zip(spec_b.entries, pb)]
    scale = float(np.prod([s.norm() for s in singles_a]) * np.prod([s.norm() for s in singles_b]))
    target = complex(np.prod([a.inner(b) for a, b in zip(singles_a, singles_b)])) if spec_a.n == spec_b.n else 0.0
    values = []
    for t in taus:
        values.append(psi_tau(spec_a, t, model, pa).inner(psi_tau(spec_b, t, model, pb)))
    values = np.array(values)
    resid = np.abs(values - target)
    rel = resid / max(scale, np.finfo(float).tiny)
    summary = {"target_real": float(np.real(target)), "target_imag": float(np.imag(target)),
               "scale": scale, "final_relative": float(rel[-1]),
               "residual_exponent": fit_decay_exponent(taus, resid), "recurrence_guard": guard}
    return ScanTable({"tau": taus, "residual": resid, "relative_residual": rel}, summary)


def frame_path(lorentz_a, lorentz_b, wedge, steps):
    """Λ^γ = Λ·S(γβ, γθ) where Λ⁻¹Λ′ = S(β, θ) in stabilizer coordinates."""
    if not (in_lstar(lorentz_a, wedge) and in_lstar(lorentz_b, wedge)):
        raise PreconditionError("both frames must belong to L*(W)")
    rel = lorentz_a.inverse() @ lorentz_b
    beta, rot = stabilizer_factorize(rel)
    dim = wedge.dim
    if dim > 4:
        raise PreconditionError("frame interpolation is implemented for s ≤ 3")
    # For s = 2 the edge is one-dimensional: the rotation part is trivial or a reflection.
    if dim == 3 and rot.matrix[2, 2] < 0:
        raise PreconditionError("frames differ by an edge reflection, which has no continuous path")
    angles = [float(np.arctan2(rot.matrix[3, 2], rot.matrix[2, 2]))] if dim == 4 else []
    gammas = np.linspace(0.0, 1.0, int(steps) + 1)
    return [lorentz_a @ stabilizer_element(g * beta, [g * a for a in angles], dim) for g in gammas]


def lambda_independence(spec, other_frame, tau_grid, model, gamma_steps=4):
    """‖Ψ_τ^{(Λ)} − Ψ_τ^{(Λ′)}‖ per τ with modified packets, plus the largest step along Λ^γ."""
    spec_a = spec.reframed(spec.frame)
    spec_b = spec.reframed(other_frame)
    path = frame_path(spec_a.frame, spec_b.frame, spec.wedge, gamma_steps)
    guard = min(model.recurrence_guard(f) for f in path)
    taus = _check_grid(tau_grid, guard)
    specs = [spec.reframed(f) for f in path]
    packets = [s.packets() for s in specs]
    diff = np.empty(taus.size)
    path_step = np.empty(taus.size)
    for i, t in enumerate(taus):
        states = [psi_tau(s, t, model, p) for s, p in zip(specs, packets)]
        diff[i] = (states[-1] - states[0]).norm()
        path_step[i] = max((b - a).norm() for a, b in zip(states[:-1], states[1:]))
    summary = {"difference_exponent": fit_decay_exponent(taus, diff),
               "final_over_initial": float(diff[-1] / diff[0]) if diff[0] > 0 else 0.0,
               "recurrence_guard": guard}
    return ScanTable({"tau": taus, "difference": diff, "max_path_step": path_step}, summary)


def default_field(model, sigma=1):
    """Unit profiles smeared with χ̂ = 1 on both shells, so B keeps an annihilation part."""
    ones = np.ones(model.mode_count)
    return smear_field(FieldOp(ones, ones, sigma), shell_filter(model, negative_shell=True), model)


def alternate_field(model, sigma=1):
    """A second admissible descriptor: both profiles reweighted by 1/(1 + |k|²)."""
    w = 1.0 / (1.0 + np.sum(model.momenta ** 2, axis=1))
    return smear_field(FieldOp(w, w, sigma), shell_filter(model, negative_shell=True), model)


def realize(vector, op, frame, model):
    """A packet f with B^Λ_τ(f)Ω equal to the given one-particle vector: f̃ = ψ/h⁺ with a divide guard."""
    amps = vector.flat
    hp = op.h_plus
    good = np.abs(hp) >= DIVIDE_GUARD
    vals = np.zeros(model.mode_count, dtype=complex)
    vals[good] = amps[good] / hp[good]
    packet = WavePacket.from_values(vals.reshape(model.grid_shape), model.axes, model.mass, floor=AMPLITUDE_FLOOR)
    if not _is_identity(frame):
        packet = modified_packet(packet, frame)
    return packet


@dataclass
class WaveOperatorResult:
    vector: FockVector
    tau: float
    certificate: float
    alternate_difference: float
    leak: float


def _safe_tau(frame, model, tau):
    guard = model.recurrence_guard(frame)
    limit = SAFE_FRACTION * guard
    if tau is None:
        return limit
    if tau > limit:
        raise PreconditionError(f"τ = {tau} exceeds half the recurrence guard {guard:.4g}")
    return float(tau)


def _wave_vector(state, wedge, direction, model, op, tau, certificate_ratio):
    frame = state.frame
    entries = [HREntry(op, realize(v, op, frame, model)) for v in state.vectors]
    spec = HRSpec(tuple(entries), wedge, frame, direction, check_order=False)
    psi = psi_tau(spec, tau, model)
    previous = psi_tau(spec, certificate_ratio * tau, model)
    return psi, (psi - previous).norm()


def wave_operator_apply(state, wedge, direction, model, tau=None, alternate=True, certificate_ratio=0.9):
    """Approximate 𝕎^±_W on an ordered product state at the largest safe τ.

    The certificate is ‖Ψ_τ − Ψ_{0.9τ}‖. With `alternate`, the run is repeated
    with a second field descriptor and the norm of the difference is reported.
    """
    if direction not in ("in", "out"):
        raise ValueError("direction must be 'in' or 'out'")
    if state.direction != direction:
        raise PreconditionError(f"state is ordered for {state.direction!r}, not {direction!r}")
    frame = state.frame
    if not in_lstar(frame, wedge):
        raise PreconditionError("state frame does not belong to L*(W)")
    if _chain_holds(state.vectors, wedge, frame, direction) is not None:
        raise PreconditionError("state ordering cannot be verified for this wedge")
    t = _safe_tau(frame, model, tau)
    if state.n == 0:
        return WaveOperatorResult(FockVector.vacuum(), t, 0.0, 0.0, 0.0)
    op = default_field(model, wedge.sigma)
    psi, cert = _wave_vector(state, wedge, direction, model, op, t, certificate_ratio)
    alt_diff = np.nan
    if alternate:
        alt, _ = _wave_vector(state, wedge, direction, model, alternate_field(model, wedge.sigma), t, certificate_ratio)
        alt_diff = (alt - psi).norm()
    return WaveOperatorResult(psi, t, cert, float(alt_diff), psi.leak)


@dataclass
class SMatrixElement:
    value: complex
    out_certificate: float
    in_certificate: float
    out_alternate: float
    in_alternate: float


def smatrix_element(final, wedge_final, initial, wedge_initial, model, tau=None, alternate=False):
    """⟨𝕎⁺_{W_f} final, 𝕎⁻_{W_i} initial⟩ with both convergence certificates."""
    out = wave_operator_apply(final, wedge_final, "out", model, tau, alternate)
    inc = wave_operator_apply(initial, wedge_initial, "in", model, tau, alternate)
    return SMatrixElement(out.vector.inner(inc.vector), out.certificate, inc.certificate,
                          out.alternate_difference, inc.alternate_difference)


def gram_matrices(states, wedge, direction, model, tau=None):
    """Gram matrix of ordered product states and of their wave-operator images."""
    n = len(states)
    plain = np.empty((n, n), dtype=complex)
    images = [wave_operator_apply(s, wedge, direction, model, tau, alternate=False).vector for s in states]
    mapped = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            a, b = states[i], states[j]
            plain[i, j] = (np.prod([u.inner(v) for u, v in zip(a.vectors, b.vectors)])
                           if a.n == b.n else 0.0)
            mapped[i, j] = images[i].inner(images[j])
    return plain, mapped


__all__ = [
    "HREntry", "HRSpec", "HRFamily", "ScanTable", "WaveOperatorResult", "SMatrixElement",
    "psi_tau", "dpsi_tau", "convergence_scan", "commutator_scan", "fock_structure_check",
    "cross_ordering_holds", "lambda_independence", "frame_path", "wave_operator_apply",
    "smatrix_element", "gram_matrices", "default_field", "alternate_field", "realize",
    "fit_decay_exponent", "fd_step", "OneParticleVector",
]
