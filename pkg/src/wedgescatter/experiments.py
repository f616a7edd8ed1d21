"""Experiment drivers behind the command line; each returns a ScanTable of columns and a summary."""

import numpy as np

from ._validation import InvariantViolation, PreconditionError, check_random_state
from .fock import FockModel
from .minkowski import PoincareElement, boost, identity, random_lorentz
from .modular import (CyclicVector, FiniteVNAlgebra, left, modular_residuals, random_instance,
                      regularization_errors, swap_partner, swap_residuals, tomita_operator, verify_duality)
from .ordered_fock import OneParticleVector, ordered_tensor, u0_action
from .scattering import (HREntry, HRFamily, HRSpec, ScanTable, commutator_scan, convergence_scan,
                         default_field, fock_structure_check, gram_matrices, smatrix_element)
from .wavepacket import WavePacket, bump, decay_profile, uniform_axis
from .wedge import (Box, Disk, RegionSample, Wedge, classify_cones, forbidden_fraction_box,
                    forbidden_fraction_disk, forbidden_region_measure, precursor_order,
                    quasi_total_witness, random_upright_wedge)


def build_model(desc):
    s = int(desc.get("spatial_dim", 1))
    n = int(desc["n_modes"])
    k = float(desc["half_width"])
    theta = float(desc.get("deformation", 0.0))
    q = None
    if theta != 0.0:
        q = np.zeros((s + 1, s + 1))
        q[0, 1], q[1, 0] = theta, -theta
    return FockModel(s, n, 2.0 * k / (n - 1), float(desc.get("mass", 1.0)), int(desc.get("n_max", 2)), q)


def tau_grid(desc, guard):
    """Geometric or linear grid; `stop` may be given as a fraction of the recurrence guard."""
    start = float(desc["start"])
    stop = float(desc["stop"]) if "stop" in desc else float(desc["guard_fraction"]) * guard
    count = int(desc["count"])
    if desc.get("spacing", "geometric") == "geometric":
        return np.geomspace(start, stop, count)
    return np.linspace(start, stop, count)


def bump_packet(desc, model):
    return WavePacket.bump_packet(desc["center"], float(desc["width"]), model.mass, model.axes,
                                  sharpness=float(desc.get("sharpness", 1.0)))


# Geometry

def _cone_points(rng, wedge, n, scale=1.0):
    """Random points of the open cone W_c."""
    y = rng.normal(scale=scale, size=(n, wedge.dim))
    y[:, 1] = np.abs(y[:, 0]) + np.abs(rng.normal(scale=scale, size=n)) + 1e-3
    return wedge.lorentz.apply(y)


def _cluster(rng, dim, center, size, n=6):
    return center + rng.normal(scale=size, size=(n, dim))


def geometry_suite(trials, seed=0, dim=3):
    """Covariance, transitivity, antisymmetry and quasi-totality of the precursor order.

    Returns failure counts; any failure is a contradiction and raises InvariantViolation.
    """
    rng = check_random_state(seed)
    counts = {"covariance": 0, "transitivity": 0, "antisymmetry": 0,
              "quasi_totality_checked": 0, "quasi_first": 0, "quasi_second": 0, "quasi_both": 0}
    for _ in range(int(trials)):
        wedge = Wedge(random_lorentz(rng, dim), rng.normal(size=dim))
        o1 = _cluster(rng, dim, rng.normal(size=dim), 0.2)
        shift = _cone_points(rng, wedge.centered(), 1)[0]
        o2 = o1 + shift + rng.normal(scale=0.3, size=o1.shape)
        o3 = o2 + _cone_points(rng, wedge.centered(), 1)[0] + rng.normal(scale=0.3, size=o1.shape)
        lam = PoincareElement(random_lorentz(rng, dim), rng.normal(size=dim))
        image = wedge.transformed(lam)
        a12 = precursor_order(o1, o2, wedge)
        if a12 != precursor_order(lam.apply(o1), lam.apply(o2), image):
            raise InvariantViolation("precursor order is not Poincaré covariant")
        a23 = precursor_order(o2, o3, wedge)
        if a12 and a23 and not precursor_order(o1, o3, wedge):
            raise InvariantViolation("precursor order is not transitive")
        if a12 and precursor_order(o2, o1, wedge):
            raise InvariantViolation("precursor order is not antisymmetric")

        upright = random_upright_wedge(rng, dim)
        pairs = [_ordered_velocity_pair(rng, upright) for _ in range(2)]
        if any(p is None for p in pairs):
            continue
        (v2, v1), (v2p, v1p) = pairs
        outcome = quasi_total_witness(v1, v2, v1p, v2p, upright)
        counts["quasi_totality_checked"] += 1
        counts[f"quasi_{outcome}"] += 1
    return counts


def _velocity_cluster(rng, dim):
    center = rng.uniform(-0.6, 0.6, size=dim - 1)
    v = center + rng.normal(scale=0.05, size=(5, dim - 1))
    return RegionSample.from_velocities(np.clip(v, -0.7, 0.7))


def _ordered_velocity_pair(rng, wedge, attempts=8):
    """(earlier, later) velocity clusters with earlier ≺ later, or None."""
    for _ in range(attempts):
        a, b = _velocity_cluster(rng, wedge.dim), _velocity_cluster(rng, wedge.dim)
        if precursor_order(a, b, wedge):
            return a, b
        if precursor_order(b, a, wedge):
            return b, a
    return None


def run_geometry(params, seed):
    beta = float(params.get("beta", 1.0))
    region_desc = params.get("region", {"shape": "disk", "radius": 1.0})
    if region_desc["shape"] == "disk":
        region = Disk(float(region_desc.get("radius", 1.0)))
        exact = forbidden_fraction_disk(beta)
    else:
        region = Box(tuple(region_desc["lo"]), tuple(region_desc["hi"]))
        exact = forbidden_fraction_box(beta, np.asarray(region.hi)) if _centered_box(region) else None
    n = int(params.get("n_samples", 100000))
    est = forbidden_region_measure(beta, region, n, seed)
    keep = int(params.get("plot_points", 2000))
    pts = region.sample(check_random_state(seed), n)[:keep]
    labels = classify_cones(beta, pts)
    counts = geometry_suite(int(params.get("trials", 1000)), seed, int(params.get("dim", 3)))
    summary = {"beta": beta, "fraction": est.fraction, "standard_error": est.standard_error,
               "n_samples": est.n_samples, "closed_form": exact,
               "z_score": None if exact is None or est.standard_error == 0
               else (est.fraction - exact) / est.standard_error}
    summary.update(counts)
    return ScanTable({"x1": pts[:, 0], "x2": pts[:, 1], "label": labels}, summary)


def _centered_box(box):
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    return bool(np.allclose(lo, -hi))


# Packet decay

def run_packet_decay(params, seed):
    s = int(params.get("spatial_dim", 1))
    half = float(params.get("grid_half_width", 1.3))
    pts = int(params.get("grid_points", 1025 if s == 1 else 129))
    axes = tuple(uniform_axis(-half, half, pts) for _ in range(s))
    center = params.get("center", [0.0] * s)
    packet = WavePacket.bump_packet(center, float(params.get("width", 1.0)), float(params.get("mass", 1.0)),
                                    axes, sharpness=float(params.get("sharpness", 1.0)))
    rays = np.asarray(params.get("rays", [[0.2] + [0.0] * (s - 1)]), dtype=float)
    times = tau_grid(params.get("times", {"start": 10, "stop": 100, "count": 12}), np.inf)
    window = tuple(params.get("fit_window", [10.0, 100.0]))
    table = decay_profile(packet, rays, times, float(params.get("epsilon", 0.2)),
                          fit_window=window, with_l1=bool(params.get("l1", True)))
    cols = {f"v{j + 1}": np.repeat(rays[:, j], times.size) for j in range(s)}
    cols["t"] = np.tile(times, len(rays))
    cols["amplitude"] = table.amplitudes.reshape(-1)
    cols["ray"] = np.repeat(np.arange(len(rays)), times.size)
    summary = {"slopes": table.slopes.tolist(), "classes": list(table.classes),
               "l1_exponent": table.l1_exponent, "fit_window": list(window)}
    return ScanTable(cols, summary)


# Modular

def modular_suite(instances, sizes, seed, deltas=(1.0, 1e-1, 1e-2, 1e-3)):
    rows = {k: [] for k in ("instance", "n", "defining", "polar", "delta_fixed", "j_fixed", "j_involution",
                            "commutant", "commutator", "flow", "swap_vector", "swap_commutant",
                            "regularization_monotone")}
    reg_cols = {f"reg_{d:g}": [] for d in deltas}
    for i in range(int(instances)):
        n = int(sizes[i % len(sizes)])
        algebra, omega, rng = random_instance(n, [seed, i])
        mod = tomita_operator(algebra, omega)
        res = modular_residuals(algebra, mod)
        dual = verify_duality(algebra, mod)
        a = left(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
        vec, comm = swap_residuals(a, swap_partner(a, mod), algebra, mod)
        errs = regularization_errors(a, mod, deltas)
        rows["instance"].append(i)
        rows["n"].append(n)
        for key in ("defining", "polar", "delta_fixed", "j_fixed", "j_involution"):
            rows[key].append(float(res[key]))
        rows["commutant"].append(dual.commutant_residual)
        rows["commutator"].append(dual.commutator_residual)
        rows["flow"].append(dual.flow_residual)
        rows["swap_vector"].append(vec)
        rows["swap_commutant"].append(comm)
        rows["regularization_monotone"].append(bool(np.all(np.diff(errs) <= 0)))
        for d, e in zip(deltas, errs):
            reg_cols[f"reg_{d:g}"].append(float(e))
    rows.update(reg_cols)
    return {k: np.asarray(v) for k, v in rows.items()}


def tracial_deviation(n, seed=0):
    algebra = FiniteVNAlgebra.random(n, check_random_state(seed))
    mod = tomita_operator(algebra, CyclicVector.tracial(n))
    return float(np.max(np.abs(mod.delta - np.eye(n * n))))


def run_modular(params, seed):
    cols = modular_suite(int(params.get("instances", 100)), params.get("sizes", [2, 3, 4]), seed,
                         tuple(params.get("deltas", [1.0, 1e-1, 1e-2, 1e-3])))
    keys = ("defining", "polar", "delta_fixed", "j_fixed", "j_involution", "commutant", "commutator",
            "flow", "swap_vector", "swap_commutant")
    summary = {f"max_{k}": float(np.max(cols[k])) for k in keys}
    summary["regularization_monotone"] = bool(np.all(cols["regularization_monotone"]))
    tracial_n = int(params.get("tracial_n", 2))
    summary["tracial_n"] = tracial_n
    summary["tracial_delta_deviation"] = tracial_deviation(tracial_n, seed)
    return ScanTable(cols, summary)


# Commutator decay

def run_commutator(params, seed):
    model = build_model(params["model"])
    wedge = Wedge.from_text(params["wedge"]) if "wedge" in params else Wedge.right(model.dim)
    left_family = HRFamily(default_field(model, -1), bump_packet(params["left"], model))
    right_family = HRFamily(default_field(model, 1), bump_packet(params["right"], model))
    taus = tau_grid(params.get("tau", {"start": 1.0, "guard_fraction": 0.5, "count": 12}),
                    model.recurrence_guard())
    table = commutator_scan(left_family, right_family, taus, model, wedge, params.get("sector_cap"), seed=seed)
    env = np.max([table.columns[v] for v in table.columns if v != "tau"], axis=0)
    start = np.argmin(np.abs(taus - max(1.0, table.summary["tau_star"])))
    table.columns["envelope"] = env
    table.summary["envelope_ratio"] = float(env[-1] / env[start]) if env[start] > 0 else 0.0
    return table


# Scattering

def _hr_spec(params, model):
    op = default_field(model)
    entries = [HREntry(op, bump_packet(p, model)) for p in params["packets"]]
    return HRSpec(tuple(entries), Wedge.right(model.dim), direction=params.get("direction", "out"))


def run_scattering(params, seed):
    model = build_model(params["model"])
    spec = _hr_spec(params, model)
    taus = tau_grid(params["tau"], model.recurrence_guard())
    table = convergence_scan(spec, taus, model, fd_check=bool(params.get("fd_check", True)))
    if params.get("fock_check"):
        stride = int(params.get("fock_stride", 1))
        report = fock_structure_check(spec, spec, taus[::stride], model)
        table.summary["fock_final_relative"] = report.summary["final_relative"]
        table.summary["fock_residual_exponent"] = report.summary["residual_exponent"]
    return table


# S-matrix

def one_particle_vector(desc, model):
    k = model.momenta
    center = np.atleast_1d(np.asarray(desc["center"], dtype=float))
    amps = bump((k - center) / float(desc["width"]))
    phase = np.atleast_1d(np.asarray(desc.get("phase", [0.0] * model.spatial_dim), dtype=float))
    return OneParticleVector.from_model(amps * np.exp(1j * (k @ phase)), model)


def random_poincare(rng, dim, max_rapidity, max_shift):
    """A boost along the wedge axis times a random translation, so λW_r stays a right wedge."""
    return PoincareElement(boost(1, rng.uniform(-max_rapidity, max_rapidity), dim),
                           rng.uniform(-max_shift, max_shift, size=dim))


def covariance_suite(final, initial, wedge, model, trials, seed, max_rapidity=0.3, max_shift=1.0):
    rng = check_random_state(seed)
    base = smatrix_element(final, wedge, initial, wedge, model)
    cols = {k: [] for k in ("trial", "rapidity", "relative_deviation", "out_certificate", "in_certificate")}
    for i in range(int(trials)):
        lam = random_poincare(rng, wedge.dim, max_rapidity, max_shift)
        moved = wedge.transformed(lam)
        el = smatrix_element(u0_action(lam, final), moved, u0_action(lam, initial), moved, model)
        cols["trial"].append(i)
        cols["rapidity"].append(float(np.arcsinh(lam.lorentz.matrix[1, 0])))
        cols["relative_deviation"].append(abs(el.value - base.value) / abs(base.value))
        cols["out_certificate"].append(el.out_certificate)
        cols["in_certificate"].append(el.in_certificate)
    return base, {k: np.asarray(v) for k, v in cols.items()}


def translation_deviation(final, initial, wedge, model, shift):
    """|S(U(a)Φ⁺, U(a)Φ⁻) − S(Φ⁺, Φ⁻)| for a purely spatial translation a."""
    shift = np.concatenate([[0.0], np.asarray(shift, dtype=float)])
    lam = PoincareElement(identity(wedge.dim), shift)
    moved = wedge.transformed(lam)
    base = smatrix_element(final, wedge, initial, wedge, model).value
    other = smatrix_element(u0_action(lam, final), moved, u0_action(lam, initial), moved, model).value
    return float(abs(other - base))


def gram_agreement(states, wedge, direction, model):
    plain, mapped = gram_matrices(states, wedge, direction, model)
    return float(np.max(np.abs(plain - mapped)) / np.max(np.abs(plain)))


def run_smatrix(params, seed):
    model = build_model(params["model"])
    wedge = Wedge.right(model.dim)
    final = ordered_tensor([one_particle_vector(d, model) for d in params["final"]], wedge, direction="out")
    initial = ordered_tensor([one_particle_vector(d, model) for d in params["initial"]], wedge, direction="in")
    base, cols = covariance_suite(final, initial, wedge, model, int(params.get("trials", 10)), seed,
                                  float(params.get("max_rapidity", 0.3)), float(params.get("max_shift", 1.0)))
    summary = {
        "value_real": base.value.real, "value_imag": base.value.imag,
        "out_certificate": base.out_certificate, "in_certificate": base.in_certificate,
        "max_relative_deviation": float(np.max(cols["relative_deviation"])) if len(cols["trial"]) else 0.0,
        "translation_deviation": translation_deviation(final, initial, wedge, model,
                                                       params.get("shift", [0.7] * model.spatial_dim)),
        "gram_out": gram_agreement([final], wedge, "out", model),
        "gram_in": gram_agreement([initial], wedge, "in", model),
    }
    return ScanTable(cols, summary)


RUNNERS = {
    "geometry": run_geometry,
    "packet-decay": run_packet_decay,
    "modular": run_modular,
    "commutator": run_commutator,
    "scattering": run_scattering,
    "smatrix": run_smatrix,
}


def run_experiment(kind, params, seed):
    if kind not in RUNNERS:
        raise PreconditionError(f"unknown experiment kind {kind!r}")
    return RUNNERS[kind](params, seed)
