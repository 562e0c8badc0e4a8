"""Cutoffs, variance/virial identities, exterior estimate, detectors."""

import numpy as np
import pytest

from nls2d import (
    Cutoff,
    Field,
    ProbeSpec,
    RAN_TO_T_END,
    SpectralGrid,
    StepControls,
    TrajectoryRecord,
    blowup_time_bound,
    energy_gradient_bounds_check,
    evolve,
    gradient_norm_sq,
    l2_norm_sq,
    localized_variance,
    lp_norm_p,
    make_initial_data,
    radial_asymmetry,
    radial_gn_exterior_check,
    scattering_detect,
    variance,
    variance_derivative,
    virial_check_full,
    virial_rhs,
)
from nls2d.diagnostics import _chi_derivs, _phi_derivs


def gaussian(grid, amp=1.0, width=1.0, center=(0.0, 0.0)):
    r2 = (grid.X - center[0]) ** 2 + (grid.Y - center[1]) ** 2
    return Field(grid, (amp * np.exp(-r2 / (2.0 * width**2))).astype(complex))


# ---------------------------------------------------------------------------
# cutoff shapes

def test_cutoff_validation(grid_128):
    with pytest.raises(ValueError, match="unknown"):
        Cutoff("boxcar", 8.0, grid_128)
    with pytest.raises(ValueError, match="too small"):
        Cutoff("compact", grid_128.dx, grid_128)


def test_cutoff_interior_is_exact_variance_weight(grid_128):
    for kind in ("compact", "saturating"):
        c = Cutoff(kind, 8.0, grid_128)
        inside = grid_128.R <= 0.99 * c.R
        assert np.max(np.abs(c.w[inside] - grid_128.R[inside] ** 2)) < 1e-12
        assert np.all(c.wp_over_rho[inside] == 2.0)
        assert np.all(c.lap[inside] == 4.0)
        assert np.all(c.bilap[inside] == 0.0)


def test_saturating_cutoff_plateau_and_curvature_cap():
    rho = np.linspace(0.0, 6.0, 4001)
    val, d1, d2 = _chi_derivs(rho)
    # curvature stays at or below the interior value 2 everywhere
    assert np.max(d2) <= 2.0 + 1e-12
    # non-decreasing, flat plateau beyond rho = 4
    assert np.min(d1) >= -1e-12
    far = rho >= 4.0
    assert np.max(np.abs(val[far] - 5.5)) < 1e-12
    assert np.max(np.abs(d1[far])) < 1e-12


def test_compact_cutoff_support():
    rho = np.linspace(0.0, 3.0, 3001)
    val, d1, d2, d3, d4 = _phi_derivs(rho)
    far = rho >= 2.0
    for arr in (val, d1, d2, d3, d4):
        assert np.max(np.abs(arr[far])) < 1e-12
    inside = rho <= 1.0
    assert np.max(np.abs(val[inside] - rho[inside] ** 2)) < 1e-12


@pytest.mark.parametrize("derivs,n_out,joints", [
    (_chi_derivs, 3, (1.0, 4.0)),
    (_phi_derivs, 5, (1.0, 2.0)),
])
def test_cutoff_derivative_columns_are_consistent(derivs, n_out, joints):
    # each returned column is the derivative of the previous one: check by
    # centered differences away from the joints (the blends match only up
    # to second order there, so higher columns jump by construction)
    rho = np.linspace(0.01, 4.99, 49801)
    h = rho[1] - rho[0]
    away = np.ones_like(rho, dtype=bool)
    for j in joints:
        away &= np.abs(rho - j) > 3.0 * h
    cols = derivs(rho)
    assert len(cols) == n_out
    for k in range(n_out - 1):
        fd = (cols[k][2:] - cols[k][:-2]) / (2.0 * h)
        err = np.max(np.abs((fd - cols[k + 1][1:-1])[away[1:-1]]))
        scale = max(1.0, np.max(np.abs(cols[k + 1])))
        assert err < 5e-5 * scale


@pytest.mark.parametrize("derivs,joints,smooth_cols", [
    (_chi_derivs, (1.0, 4.0), 3),
    (_phi_derivs, (1.0, 2.0), 3),
])
def test_cutoff_joints_are_c2(derivs, joints, smooth_cols):
    eps = 1e-9
    for j in joints:
        left = derivs(np.array([j - eps]))
        right = derivs(np.array([j + eps]))
        for k in range(smooth_cols):
            assert left[k][0] == pytest.approx(right[k][0], abs=1e-6)


# ---------------------------------------------------------------------------
# variance and virial

def test_variance_gaussian_oracle(grid_256):
    amp, width = 0.8, 1.1
    f = gaussian(grid_256, amp, width)
    assert variance(f) == pytest.approx(np.pi * amp**2 * width**4, rel=1e-12)


def test_variance_translation_rule(grid_256):
    f0 = gaussian(grid_256, 1.0, 1.0)
    fa = gaussian(grid_256, 1.0, 1.0, center=(3.0, 0.0))
    mass = l2_norm_sq(f0)
    assert variance(fa) == pytest.approx(variance(f0) + 9.0 * mass, rel=1e-11)


def test_variance_rejects_wrapped_mass(grid_128):
    wide = gaussian(grid_128, 1.0, 6.0)
    with pytest.raises(ValueError, match="boundary"):
        variance(wide)


def test_variance_derivative_vanishes_for_real_fields(grid_128):
    assert abs(variance_derivative(gaussian(grid_128))) < 1e-13


def test_virial_rhs_on_soliton(gs_cert):
    # stationary profile: the virial right side vanishes identically
    assert abs(virial_rhs(gs_cert.field)) <= 1e-5 * gs_cert.gradQ_sq


def test_localized_variance_matches_global_inside(grid_128):
    # datum far inside the cutoff radius: localized and global agree
    f = gaussian(grid_128, 0.7, 1.0)
    c = Cutoff("compact", 8.0, grid_128)
    z, zp, zpp, A_R = localized_variance(f, c)
    assert z == pytest.approx(variance(f), rel=1e-10)
    assert abs(zp - variance_derivative(f)) < 1e-10
    assert abs(A_R) < 1e-9 * max(1.0, abs(virial_rhs(f)))
    assert zpp == pytest.approx(virial_rhs(f), abs=1e-9)


def test_localized_variance_grid_guard(grid_128, grid_256):
    c = Cutoff("compact", 8.0, grid_256)
    with pytest.raises(ValueError, match="different grid"):
        localized_variance(gaussian(grid_128), c)


def test_virial_check_full_fd_agreement(gs_cert, grid_128):
    # weak dispersing hump: formula V'' against centered differences of V
    f = make_initial_data("gaussian", {"amplitude": 0.3, "width": 2.0}, grid_128)
    rec = evolve(f, 0.06, StepControls(), gs_cert,
                 ProbeSpec(cadence=0.01, snapshot_every=1))
    trace = virial_check_full(rec.snapshots, R=8.0)
    mid = slice(1, -1)
    rel = np.abs(trace.Vpp_fd[mid] - trace.Vpp_formula[mid]) / np.abs(
        trace.Vpp_formula[mid])
    assert np.max(rel) < 1e-3
    assert np.all(np.isnan(trace.Vpp_fd[[0, -1]]))
    # localized first derivative against differences of z_R
    h = trace.times[1] - trace.times[0]
    zp_fd = (trace.z_R[2:] - trace.z_R[:-2]) / (2.0 * h)
    assert np.max(np.abs(zp_fd - trace.zp_R[mid])) < 1e-4 * max(
        1.0, np.max(np.abs(trace.zp_R)))


def test_virial_check_full_guards(grid_128):
    snaps = [gaussian(grid_128) for _ in range(4)]
    for i, s in enumerate(snaps):
        s.t = 0.01 * i
    with pytest.raises(ValueError, match="at least 5"):
        virial_check_full(snaps)
    snaps = [gaussian(grid_128) for _ in range(5)]
    for i, s in enumerate(snaps):
        s.t = 0.01 * i
    snaps[3].t = 0.035
    with pytest.raises(ValueError, match="uniform"):
        virial_check_full(snaps)


# ---------------------------------------------------------------------------
# radial symmetry and the exterior estimate

def test_radial_asymmetry(grid_128):
    assert radial_asymmetry(gaussian(grid_128)) < 1e-13
    shifted = gaussian(grid_128, 1.0, 1.0, center=(1.5, 0.0))
    assert radial_asymmetry(shifted) > 1e-2


def test_exterior_estimate_bounded_across_radii(gs_cert):
    # ratio of the exterior L6 mass to its radial-estimate majorant: finite,
    # positive, and far below 1 for the soliton tail
    for R in (2.0, 4.0, 8.0):
        ratio = radial_gn_exterior_check(gs_cert.field, R)
        assert 0.0 < ratio < 0.5


def test_exterior_estimate_guards(grid_128):
    shifted = gaussian(grid_128, 1.0, 1.0, center=(1.5, 0.0))
    with pytest.raises(ValueError, match="radially symmetric"):
        radial_gn_exterior_check(shifted, 4.0)
    capped = np.where(grid_128.R < 2.0, 1.0, 0.0).astype(complex)
    with pytest.raises(ValueError, match="outside"):
        radial_gn_exterior_check(Field(grid_128, capped), 8.0)


# ---------------------------------------------------------------------------
# bounds along below-threshold trajectories

def _fake_record(grid, G, grad, drifts, energy0):
    rec = TrajectoryRecord(grid, variance_enabled=False)
    for i in range(len(G)):
        rec.add_sample(t=0.1 * i, grad_sq=grad[i], l6_6=1.0, mass_drift=0.0,
                       energy_drift=drifts[i], momx=0.0, momy=0.0,
                       G=G[i], tail=0.0)
    rec.mass0 = 1.0
    rec.energy0 = energy0
    return rec


def test_bounds_check_margins(grid_128):
    energy0 = 1.0
    rec = _fake_record(grid_128, G=[0.5, 0.55], grad=[3.0, 3.2],
                       drifts=[0.0, 0.0], energy0=energy0)
    m = energy_gradient_bounds_check(rec, energy0, ME=0.4)
    assert m.lower.shape == (2,)
    assert m.min_margin() == pytest.approx(
        min(m.lower.min(), m.upper.min(), m.trapping.min(), m.chained.min()))
    # E = 1, grad = 3: lower = 1 - 0.75, upper = 0.5, trapping ~ 0.13
    assert m.lower[0] == pytest.approx(0.25)
    assert m.upper[0] == pytest.approx(0.5)
    assert m.trapping[0] == pytest.approx(np.sqrt(0.4) - 0.5)


def test_bounds_check_requires_below_threshold(grid_128):
    rec = _fake_record(grid_128, G=[1.2], grad=[3.0], drifts=[0.0], energy0=1.0)
    with pytest.raises(ValueError, match="below-threshold"):
        energy_gradient_bounds_check(rec, 1.0, ME=0.4)
    rec2 = _fake_record(grid_128, G=[0.5], grad=[3.0], drifts=[0.0], energy0=1.0)
    with pytest.raises(ValueError, match="below-threshold"):
        energy_gradient_bounds_check(rec2, 1.0, ME=1.2)


# ---------------------------------------------------------------------------
# blow-up time bound

def test_blowup_time_bound_value(gs_cert, grid_cert):
    f = make_initial_data("scaled_q", {"lam": 1.2}, grid_cert, gs=gs_cert)
    t_b, info = blowup_time_bound(f, gs_cert, R=12.0, kappa=0.05)
    assert t_b is not None
    assert 0.0 < t_b < 2.0
    assert info["G_ext"] <= 0.05
    assert info["lam"] == pytest.approx(1.2, abs=1e-3)


def test_blowup_time_bound_guards(gs_cert, grid_cert):
    below = make_initial_data("scaled_q", {"lam": 0.9}, grid_cert, gs=gs_cert)
    with pytest.raises(ValueError, match="above threshold"):
        blowup_time_bound(below, gs_cert, R=12.0, kappa=0.05)
    above = make_initial_data("scaled_q", {"lam": 1.2}, grid_cert, gs=gs_cert)
    with pytest.raises(ValueError, match="kappa"):
        blowup_time_bound(above, gs_cert, R=12.0, kappa=0.5)


def test_blowup_time_bound_exterior_budget(gs_cert, grid_cert):
    # with the cutoff pulled in to R = 2 the soliton carries visible
    # gradient outside, so the hypothesis fails and no bound is claimed
    f = make_initial_data("scaled_q", {"lam": 1.2}, grid_cert, gs=gs_cert)
    t_b, info = blowup_time_bound(f, gs_cert, R=2.0, kappa=0.05)
    assert t_b is None
    assert "reason" in info


# ---------------------------------------------------------------------------
# scattering detector

def _free_flow_record(grid, t2, k_snaps):
    """Exactly linear trajectory: snapshots under the free flow."""
    f = gaussian(grid, 0.5, 1.0)
    fh = np.fft.fft2(f.values)
    rec = TrajectoryRecord(grid, variance_enabled=False)
    rec.mass0 = l2_norm_sq(f)
    rec.energy0 = 0.5 * gradient_norm_sq(f) - lp_norm_p(f, 6) / 6.0
    for t in np.linspace(0.0, t2, k_snaps):
        u = Field(grid, np.fft.ifft2(fh * np.exp(-1j * grid.K2 * t)), float(t))
        rec.add_sample(t=float(t), grad_sq=gradient_norm_sq(u),
                       l6_6=lp_norm_p(u, 6), mass_drift=0.0, energy_drift=0.0,
                       momx=0.0, momy=0.0, G=0.1, tail=0.0)
        rec.snapshots.append(u)
    rec.set_outcome(RAN_TO_T_END, t2)
    return rec


def test_scattering_detect_on_free_flow(grid_128):
    rec = _free_flow_record(grid_128, t2=2.0, k_snaps=9)
    report = scattering_detect(rec, (0.0, 2.0))
    # free quintic decay of the width-1 hump: (1 + 4 t^2)^2 = 289 at t = 2
    assert report.l6_decay_factor == pytest.approx(289.0, rel=0.05)
    assert report.verdict == "scatter_like"
    assert report.monotone_ok
    assert report.d_T2_over_H1 < 1e-12
    assert report.d_mid_over_H1 < 1e-12
    assert not report.box_exit_flagged
    keys = set(report.to_json())
    assert keys == {"l6_decay_factor", "d_T2_over_H1", "verdict",
                    "d_mid_over_H1", "monotone_ok", "box_exit_flagged",
                    "window"}


def test_scattering_detect_guards(grid_128):
    rec = _free_flow_record(grid_128, t2=2.0, k_snaps=9)
    with pytest.raises(ValueError, match="window exceeds"):
        scattering_detect(rec, (0.0, 3.0))
    sparse = _free_flow_record(grid_128, t2=2.0, k_snaps=2)
    with pytest.raises(ValueError, match="at least 3"):
        scattering_detect(sparse, (0.0, 2.0))
    unfinished = TrajectoryRecord(grid_128, variance_enabled=False)
    unfinished.add_sample(t=0.0, grad_sq=1.0, l6_6=1.0, mass_drift=0.0,
                          energy_drift=0.0, momx=0.0, momy=0.0, G=0.1, tail=0.0)
    unfinished.set_outcome("blowup_detected", 0.5)
    with pytest.raises(ValueError, match="completed"):
        scattering_detect(unfinished, (0.0, 0.0))
