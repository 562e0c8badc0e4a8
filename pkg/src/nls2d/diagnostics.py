"""Variance and virial machinery, localized cutoffs, and outcome detectors.

The variance V(t) = int |x|^2 |u|^2 obeys V'' = 8 ||grad u||^2 -
(16/3) ||u||_L6^6 along the flow; convexity of V drives blow-up arguments,
and a localized version z_R (variance against a compactly supported radial
cutoff) gives quantitative blow-up time bounds.  A scattering detector
compares late-time states against a free evolution.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .grid import (
    Field,
    boundary_mass_fraction,
    gradient_norm_sq,
    l2_norm_sq,
    lp_norm_p,
    spectral_gradient,
)
from .functionals import conserved, renormalized


# ---------------------------------------------------------------------------
# cutoffs

def _chi_derivs(r: np.ndarray):
    """Saturating cutoff: r^2 for r <= 1, constant 11/2 for r >= 4.

    The blend on [1, 4] is the minimal polynomial matched to value, slope,
    and curvature at r = 1 and to zero slope and curvature at r = 4; its
    second derivative 2 - 12 t + 10 t^2 (t = (r-1)/3) never exceeds 2.
    Returns (value, first, second) radial derivatives.
    """
    r = np.asarray(r, dtype=float)
    t = np.clip((r - 1.0) / 3.0, 0.0, 1.0)
    val_mid = 1.0 + 6.0 * t + 9.0 * t**2 - 18.0 * t**3 + 7.5 * t**4
    d1_mid = 2.0 + 6.0 * t - 18.0 * t**2 + 10.0 * t**3
    d2_mid = 2.0 - 12.0 * t + 10.0 * t**2
    inside = r <= 1.0
    outside = r >= 4.0
    val = np.where(inside, r**2, np.where(outside, 5.5, val_mid))
    d1 = np.where(inside, 2.0 * r, np.where(outside, 0.0, d1_mid))
    d2 = np.where(inside, 2.0, np.where(outside, 0.0, d2_mid))
    return val, d1, d2


def _phi_derivs(rho: np.ndarray):
    """Compact cutoff: rho^2 for rho <= 1, zero for rho >= 2.

    Quintic blend h(t) = 1 + 2t + t^2 - 25t^3 + 34t^4 - 13t^5 (t = rho - 1)
    matches value/slope/curvature of rho^2 at rho = 1 and vanishes to second
    order at rho = 2.  Returns derivatives up to fourth order.
    """
    rho = np.asarray(rho, dtype=float)
    t = np.clip(rho - 1.0, 0.0, 1.0)
    h = 1.0 + 2.0 * t + t**2 - 25.0 * t**3 + 34.0 * t**4 - 13.0 * t**5
    h1 = 2.0 + 2.0 * t - 75.0 * t**2 + 136.0 * t**3 - 65.0 * t**4
    h2 = 2.0 - 150.0 * t + 408.0 * t**2 - 260.0 * t**3
    h3 = -150.0 + 816.0 * t - 780.0 * t**2
    h4 = 816.0 - 1560.0 * t
    inside = rho <= 1.0
    outside = rho >= 2.0
    val = np.where(inside, rho**2, np.where(outside, 0.0, h))
    d1 = np.where(inside, 2.0 * rho, np.where(outside, 0.0, h1))
    d2 = np.where(inside, 2.0, np.where(outside, 0.0, h2))
    d3 = np.where(inside, 0.0, np.where(outside, 0.0, h3))
    d4 = np.where(inside, 0.0, np.where(outside, 0.0, h4))
    return val, d1, d2, d3, d4


class Cutoff:
    """Radial cutoff sampled (with its radial derivatives) on a grid.

    kind "compact": weight W(x) = R^2 phi(|x|/R) with phi = rho^2 inside
    rho <= 1 and phi = 0 beyond rho = 2.  kind "saturating": W(x) =
    R^2 chi(|x|/R) with chi = rho^2 inside and constant beyond rho = 4,
    curvature capped at 2.
    """

    def __init__(self, kind: str, R: float, grid):
        if kind not in ("compact", "saturating"):
            raise ValueError(f"unknown cutoff kind {kind!r}")
        if R < 8.0 * grid.dx:
            raise ValueError(f"R = {R:g} too small for the grid (dx = {grid.dx:g})")
        self.kind = kind
        self.R = float(R)
        self.grid = grid
        rho = grid.R / self.R
        if kind == "compact":
            val, d1, d2, d3, d4 = _phi_derivs(rho)
        else:
            val, d1, d2 = _chi_derivs(rho)
            d3 = np.zeros_like(val)
            d4 = np.zeros_like(val)
        self.w = self.R**2 * val            # W(x)
        self.wp = d1                        # phi'(rho)
        self.wpp = d2                       # phi''(rho)
        # ratio phi'(rho)/rho and the radial (bi)laplacians, with the exact
        # interior constants substituted where rho -> 0 would divide by zero
        inside = rho <= 1.0
        rho_safe = np.where(inside, 1.0, rho)
        self.wp_over_rho = np.where(inside, 2.0, d1 / rho_safe)
        self.lap = np.where(inside, 4.0, d2 + d1 / rho_safe)
        self.bilap = np.where(
            inside,
            0.0,
            d4 + 2.0 * d3 / rho_safe - d2 / rho_safe**2 + d1 / rho_safe**3,
        )


# ---------------------------------------------------------------------------
# variance and virial identities

def variance(f: Field) -> float:
    """int |x|^2 |u|^2 over the box; meaningless once mass reaches the boundary."""
    frac = boundary_mass_fraction(f)
    if frac > 1e-10:
        raise ValueError(
            f"boundary mass fraction {frac:.2e} exceeds 1e-10; "
            "variance is not meaningful on a wrapped field"
        )
    g = f.grid
    return float(g.dx**2 * np.sum((g.X**2 + g.Y**2) * np.abs(f.values) ** 2))


def variance_derivative(f: Field) -> float:
    """V'(t) by the momentum-flux formula 4 Im int conj(u) (x . grad u)."""
    g = f.grid
    ux, uy = spectral_gradient(f)
    integrand = np.conj(f.values) * (g.X * ux + g.Y * uy)
    return float(4.0 * g.dx**2 * np.imag(np.sum(integrand)))


def virial_rhs(f: Field) -> float:
    """The virial identity right side 8 ||grad u||^2 - (16/3) ||u||_L6^6."""
    return 8.0 * gradient_norm_sq(f) - (16.0 / 3.0) * lp_norm_p(f, 6)


def localized_variance(f: Field, cutoff: Cutoff):
    """Localized variance z_R and its first two exact time derivatives.

    With weight W(x) = R^2 phi(x/R):
      z_R   = int W |u|^2
      z'_R  = 2 Im int grad W . grad u conj(u)
      z''_R = 4 int [phi''|du_r|^2 + (phi'/rho)|du_tau|^2]
              - (1/R^2) int (bilap phi) |u|^2 - (4/3) int (lap phi) |u|^6
    Returns (z_R, zp_R, zpp_R, A_R) where A_R is z''_R minus the
    unlocalized expression 8||grad u||^2 - (16/3)||u||^6.
    """
    g = f.grid
    if cutoff.grid is not g and cutoff.grid != g:
        raise ValueError("cutoff was sampled on a different grid")
    dx2 = g.dx**2
    a2 = np.abs(f.values) ** 2
    z = float(dx2 * np.sum(cutoff.w * a2))

    ux, uy = spectral_gradient(f)
    # radial and tangential derivative components (safe at the origin,
    # where the weights carry the vanishing factors)
    r_safe = np.where(g.R == 0.0, 1.0, g.R)
    cx, cy = g.X / r_safe, g.Y / r_safe
    du_r = cx * ux + cy * uy
    du_tau = -cy * ux + cx * uy
    zp = float(
        2.0 * dx2 * np.imag(np.sum(cutoff.R * cutoff.wp * du_r * np.conj(f.values)))
    )
    a6 = np.abs(f.values) ** 6
    zpp = float(
        4.0 * dx2 * np.sum(cutoff.wpp * np.abs(du_r) ** 2
                           + cutoff.wp_over_rho * np.abs(du_tau) ** 2)
        - dx2 / cutoff.R**2 * np.sum(cutoff.bilap * a2)
        - (4.0 / 3.0) * dx2 * np.sum(cutoff.lap * a6)
    )
    A_R = zpp - virial_rhs(f)
    return z, zp, zpp, A_R


@dataclass
class VirialTrace:
    times: np.ndarray
    V: np.ndarray
    Vp_formula: np.ndarray
    Vpp_formula: np.ndarray
    Vpp_fd: np.ndarray     # NaN at the ends
    z_R: np.ndarray
    zp_R: np.ndarray
    A_R: np.ndarray


def virial_check_full(snapshots: list[Field], R: float | None = None) -> VirialTrace:
    """Per-snapshot virial quantities plus finite-difference cross-checks.

    Snapshots must be uniformly spaced in time (5 or more).  V'' by the
    formula is compared against centered second differences of V; the
    localized column uses the compact cutoff at radius R (default L/4).
    """
    if len(snapshots) < 5:
        raise ValueError("need at least 5 uniformly spaced snapshots")
    times = np.array([s.t for s in snapshots])
    dt = np.diff(times)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(dt[0], 1e-30):
        raise ValueError("snapshots are not uniformly spaced")
    g = snapshots[0].grid
    if R is None:
        R = g.L / 4.0
    cutoff = Cutoff("compact", R, g)
    V = np.array([variance(s) for s in snapshots])
    Vp = np.array([variance_derivative(s) for s in snapshots])
    Vpp = np.array([virial_rhs(s) for s in snapshots])
    Vpp_fd = np.full_like(V, np.nan)
    h = dt[0]
    Vpp_fd[1:-1] = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / h**2
    zs, zps, ars = [], [], []
    for s in snapshots:
        z, zp, _, ar = localized_variance(s, cutoff)
        zs.append(z)
        zps.append(zp)
        ars.append(ar)
    return VirialTrace(
        times=times, V=V, Vp_formula=Vp, Vpp_formula=Vpp, Vpp_fd=Vpp_fd,
        z_R=np.array(zs), zp_R=np.array(zps), A_R=np.array(ars),
    )


def write_virial_csv(trace: VirialTrace, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "V", "Vp_formula", "Vpp_formula", "Vpp_fd", "z_R", "A_R"])
        for i in range(len(trace.times)):
            writer.writerow([repr(float(v)) for v in (
                trace.times[i], trace.V[i], trace.Vp_formula[i],
                trace.Vpp_formula[i], trace.Vpp_fd[i],
                trace.z_R[i], trace.A_R[i])])


# ---------------------------------------------------------------------------
# radial symmetry and the exterior estimate

def radial_asymmetry(f: Field) -> float:
    """Sup deviation of the samples from their exact radial orbit average.

    Grid points sharing i^2 + j^2 (signed index offsets from the center) lie
    on a common circle; averaging over those orbits is an exact radial
    average for lattice data.
    """
    n = f.grid.n
    idx = np.arange(n) - n // 2
    r2 = (idx[:, None] ** 2 + idx[None, :] ** 2).ravel()
    vals = f.values.ravel()
    _, inverse = np.unique(r2, return_inverse=True)
    counts = np.bincount(inverse)
    mean_re = np.bincount(inverse, weights=vals.real) / counts
    mean_im = np.bincount(inverse, weights=vals.imag) / counts
    avg = (mean_re + 1j * mean_im)[inverse]
    return float(np.max(np.abs(vals - avg)))


def radial_gn_exterior_check(f: Field, R: float, rel_tol: float = 1e-6) -> float:
    """Empirical constant of the exterior estimate for radial fields.

    For radial u, int_{|x|>R} |u|^6 <= (c/R^2) ||u||^4 ||grad u||^2 with the
    norms restricted to the exterior.  Returns the measured ratio
    LHS * R^2 / (mass_ext^2 * grad_ext); the constant c is not pinned, only
    boundedness across families is meaningful.

    rel_tol bounds the accepted radial asymmetry relative to sup |u|.  The
    default leaves room for spectrally computed radial fields, which carry
    a few 1e-8 of FFT-roundoff anisotropy.
    """
    sup = float(np.max(np.abs(f.values)))
    if sup == 0.0:
        raise ValueError("zero field")
    if radial_asymmetry(f) > rel_tol * sup:
        raise ValueError(f"field is not radially symmetric to {rel_tol:g}")
    g = f.grid
    ext = g.R > R
    dx2 = g.dx**2
    mass_ext = float(dx2 * np.sum(np.abs(f.values[ext]) ** 2))
    if mass_ext <= 1e-28:
        raise ValueError(f"no mass outside radius {R:g}")
    ux, uy = spectral_gradient(f)
    grad_ext = float(dx2 * np.sum(np.abs(ux[ext]) ** 2 + np.abs(uy[ext]) ** 2))
    l6_ext = float(dx2 * np.sum(np.abs(f.values[ext]) ** 6))
    return l6_ext * R**2 / (mass_ext**2 * grad_ext)


# ---------------------------------------------------------------------------
# energy-gradient bounds along below-threshold trajectories

@dataclass
class BoundsMargins:
    lower: np.ndarray      # E - (1/4)||grad u||^2 >= 0
    upper: np.ndarray      # (1/2)||grad u||^2 - E >= 0
    trapping: np.ndarray   # omega - G(t) >= 0
    chained: np.ndarray    # 8(1-omega^2)||grad u||^2 - 16(1-omega^2)E >= 0

    def min_margin(self) -> float:
        return float(min(self.lower.min(), self.upper.min(),
                         self.trapping.min(), self.chained.min()))


def energy_gradient_bounds_check(rec, energy0: float, ME: float) -> BoundsMargins:
    """Margins of the two-sided energy-gradient equivalence below threshold.

    Requires ME < 1 and G(0) < 1 (the comparability constants degenerate
    otherwise).  omega = sqrt(ME) also traps G(t) from above.
    """
    G = np.asarray(rec.G)
    if not (ME < 1.0 and G[0] < 1.0):
        raise ValueError("bounds apply to below-threshold trajectories only")
    omega = np.sqrt(max(ME, 0.0))
    grad = np.asarray(rec.grad_sq)
    E = energy0 + np.asarray(rec.energy_drift) * max(abs(energy0), 1e-3)
    lower = E - 0.25 * grad
    upper = 0.5 * grad - E
    trapping = omega - G
    chained = 8.0 * (1.0 - omega**2) * grad - 16.0 * (1.0 - omega**2) * E
    return BoundsMargins(lower=lower, upper=upper, trapping=trapping, chained=chained)


# ---------------------------------------------------------------------------
# blow-up time bound from the localized variance

def blowup_time_bound(f: Field, gs, R: float, kappa: float,
                      kappa0: float = 0.1):
    """Upper bound t_b on the forward blow-up time for line data above threshold.

    For a datum on the mass-invariant scaling line with lam > 1 the scaled
    localized variance V_R = z_R / (32 E[Q] lam^2 (lam^2 - 1 - kappa))
    vanishes by t_b = V_R'(0) + sqrt(V_R'(0)^2 + 2 V_R(0)), provided the
    exterior gradient stays within the kappa budget.  Returns (t_b, info)
    with t_b None when the hypotheses are not verifiable at t = 0.
    """
    rn = renormalized(f, gs)
    if not (rn.ME < 1.0 and rn.G > 1.0):
        raise ValueError("bound applies above threshold (ME < 1, G(0) > 1)")
    lam_sq = 1.0 + np.sqrt(1.0 - rn.ME)
    lam = float(np.sqrt(lam_sq))
    if kappa >= min(lam - 1.0, kappa0):
        raise ValueError(
            f"kappa = {kappa:g} must stay below min(lam - 1, kappa0) = "
            f"{min(lam - 1.0, kappa0):g}"
        )
    g = f.grid
    ux, uy = spectral_gradient(f)
    ext = g.R >= R
    grad_ext = float(g.dx**2 * np.sum(np.abs(ux[ext]) ** 2 + np.abs(uy[ext]) ** 2))
    mass = l2_norm_sq(f)
    G_ext = float(np.sqrt(mass * grad_ext) / gs.qq_gq)
    info = {"lam": lam, "G_ext": G_ext, "kappa": kappa, "R": R}
    if G_ext > kappa:
        info["reason"] = "exterior gradient exceeds the kappa budget at t = 0"
        return None, info
    cutoff = Cutoff("compact", R, g)
    z, zp, _, _ = localized_variance(f, cutoff)
    denom = 32.0 * gs.energyQ * lam_sq * (lam_sq - 1.0 - kappa)
    V_R = z / denom
    Vp_R = zp / denom
    t_b = float(Vp_R + np.sqrt(Vp_R**2 + 2.0 * V_R))
    info.update({"z_R": z, "zp_R": zp, "V_R": V_R})
    return t_b, info


# ---------------------------------------------------------------------------
# scattering detector

@dataclass
class ScatteringReport:
    l6_decay_factor: float
    d_T2_over_H1: float
    verdict: str
    d_mid_over_H1: float
    monotone_ok: bool
    box_exit_flagged: bool
    window: tuple

    def to_json(self) -> dict:
        return {
            "l6_decay_factor": self.l6_decay_factor,
            "d_T2_over_H1": self.d_T2_over_H1,
            "verdict": self.verdict,
            "d_mid_over_H1": self.d_mid_over_H1,
            "monotone_ok": self.monotone_ok,
            "box_exit_flagged": self.box_exit_flagged,
            "window": list(self.window),
        }


def _h1_norm(f: Field) -> float:
    return float(np.sqrt(l2_norm_sq(f) + gradient_norm_sq(f)))


def asymptotic_state_residuals(snapshots: list[Field]) -> np.ndarray:
    """H1 distances d(t) = ||u(t) - e^{i t lap} phi_plus|| over the snapshots.

    phi_plus is the last snapshot pulled back by the free flow, so d at the
    final time is zero by construction; the content is how d behaves before
    that. Purely linear trajectories give d identically zero.
    """
    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots")
    g = snapshots[-1].grid
    T2 = snapshots[-1].t
    phi_plus_h = np.fft.fft2(snapshots[-1].values) * np.exp(1j * g.K2 * T2)
    out = []
    for s in snapshots:
        lin = np.fft.ifft2(phi_plus_h * np.exp(-1j * g.K2 * s.t))
        diff = Field(g, s.values - lin, s.t)
        out.append(_h1_norm(diff))
    return np.array(out)


def scattering_detect(rec, window: tuple[float, float]) -> ScatteringReport:
    """Scattering detector over [T1, T2]: L6 decay plus free-flow comparison.

    Requires a trajectory that ran to its end without blow-up, with
    snapshots covering the window.  Verdict is scatter_like iff the recorded
    int |u|^6 decays by at least 10x from its window maximum to T2, d(t) is
    decreasing within noise across the window, and d just before T2 is at
    most 5% of the initial H1 norm.
    """
    T1, T2 = window
    from .evolution import RAN_TO_T_END  # local import to avoid a cycle

    if rec.outcome != RAN_TO_T_END:
        raise ValueError(f"detector needs a completed trajectory, got {rec.outcome}")
    times = np.asarray(rec.times)
    if T2 > times[-1] + 1e-9 or T1 < times[0] - 1e-9:
        raise ValueError("window exceeds the recorded trajectory")
    snaps = [s for s in rec.snapshots if T1 - 1e-9 <= s.t <= T2 + 1e-9]
    if len(snaps) < 3:
        raise ValueError("need at least 3 snapshots inside the window")

    in_window = (times >= T1 - 1e-9) & (times <= T2 + 1e-9)
    l6 = np.asarray(rec.l6_6)[in_window]
    i_t2 = int(np.argmin(np.abs(times - T2)))
    l6_final = rec.l6_6[i_t2]
    decay = float(np.max(l6) / l6_final) if l6_final > 0.0 else np.inf

    d = asymptotic_state_residuals(snaps)
    h1_0 = np.sqrt(rec.mass0 + rec.grad_sq[0])
    noise = 1e-12 * h1_0
    monotone = bool(np.all(d[1:] <= 1.1 * d[:-1] + noise))
    d_t2 = float(d[-1] / h1_0)
    d_mid = float(d[-2] / h1_0)
    box_exit = bool(max(boundary_mass_fraction(s) for s in snaps) > 1e-6)
    ok = decay >= 10.0 and monotone and d_mid <= 0.05
    return ScatteringReport(
        l6_decay_factor=decay,
        d_T2_over_H1=d_t2,
        verdict="scatter_like" if ok else "not_scatter_like",
        d_mid_over_H1=d_mid,
        monotone_ok=monotone,
        box_exit_flagged=box_exit,
        window=(T1, T2),
    )


def write_scattering_json(report: ScatteringReport, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
