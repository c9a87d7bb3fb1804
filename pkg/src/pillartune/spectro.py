"""Polarization-resolved peak-shift synthesis and fitting.

A doublet narrower than the spectrometer resolution shows up as a single
line whose apparent peak slides sinusoidally with the detection angle: the
two lines are equal-width Lorentzians weighted by Malus's law, and the peak
of their sum moves between the low and high line.  The fit recovers the
shift law  offset + delta * (cos(2*(theta - theta0)) + 1) / 2  with
Jacobian-based uncertainties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .exciton import ExcitonParams, ExcitonState, exciton_state


class ScanInputError(ValueError):
    """Malformed polarization scan input."""


class FitError(RuntimeError):
    """The sinusoid fit failed to converge."""


@dataclass
class PolarizationScan:
    """Peak energy versus detection polarization angle.

    Angles in rad, energies in ueV relative to an arbitrary reference,
    ``sigma`` is the per-point measurement noise (broadcast from a scalar).
    """

    angles: np.ndarray
    peak_energies: np.ndarray
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        self.angles = np.asarray(self.angles, dtype=float)
        self.peak_energies = np.asarray(self.peak_energies, dtype=float)
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim == 0:
            sig = np.full(self.angles.shape, float(sig))
        elif sig.size == 0:
            sig = np.zeros(self.angles.shape)
        self.sigma = sig
        n = len(self.angles)
        if len(self.peak_energies) != n or len(self.sigma) != n:
            raise ScanInputError("angles, peak_energies and sigma must match in length")
        if n < 6:
            raise ScanInputError(f"at least 6 scan points required, got {n}")
        span = float(self.angles.max() - self.angles.min())
        # Uniform sampling of [0, pi) spans pi * (n-1)/n; accept anything that
        # covers at least one full period of the 2-theta harmonic this way.
        if span < math.pi * (1.0 - 1.0 / n) - 1e-9:
            raise ScanInputError(
                f"angles span {span:.4f} rad; need at least {math.pi * (1 - 1 / n):.4f}"
            )


@dataclass(frozen=True)
class SpectrumModel:
    """Two equal-width Lorentzians with Malus-law weights."""

    e_high: float       # ueV
    e_low: float        # ueV
    linewidth: float    # ueV FWHM
    theta0: float       # rad, polarization angle of the high-energy line

    def __post_init__(self) -> None:
        if not (self.linewidth > 0.0):
            raise ValueError("linewidth must be positive")
        if self.e_high < self.e_low:
            raise ValueError("e_high must be >= e_low")

    def amplitudes(self, theta: float) -> tuple[float, float]:
        wh = math.cos(theta - self.theta0) ** 2
        return wh, 1.0 - wh

    def intensity(self, energy, theta: float):
        wh, wl = self.amplitudes(theta)
        g = 0.5 * self.linewidth
        e = np.asarray(energy, dtype=float)
        return wh * g * g / ((e - self.e_high) ** 2 + g * g) + wl * g * g / (
            (e - self.e_low) ** 2 + g * g
        )


@dataclass(frozen=True)
class FitResult:
    delta_fss: float            # ueV, >= 0
    theta0: float               # rad in [0, pi)
    offset: float               # ueV
    residual_rms: float         # ueV
    covariance: np.ndarray      # 3x3, order (delta, theta0, offset)
    uncertainties: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "delta_fss_uev": self.delta_fss,
            "theta0_rad": self.theta0,
            "offset_uev": self.offset,
            "residual_rms_uev": self.residual_rms,
            "sigma_delta_uev": self.uncertainties[0],
            "sigma_theta0_rad": self.uncertainties[1],
            "sigma_offset_uev": self.uncertainties[2],
            "covariance": [[float(v) for v in row] for row in self.covariance],
        }


def shift_law(theta, delta: float, theta0: float, offset: float):
    """The fitted peak-shift law: offset + delta*(cos(2(theta-theta0))+1)/2."""
    th = np.asarray(theta, dtype=float)
    return offset + 0.5 * delta * (np.cos(2.0 * (th - theta0)) + 1.0)


def hwp_to_detection_angle(theta_hwp: float) -> float:
    """Detected polarization angle for half-wave-plate angle ``theta_hwp``."""
    return (2.0 * theta_hwp) % math.pi


def peak_centroid(model: SpectrumModel, theta: float) -> float:
    """Apparent peak position (ueV) of the weighted doublet at angle ``theta``.

    Exact single-line cases short-circuit; otherwise the stationary point of
    the two-Lorentzian sum is found by a bracketed Newton iteration between
    the line centres (the sum's maximum always lies there for equal widths).
    """
    wh, wl = model.amplitudes(theta)
    delta = model.e_high - model.e_low
    if delta == 0.0:
        return model.e_low
    if wl < 1e-14:
        return model.e_high
    if wh < 1e-14:
        return model.e_low

    g2 = (0.5 * model.linewidth) ** 2
    lo, hi = model.e_low, model.e_high
    e = wh * model.e_high + wl * model.e_low  # weighted-mean start

    for _ in range(200):
        d1 = e - model.e_high
        d2 = e - model.e_low
        q1 = d1 * d1 + g2
        q2 = d2 * d2 + g2
        fp = -2.0 * g2 * (wh * d1 / q1**2 + wl * d2 / q2**2)
        if fp > 0.0:
            lo = e
        else:
            hi = e
        fpp = -2.0 * g2 * (
            wh * (q1 - 4.0 * d1 * d1) / q1**3 + wl * (q2 - 4.0 * d2 * d2) / q2**3
        )
        step = -fp / fpp if fpp != 0.0 else 0.0
        e_new = e + step
        if not (lo < e_new < hi):
            e_new = 0.5 * (lo + hi)
        if abs(e_new - e) <= 1e-15 * max(model.linewidth, delta):
            return e_new
        e = e_new
    return e


def synth_polarization_scan(
    params: ExcitonParams,
    fieldvec,
    linewidth: float,
    noise_sigma: float,
    n_angles: int,
    seed: int,
) -> PolarizationScan:
    """Synthesize a scan from the exciton state at ``fieldvec`` (V/m).

    Angles are uniform over [0, pi); energies are apparent-peak positions
    relative to the low line, plus seeded Gaussian noise.
    """
    if n_angles < 6:
        raise ScanInputError("n_angles must be at least 6")
    if noise_sigma < 0.0:
        raise ScanInputError("noise_sigma must be non-negative")
    state = exciton_state(params, fieldvec)
    theta0 = state.theta0 if state.theta0 is not None else 0.0
    model = SpectrumModel(
        e_high=0.5 * state.fss,
        e_low=-0.5 * state.fss,
        linewidth=linewidth,
        theta0=theta0,
    )
    angles = np.arange(n_angles) * (math.pi / n_angles)
    clean = np.array(
        [peak_centroid(model, th) + 0.5 * state.fss for th in angles]
    )
    rng = np.random.default_rng(seed)
    noisy = clean + rng.normal(0.0, noise_sigma, size=n_angles) if noise_sigma else clean
    return PolarizationScan(
        angles=angles,
        peak_energies=noisy,
        sigma=np.full(n_angles, noise_sigma),
    )


def fit_fss_sine(scan: PolarizationScan) -> FitResult:
    """Fit the peak-shift law; returns amplitude, axis angle and offset.

    Initialisation comes from the discrete second harmonic of the angle
    series; the refined fit is nonlinear least squares with an analytic
    Jacobian.  The covariance is the Jacobian-based estimate scaled by the
    residual RMS; the amplitude is reported non-negative with the axis
    folded accordingly.
    """
    th = scan.angles
    y = scan.peak_energies
    n = len(th)
    use_weights = bool(np.all(scan.sigma > 0.0))
    w = 1.0 / scan.sigma if use_weights else np.ones(n)

    # Discrete harmonic at frequency 2 for the starting point.
    a2 = 2.0 / n * float(np.sum(y * np.cos(2.0 * th)))
    b2 = 2.0 / n * float(np.sum(y * np.sin(2.0 * th)))
    delta0 = 2.0 * math.hypot(a2, b2)
    theta0_init = 0.5 * math.atan2(b2, a2)
    offset0 = float(np.mean(y)) - 0.5 * delta0

    def resid(p):
        return w * (shift_law(th, *p) - y)

    def jac(p):
        delta, theta0, _ = p
        arg = 2.0 * (th - theta0)
        return np.column_stack(
            [
                w * 0.5 * (np.cos(arg) + 1.0),
                w * delta * np.sin(arg),
                w * np.ones(n),
            ]
        )

    result = least_squares(
        resid,
        x0=[delta0, theta0_init, offset0],
        jac=jac,
        method="lm",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=2000,
    )
    if not result.success:
        raise FitError(f"sinusoid fit did not converge: {result.message}")

    delta, theta0, offset = (float(v) for v in result.x)
    if delta < 0.0:
        delta = -delta
        theta0 += 0.5 * math.pi
        offset -= delta  # offset tracks the low line: flipping swaps the lines
    theta0 %= math.pi

    params = (delta, theta0, offset)
    j = jac(params)
    r = resid(params)
    dof = max(n - 3, 1)
    jtj = j.T @ j
    try:
        cov = np.linalg.inv(jtj) * (float(r @ r) / dof)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"singular Jacobian in covariance estimate: {exc}") from exc
    cov = 0.5 * (cov + cov.T)
    model = shift_law(th, *params)
    rms = float(np.sqrt(np.mean((model - y) ** 2)))
    sig = tuple(float(math.sqrt(max(v, 0.0))) for v in np.diag(cov))
    return FitResult(
        delta_fss=delta,
        theta0=theta0,
        offset=offset,
        residual_rms=rms,
        covariance=cov,
        uncertainties=sig,
    )


def _check_axes(axes) -> float:
    ref, second = float(axes[0]), float(axes[1])
    if abs(((second - ref) % math.pi) - 0.5 * math.pi) > 1e-9:
        raise ValueError("fixed axes must be orthogonal (theta_ref, theta_ref + pi/2)")
    return ref


def algebraic_fss(obj, axes) -> float:
    """Signed splitting: peak-energy difference along a fixed orthogonal basis.

    ``axes`` is (theta_ref, theta_ref + pi/2), normally the eigenaxes found
    at zero bias.  For an ``ExcitonState`` the closed form
    fss * cos(2*(theta_ref - theta0)) is used (zero for a degenerate state);
    for a ``PolarizationScan`` the scan is interpolated periodically at the
    two axis angles.  The sign flips when the splitting vector crosses zero.
    """
    ref = _check_axes(axes)
    if isinstance(obj, ExcitonState):
        if obj.theta0 is None:
            return 0.0
        return obj.fss * math.cos(2.0 * (ref - obj.theta0))
    if isinstance(obj, PolarizationScan):
        return _scan_value_at(obj, ref) - _scan_value_at(obj, ref + 0.5 * math.pi)
    raise TypeError(f"expected ExcitonState or PolarizationScan, got {type(obj)!r}")


def _scan_value_at(scan: PolarizationScan, theta: float) -> float:
    """Periodic (period pi) linear interpolation of the scan."""
    th = np.mod(scan.angles, math.pi)
    order = np.argsort(th, kind="stable")
    th = th[order]
    y = scan.peak_energies[order]
    x = theta % math.pi
    th_ext = np.concatenate([th, th[:1] + math.pi])
    y_ext = np.concatenate([y, y[:1]])
    if x < th_ext[0]:
        x += math.pi
    return float(np.interp(x, th_ext, y_ext))


def scan_to_csv(scan: PolarizationScan, path: str) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["angle_rad", "energy_ueV", "sigma_ueV"])
        for a, e, s in zip(scan.angles, scan.peak_energies, scan.sigma):
            out.writerow([repr(float(a)), repr(float(e)), repr(float(s))])


def scan_from_csv(path: str) -> PolarizationScan:
    import csv

    angles, energies, sigmas = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != [
            "angle_rad",
            "energy_ueV",
            "sigma_ueV",
        ]:
            raise ScanInputError(
                f"{path}: expected header angle_rad,energy_ueV,sigma_ueV"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ScanInputError(f"{path}: row {row_no} has {len(row)} fields")
            try:
                angles.append(float(row[0]))
                energies.append(float(row[1]))
                sigmas.append(float(row[2]))
            except ValueError as exc:
                raise ScanInputError(f"{path}: row {row_no}: {exc}") from exc
    return PolarizationScan(
        angles=np.array(angles),
        peak_energies=np.array(energies),
        sigma=np.array(sigmas),
    )
